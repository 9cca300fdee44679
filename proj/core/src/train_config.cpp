#include "facenet/train_config.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "facenet/errors.hpp"

namespace facenet::train {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr_decay_factor must be in (0,1]");
  for (std::size_t i = 1; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) throw ConfigError("lr_decay_epochs must be increasing");
  }
  if (P < 2) throw ConfigError("P must be >= 2 so every anchor has a negative");
  if (K < 2) throw ConfigError("K must be >= 2 so every anchor has a positive");
  if (margin < 0.0) throw ConfigError("margin must be non-negative");
  backbone().validate();
  if (ablation.use_fmi && !ablation.use_mfmp) throw ConfigError("use_fmi requires use_mfmp");
  if (ablation.use_fce && !ablation.use_mfmp) throw ConfigError("use_fce requires use_mfmp (it consumes the mask)");
  if (input_height < 32 || input_width < 32) throw ConfigError("input size too small");
  if (!(flare_bar >= 0.0 && flare_bar <= 1.0)) throw ConfigError("flare_bar must be in [0,1]");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) throw ConfigError("flip_probability must be in [0,1]");
  if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("invalid integer list '" + text + "'");
    }
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

TrainConfig parse_train_config(const KeyValueFile& kv) {
  kv.reject_unknown({"epochs",         "lr",           "lr_decay_epochs", "lr_decay_factor", "P",
                     "K",              "margin",       "plug_layer",      "use_mfmp",        "use_fmi",
                     "use_fce",        "use_ic",       "seed",            "fce_mask_mode",   "ic_reduction",
                     "variant",        "embedding_dim", "input_height",   "input_width",     "mask_mode",
                     "flare_bar",      "flip_probability", "beta1",       "beta2",           "adam_eps",
                     "weight_id",      "weight_tri",   "weight_f",        "weight_ic",       "steps_per_epoch",
                     "eval_every",     "init_weights"});
  TrainConfig c;
  kv.read("epochs", c.epochs);
  kv.read("lr", c.lr);
  if (kv.has("lr_decay_epochs")) {
    std::string s;
    kv.read("lr_decay_epochs", s);
    c.lr_decay_epochs = s.empty() ? std::vector<int>{} : parse_int_list(s);
  }
  kv.read("lr_decay_factor", c.lr_decay_factor);
  kv.read("P", c.P);
  kv.read("K", c.K);
  kv.read("margin", c.margin);
  kv.read("plug_layer", c.plug_layer);
  kv.read("use_mfmp", c.ablation.use_mfmp);
  kv.read("use_fmi", c.ablation.use_fmi);
  kv.read("use_fce", c.ablation.use_fce);
  kv.read("use_ic", c.ablation.use_ic);
  kv.read("seed", c.seed);
  std::string text;
  if (kv.has("fce_mask_mode")) {
    kv.read("fce_mask_mode", text);
    c.fce_mask_mode = fce::parse_mask_mode(text);
  }
  if (kv.has("ic_reduction")) {
    kv.read("ic_reduction", text);
    try {
      c.ic_reduction = loss::parse_ic_reduction(text);
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
  }
  if (kv.has("variant")) {
    kv.read("variant", text);
    c.variant = nn::parse_variant(text);
  }
  kv.read("embedding_dim", c.embedding_dim);
  kv.read("input_height", c.input_height);
  kv.read("input_width", c.input_width);
  if (kv.has("mask_mode")) {
    kv.read("mask_mode", text);
    c.mask_mode = mfmp::parse_mask_mode(text);
  }
  kv.read("flare_bar", c.flare_bar);
  kv.read("flip_probability", c.flip_probability);
  kv.read("beta1", c.beta1);
  kv.read("beta2", c.beta2);
  kv.read("adam_eps", c.adam_eps);
  kv.read("weight_id", c.weights.id);
  kv.read("weight_tri", c.weights.tri);
  kv.read("weight_f", c.weights.f);
  kv.read("weight_ic", c.weights.ic);
  kv.read("steps_per_epoch", c.steps_per_epoch);
  kv.read("eval_every", c.eval_every);
  kv.read("init_weights", c.init_weights);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) { return parse_train_config(KeyValueFile::load(path)); }

KeyValueFile to_key_values(const TrainConfig& c) {
  KeyValueFile kv;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.set("epochs", std::to_string(c.epochs));
  kv.set("lr", format_double(c.lr));
  std::string decay;
  for (std::size_t i = 0; i < c.lr_decay_epochs.size(); ++i) {
    if (i) decay += ',';
    decay += std::to_string(c.lr_decay_epochs[i]);
  }
  kv.set("lr_decay_epochs", decay);
  kv.set("lr_decay_factor", format_double(c.lr_decay_factor));
  kv.set("P", std::to_string(c.P));
  kv.set("K", std::to_string(c.K));
  kv.set("margin", format_double(c.margin));
  kv.set("plug_layer", std::to_string(c.plug_layer));
  kv.set("use_mfmp", b(c.ablation.use_mfmp));
  kv.set("use_fmi", b(c.ablation.use_fmi));
  kv.set("use_fce", b(c.ablation.use_fce));
  kv.set("use_ic", b(c.ablation.use_ic));
  kv.set("seed", std::to_string(c.seed));
  kv.set("fce_mask_mode", fce::to_string(c.fce_mask_mode));
  kv.set("ic_reduction", loss::to_string(c.ic_reduction));
  kv.set("variant", nn::to_string(c.variant));
  kv.set("embedding_dim", std::to_string(c.embedding_dim));
  kv.set("input_height", std::to_string(c.input_height));
  kv.set("input_width", std::to_string(c.input_width));
  kv.set("mask_mode", mfmp::to_string(c.mask_mode));
  kv.set("flare_bar", format_double(c.flare_bar));
  kv.set("flip_probability", format_double(c.flip_probability));
  kv.set("beta1", format_double(c.beta1));
  kv.set("beta2", format_double(c.beta2));
  kv.set("adam_eps", format_double(c.adam_eps));
  kv.set("weight_id", format_double(c.weights.id));
  kv.set("weight_tri", format_double(c.weights.tri));
  kv.set("weight_f", format_double(c.weights.f));
  kv.set("weight_ic", format_double(c.weights.ic));
  kv.set("steps_per_epoch", std::to_string(c.steps_per_epoch));
  kv.set("eval_every", std::to_string(c.eval_every));
  if (!c.init_weights.empty()) kv.set("init_weights", c.init_weights);
  return kv;
}

double lr_at(int epoch, const TrainConfig& config) {
  int n = 0;
  for (int e : config.lr_decay_epochs)
    if (epoch >= e) ++n;
  // Dividing by an exact power of ten keeps 3.5e-4 -> 3.5e-5 -> 3.5e-6 exact.
  return config.lr / std::pow(1.0 / config.lr_decay_factor, n);
}

}  // namespace facenet::train
