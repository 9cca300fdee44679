#include "facenet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "facenet/errors.hpp"
#include "facenet/ops.hpp"

namespace facenet::train {

namespace fs = std::filesystem;

Adam::Adam(nn::ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& var = params_[i].var;
    if (!var.has_grad()) continue;
    const double* g = var.grad().raw();
    double* w = var.value_mut().raw();
    double* m = m_[i].raw();
    double* v = v_[i].raw();
    const auto n = var.value().numel();
    for (std::int64_t k = 0; k < n; ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

void Adam::save(CheckpointData& out) const {
  out.adam_t = t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.tensors.emplace_back("adam.m/" + params_[i].name, m_[i]);
    out.tensors.emplace_back("adam.v/" + params_[i].name, v_[i]);
  }
}

void Adam::load(const CheckpointData& in) {
  t_ = in.adam_t;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor* m = in.find("adam.m/" + params_[i].name);
    const Tensor* v = in.find("adam.v/" + params_[i].name);
    if (!m || !v || m->shape() != m_[i].shape() || v->shape() != v_[i].shape()) {
      throw IngestionError("checkpoint lacks optimizer state for " + params_[i].name);
    }
    m_[i] = *m;
    v_[i] = *v;
  }
}

std::uint64_t batch_seed(std::uint64_t seed, std::int64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), 0x5eedu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

namespace {

void copy_params(nn::ParamList params, const CheckpointData& data) {
  for (auto& p : params) {
    const Tensor* t = data.find("param/" + p.name);
    if (!t) throw IngestionError("checkpoint lacks parameter " + p.name);
    if (t->shape() != p.var.shape()) {
      throw IngestionError("checkpoint parameter " + p.name + " has shape " + shape_string(t->shape()) +
                           ", expected " + shape_string(p.var.shape()));
    }
    p.var.value_mut() = *t;
  }
}

TrainConfig config_from(const CheckpointData& data) {
  return parse_train_config(KeyValueFile::parse(data.config_text, "checkpoint"));
}

std::string joined_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : ",") + id;
  return s;
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, std::vector<data::SpectralTriplet> train_samples)
    : config_(config), train_(std::move(train_samples)) {
  config_.validate();
  if (train_.empty()) throw ValidationError("no training samples");
  std::set<int> ids;
  for (const auto& s : train_) {
    if (s.split != data::Split::train) throw ValidationError("sample " + s.sample_id + " is not a training sample");
    ids.insert(s.identity);
  }
  if (static_cast<int>(ids.size()) < 2) throw ValidationError("training needs at least two identities");
  for (int id : ids) class_of_.emplace(id, static_cast<int>(class_of_.size()));
  model_ = std::make_unique<FaceNetModel>(config_, static_cast<int>(class_of_.size()));
  if (!config_.init_weights.empty()) load_weights(config_.init_weights);
  optimizer_ = std::make_unique<Adam>(model_->trainable_parameters(), config_.beta1, config_.beta2, config_.adam_eps);
}

int Trainer::steps_per_epoch() const {
  if (config_.steps_per_epoch > 0) return config_.steps_per_epoch;
  const auto per_batch = static_cast<std::size_t>(config_.P) * static_cast<std::size_t>(config_.K);
  return static_cast<int>((train_.size() + per_batch - 1) / per_batch);
}

loss::LossBreakdown Trainer::train_step(const data::Batch& batch, double lr) {
  std::vector<const data::SpectralTriplet*> samples;
  std::vector<int> labels;
  for (const auto& t : batch.triplets) {
    const auto it = class_of_.find(t.identity);
    if (it == class_of_.end()) throw ValidationError("sample " + t.sample_id + " has an identity unseen in training");
    samples.push_back(&t);
    labels.push_back(it->second);
  }
  std::mt19937_64 rng(batch_seed(config_.seed, step_) ^ 0xf11bULL);
  std::bernoulli_distribution coin(config_.flip_probability);
  std::vector<bool> flips;
  for (std::size_t i = 0; i < samples.size(); ++i) flips.push_back(coin(rng));

  const auto prepared = prepare_batch(samples, labels, flips, config_.flare_bar);
  for (auto& p : model_->parameters()) p.var.zero_grad();
  const auto out = model_->forward(prepared);
  auto [total, breakdown] = loss::combine(model_->losses(out, prepared), config_.weights);

  auto fail = [&](const std::string& what) {
    std::ostringstream msg;
    msg << what << " at step " << step_ << " (l_id=" << breakdown.l_id << " l_tri=" << breakdown.l_tri
        << " l_f=" << breakdown.l_f << " l_ic=" << breakdown.l_ic << "); batch: " << joined_ids(prepared.sample_ids);
    if (!dump_dir_.empty()) {
      fs::create_directories(dump_dir_);
      std::ofstream(dump_dir_ / ("nonfinite_step" + std::to_string(step_) + ".txt")) << msg.str() << '\n';
    }
    throw NumericError(msg.str());
  };
  if (!std::isfinite(breakdown.l_all)) fail("non-finite loss");
  if (total.requires_grad()) total.backward();
  for (const auto& p : optimizer_->params()) {
    if (p.var.has_grad() && !p.var.grad().all_finite()) fail("non-finite gradient for " + p.name);
  }
  optimizer_->step(lr);
  ++step_;
  return breakdown;
}

loss::LossBreakdown Trainer::step() {
  const auto batch = data::sample_pk_batch(train_, config_.P, config_.K, batch_seed(config_.seed, step_));
  return train_step(batch, lr_at(epoch_ + 1, config_));
}

void Trainer::train_epoch(const std::function<void(std::int64_t, const loss::LossBreakdown&)>& on_step) {
  const std::int64_t end = static_cast<std::int64_t>(epoch_ + 1) * steps_per_epoch();
  while (step_ < end) {
    const auto b = step();
    if (on_step) on_step(step_, b);
  }
  ++epoch_;
}

CheckpointData Trainer::snapshot() const {
  CheckpointData data;
  data.config_text = to_key_values(config_).serialize();
  data.num_classes = model_->num_classes();
  data.epoch = epoch_;
  data.step = step_;
  for (const auto& p : model_->parameters()) data.tensors.emplace_back("param/" + p.name, p.var.value());
  optimizer_->save(data);
  return data;
}

void Trainer::save(const fs::path& path) const { write_checkpoint(path, snapshot()); }

void Trainer::restore(const CheckpointData& data) {
  if (data.num_classes != model_->num_classes()) {
    throw IngestionError("checkpoint has " + std::to_string(data.num_classes) + " classes, training data has " +
                         std::to_string(model_->num_classes()));
  }
  copy_params(model_->parameters(), data);
  optimizer_->load(data);
  epoch_ = static_cast<int>(data.epoch);
  step_ = data.step;
}

int Trainer::load_weights(const fs::path& path) {
  const auto data = read_checkpoint(path);
  int copied = 0;
  for (auto& p : model_->parameters()) {
    const Tensor* t = data.find("param/" + p.name);
    if (t && t->shape() == p.var.shape()) {
      p.var.value_mut() = *t;
      ++copied;
    }
  }
  return copied;
}

std::vector<eval::EmbeddingRecord> embed_samples(const FaceNetModel& model,
                                                 std::span<const data::SpectralTriplet* const> samples,
                                                 int batch_size) {
  std::vector<eval::EmbeddingRecord> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto chunk = samples.subspan(start, std::min<std::size_t>(batch_size, samples.size() - start));
    const auto prepared = prepare_batch(chunk, {}, {}, model.config().flare_bar);
    const Tensor e = model.embed(prepared);
    const auto d = e.dim(1);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      eval::EmbeddingRecord r;
      r.sample_id = chunk[i]->sample_id;
      r.identity = chunk[i]->identity;
      r.camera = chunk[i]->camera;
      r.vector.assign(e.raw() + static_cast<std::int64_t>(i) * d, e.raw() + static_cast<std::int64_t>(i + 1) * d);
      out.push_back(std::move(r));
    }
  }
  return out;
}

Evaluation evaluate_model(const FaceNetModel& model, std::span<const data::SpectralTriplet> samples) {
  const auto split = data::make_split(samples);
  std::vector<const data::SpectralTriplet*> queries, gallery;
  Evaluation result;
  if (!split.query_samples.empty()) {
    std::set<std::string> seen;
    for (const auto& s : samples) {
      if (s.split == data::Split::query) queries.push_back(&s);
      if (s.split == data::Split::gallery && seen.insert(s.sample_id).second) gallery.push_back(&s);
    }
  } else {
    result.train_on_train = true;
    for (const auto& s : samples) {
      if (s.split == data::Split::train) gallery.push_back(&s);
    }
    queries = gallery;
  }
  if (gallery.empty()) throw ValidationError("nothing to evaluate: empty gallery");
  const auto g = embed_samples(model, gallery);
  std::vector<eval::EmbeddingRecord> q;
  if (result.train_on_train) {
    q = g;
  } else {
    q = embed_samples(model, queries);
  }
  result.rankings = eval::rank_gallery(q, g);
  result.metrics = eval::evaluate(result.rankings);
  return result;
}

namespace {

void log_line(const RunOptions& options, const std::string& line) {
  if (options.log) *options.log << line << std::endl;
}

void prepare_loss_csv(const fs::path& path, std::int64_t keep_through_step, bool fresh) {
  std::vector<std::string> rows;
  if (!fresh && fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= keep_through_step) rows.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  out << "step,l_id,l_tri,l_f,l_ic,l_all\n";
  for (const auto& r : rows) out << r << '\n';
}

}  // namespace

RunResult run(const TrainConfig& requested, const RunOptions& options) {
  fs::create_directories(options.out);
  TrainConfig config = requested;
  std::optional<CheckpointData> resumed;
  if (options.resume) {
    resumed = read_checkpoint(*options.resume);
    config = config_from(*resumed);
    config.epochs = requested.epochs;
  }
  config.validate();

  const auto samples = data::load_manifest(options.data, {config.input_height, config.input_width});
  data::make_split(samples);
  std::vector<data::SpectralTriplet> train_samples;
  for (const auto& s : samples) {
    if (s.split == data::Split::train) train_samples.push_back(s);
  }
  Trainer trainer(config, std::move(train_samples));
  trainer.set_dump_dir(options.out / "diagnostics");
  if (resumed) {
    trainer.restore(*resumed);
    log_line(options, "resumed at epoch " + std::to_string(trainer.epoch()) + ", step " +
                          std::to_string(trainer.global_step()));
  }
  {
    std::ofstream(options.out / "config.txt") << to_key_values(config).serialize();
  }

  const auto loss_path = options.out / "loss.csv";
  const auto history_path = options.out / "metrics_history.csv";
  prepare_loss_csv(loss_path, trainer.global_step(), !resumed.has_value());
  if (!resumed || !fs::exists(history_path)) std::ofstream(history_path) << "epoch,mAP,R1,R5,R10\n";

  RunResult result;
  result.checkpoint = options.out / "checkpoint.bin";
  std::optional<Evaluation> last;
  std::ofstream loss_csv(loss_path, std::ios::app);
  loss_csv.precision(10);
  for (int e = trainer.epoch() + 1; e <= config.epochs; ++e) {
    trainer.train_epoch([&](std::int64_t step, const loss::LossBreakdown& b) {
      loss_csv << step << ',' << b.l_id << ',' << b.l_tri << ',' << b.l_f << ',' << b.l_ic << ',' << b.l_all << '\n';
    });
    loss_csv.flush();
    trainer.save(result.checkpoint);
    if (e % config.eval_every == 0 || e == config.epochs) {
      last = evaluate_model(trainer.model(), samples);
      const auto& m = last->metrics;
      result.history.emplace_back(e, m);
      std::ofstream(history_path, std::ios::app)
          << e << ',' << m.mAP << ',' << m.rank(1) << ',' << m.rank(5) << ',' << m.rank(10) << '\n';
      std::ostringstream line;
      line << "epoch " << e << " lr " << lr_at(e, config) << " mAP " << m.mAP << " R1 " << m.rank(1);
      log_line(options, line.str());
    }
  }
  if (!last) {
    last = evaluate_model(trainer.model(), samples);
    if (!fs::exists(result.checkpoint)) trainer.save(result.checkpoint);
  }
  result.metrics = last->metrics;
  eval::write_metrics_json(options.out / "metrics.json", result.metrics);
  eval::write_ranking_csv(options.out / "ranking.csv", last->rankings);
  return result;
}

std::unique_ptr<FaceNetModel> load_model(const fs::path& checkpoint) {
  const auto data = read_checkpoint(checkpoint);
  auto model = std::make_unique<FaceNetModel>(config_from(data), static_cast<int>(data.num_classes));
  copy_params(model->parameters(), data);
  return model;
}

namespace {

Image overlay(const Image& base, const Tensor& soft, std::int64_t b) {
  const auto c = soft.dim(1), h = soft.dim(2), w = soft.dim(3);
  cv::Mat heat(static_cast<int>(h), static_cast<int>(w), CV_32F);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::int64_t k = 0; k < c; ++k) s += soft.at(b, k, y, x);
      heat.at<float>(static_cast<int>(y), static_cast<int>(x)) = static_cast<float>(s / static_cast<double>(c));
    }
  }
  cv::Mat up, heat8, colour;
  cv::resize(heat, up, cv::Size(base.width, base.height), 0, 0, cv::INTER_LINEAR);
  up.convertTo(heat8, CV_8U, 255.0);
  cv::applyColorMap(heat8, colour, cv::COLORMAP_JET);  // BGR
  Image out(base.height, base.width, 3);
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      const auto px = colour.at<cv::Vec3b>(y, x);
      for (int k = 0; k < 3; ++k) {
        const int src = base.at(y, x, base.channels == 3 ? k : 0);
        const int hm = px[2 - k];
        out.at(y, x, k) = static_cast<std::uint8_t>((src + hm + 1) / 2);
      }
    }
  }
  return out;
}

}  // namespace

std::vector<fs::path> visualize_masks(const FaceNetModel& model, std::span<const data::SpectralTriplet> samples,
                                      const fs::path& out_dir, int limit) {
  if (!model.config().ablation.use_mfmp) throw ConfigError("visualize-masks needs a model trained with use_mfmp");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  std::set<std::string> seen;
  std::vector<const data::SpectralTriplet*> chosen;
  for (const auto& s : samples) {
    if (static_cast<int>(chosen.size()) >= limit) break;
    if (seen.insert(s.sample_id).second) chosen.push_back(&s);
  }
  for (const auto* s : chosen) {
    const std::vector<const data::SpectralTriplet*> one{s};
    const auto prepared = prepare_batch(one, {}, {}, model.config().flare_bar);
    NoGradGuard guard;
    const auto out = model.forward(prepared);
    const auto rgb = out_dir / (s->sample_id + "_rgb_mask.png");
    const auto ni = out_dir / (s->sample_id + "_ni_mask.png");
    write_image(rgb, overlay(s->rgb, out.mask_rgb->mask.soft.value(), 0));
    write_image(ni, overlay(s->ni, out.mask_ni->mask.soft.value(), 0));
    written.push_back(rgb);
    written.push_back(ni);
  }
  return written;
}

}  // namespace facenet::train
