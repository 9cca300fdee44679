// Acceptance suite: one [PASS]/[FAIL] line per criterion.
//
//   facenet_acceptance            run every criterion
//   facenet_acceptance <name>...  run the named criteria only
//   facenet_acceptance --list     print the criterion names

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eval_oracle.hpp"
#include "facenet/evaluator.hpp"
#include "facenet/fce.hpp"
#include "facenet/flare_synth.hpp"
#include "facenet/losses.hpp"
#include "facenet/mfmp.hpp"
#include "facenet/pseudo_label.hpp"
#include "facenet/train_config.hpp"
#include "facenet/trainer.hpp"
#include "test_support.hpp"

using namespace facenet;
using train::AblationFlags;
using train::TrainConfig;
using testkit::check_gradients;
using testkit::contract;
using testkit::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Report {
 public:
  void check(bool ok, const std::string& what) {
    pass_ = pass_ && ok;
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  Outcome outcome() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < notes_.size(); ++i) os << (i ? "; " : "") << notes_[i];
    if (!failures_.empty()) {
      os << (notes_.empty() ? "" : "; ") << "failed: ";
      for (std::size_t i = 0; i < failures_.size(); ++i) os << (i ? ", " : "") << failures_[i];
    }
    return {pass_, os.str()};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> notes_, failures_;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- gradients

Outcome gradient_suite() {
  constexpr double kTol = 1e-4;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  const Shape shape{2, 4, 3, 3};
  Report r;
  double worst = 0.0;
  auto record = [&](const std::string& name, const testkit::GradCheck& g) {
    worst = std::max(worst, g.max_rel_error);
    r.check(g.max_rel_error <= kTol, name + " rel " + fmt("%.2e", g.max_rel_error) + " (" + g.worst + ")");
  };

  {
    mfmp::FmiCommon fmi(4, 11);
    testkit::randomize(fmi.parameters("f"), rng);
    Var a(random_tensor(shape, rng), true), b(random_tensor(shape, rng), true);
    const Tensor w = random_tensor(shape, rng);
    std::vector<Var> in{a, b};
    for (const auto& p : fmi.parameters("f")) in.push_back(p.var);
    record("fmi_common", check_gradients(
                             [&] { return contract(fmi({a, nn::Spectrum::rgb}, {b, nn::Spectrum::ni}).values, w); }, in));
  }
  for (auto mode : {mfmp::MaskMode::channel, mfmp::MaskMode::broadcast}) {
    mfmp::MaskHead head(4, mode, 12);
    testkit::randomize(head.parameters("h"), rng);
    Var common(random_tensor(shape, rng), true), fs(random_tensor(shape, rng), true);
    Var delta(Tensor({1}, 0.1), true);
    const Tensor w = random_tensor(shape, rng);
    std::vector<Var> in{common, fs};
    for (const auto& p : head.parameters("h")) in.push_back(p.var);
    record("fmi_mask/" + mfmp::to_string(mode),
           check_gradients([&] { return contract(head({common}, {fs, nn::Spectrum::rgb}, delta).mask.soft, w); }, in));
  }
  {
    Var s(random_tensor(shape, rng), true), t(random_tensor(shape, rng), true);
    Var m(random_tensor(shape, rng, 0.05, 0.95), true);
    const Tensor w = random_tensor(shape, rng);
    record("enhance", check_gradients(
                          [&] {
                            return contract(
                                fce::enhance({s, nn::Spectrum::rgb}, {t, nn::Spectrum::ti}, m, {true, false}).values, w);
                          },
                          {s, t, m}));
  }
  {
    const std::vector<int> labels{0, 1};
    Var s1(random_tensor({2, 4}, rng), true), s2(random_tensor({2, 4}, rng), true), s3(random_tensor({2, 4}, rng), true);
    record("loss_identity", check_gradients(
                                [&] {
                                  const std::vector<Var> s{s1, s2, s3};
                                  return loss::loss_identity(s, labels);
                                },
                                {s1, s2, s3}));
  }
  {
    // Two identities with two samples each so every anchor has a positive.
    const std::vector<int> labels{0, 0, 1, 1};
    Var e1(random_tensor({4, 4}, rng), true), e2(random_tensor({4, 4}, rng), true);
    record("loss_triplet", check_gradients(
                               [&] {
                                 const std::vector<Var> e{e1, e2};
                                 return loss::loss_triplet(e, labels);
                               },
                               {e1, e2}));
  }
  for (auto red : {loss::IcReduction::per_sample, loss::IcReduction::per_batch}) {
    Var a(random_tensor({2, 4}, rng, -2, 2), true), b(random_tensor({2, 4}, rng, -2, 2), true);
    record("loss_ic/" + loss::to_string(red), check_gradients([&] { return loss::loss_ic(a, b, red); }, {a, b}));
  }
  {
    mfmp::SmpClassifier smp(4, 13);
    testkit::randomize(smp.parameters("s"), rng);
    Var soft(random_tensor(shape, rng, 0.05, 0.95), true);
    const std::vector<pseudo::FlarePseudoLabel> labels{pseudo::make_label(0.0), pseudo::make_label(0.4)};
    std::vector<Var> in{soft};
    for (const auto& p : smp.parameters("s")) in.push_back(p.var);
    record("loss_flare", check_gradients(
                             [&] {
                               mfmp::FlareMask m;
                               m.soft = soft;
                               return mfmp::loss_flare(smp(m), labels);
                             },
                             in));
  }
  const double secs = seconds_since(t0);
  r.check(secs < 60.0, "runtime " + fmt("%.1f s", secs));
  r.note("max rel error " + fmt("%.2e", worst) + " (tol 1e-4)");
  r.note("runtime " + fmt("%.1f s", secs));
  return r.outcome();
}

// ---------------------------------------------------------- loss identities

// KL(p || q) by plain summation.
double kl_scalar(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

Var one_row(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Var(Tensor({1, n}, std::move(v)));
}

Outcome loss_identities() {
  Report r;
  std::mt19937_64 rng(202);
  double ic_same = 0.0, ic_asym = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Var a(random_tensor({3, 6}, rng, -4, 4)), b(random_tensor({3, 6}, rng, -4, 4));
    for (auto red : {loss::IcReduction::per_sample, loss::IcReduction::per_batch}) {
      ic_same = std::max(ic_same, std::abs(loss::loss_ic(a, a, red).value()[0]));
      ic_asym = std::max(ic_asym, std::abs(loss::loss_ic(a, b, red).value()[0] - loss::loss_ic(b, a, red).value()[0]));
    }
  }
  r.check(ic_same <= 1e-9, "loss_ic(x,x) " + fmt("%.2e", ic_same));
  r.check(ic_asym <= 1e-12, "loss_ic symmetry " + fmt("%.2e", ic_asym));
  r.note("|loss_ic(x,x)| " + fmt("%.1e", ic_same) + ", asymmetry " + fmt("%.1e", ic_asym));

  const std::vector<int> labels{0, 1, 2, 3};
  const std::vector<Var> uniform{Var(Tensor({4, 4}, -1.25))};
  const double id = loss::loss_identity(uniform, labels).value()[0];
  r.check(std::abs(id - std::log(4.0)) <= 1e-9, "loss_identity(uniform) " + fmt("%.12f", id));
  r.note("loss_identity(uniform,C=4) " + fmt("%.12f", id));

  const double m = loss::kDefaultMargin;
  const Var same(Tensor({4, 5}, 0.4));
  const double tri = loss::batch_hard_triplet(same, std::vector<int>{0, 0, 1, 1}, m).value()[0];
  r.check(std::abs(tri - m) <= 1e-9, "triplet degenerate " + fmt("%.12f", tri));
  r.note("triplet degenerate " + fmt("%.12f", tri) + " (m " + fmt("%g", m) + ")");

  const std::vector<double> p{0.5, 0.5}, q{0.9, 0.1};
  const double oracle = std::min(kl_scalar(p, q), kl_scalar(q, p));
  const double impl = loss::loss_ic(one_row({0.0, 0.0}), one_row({std::log(0.9), std::log(0.1)})).value()[0];
  r.check(std::abs(impl - oracle) <= 1e-6, "KL example " + fmt("%.9f", impl) + " vs oracle " + fmt("%.9f", oracle));
  r.note("KL example impl " + fmt("%.6f", impl) + " oracle " + fmt("%.6f", oracle) + " (stated 0.368029; oracle " +
         "0.9 ln1.8 + 0.1 ln0.2 = " + fmt("%.7f", 0.9 * std::log(1.8) + 0.1 * std::log(0.2)) + ")");
  return r.outcome();
}

// ------------------------------------------------------------ FCE compositing

Outcome fce_compositing() {
  Report r;
  std::mt19937_64 rng(303);
  const Shape shape{2, 4, 5, 3};
  const Tensor s = random_tensor(shape, rng), t = random_tensor(shape, rng);
  const nn::FeatureMap fs{Var(s), nn::Spectrum::rgb}, ft{Var(t), nn::Spectrum::ti};

  r.check(fce::enhance(fs, ft, Var(Tensor(shape, 1.0)), {true, true}).values.value() == t, "M=1 != f_T");
  r.check(fce::enhance(fs, ft, Var(Tensor(shape, 0.0)), {true, true}).values.value() == s, "M=0 != f_S");
  r.check(fce::enhance(fs, ft, Var(random_tensor(shape, rng, 0.0, 1.0)), {false, false}).values.value() == s,
          "gate-off differs from f_S");

  // Convexity on 1000 cells, scalar oracle per cell.
  const Shape cells{1000, 1, 1, 1};
  const Tensor cs = random_tensor(cells, rng, -5, 5), ct = random_tensor(cells, rng, -5, 5);
  const Tensor cm = random_tensor(cells, rng, 0.0, 1.0);
  const Tensor y = fce::enhance({Var(cs), nn::Spectrum::ni}, {Var(ct), nn::Spectrum::ti}, Var(cm),
                                std::vector<bool>(1000, true))
                       .values.value();
  int outside = 0;
  double worst = 0.0;
  for (std::int64_t i = 0; i < 1000; ++i) {
    if (y[i] < std::min(cs[i], ct[i]) || y[i] > std::max(cs[i], ct[i])) ++outside;
    worst = std::max(worst, std::abs(y[i] - (ct[i] * cm[i] + cs[i] * (1.0 - cm[i]))));
  }
  r.check(outside == 0, std::to_string(outside) + " cells outside [min,max]");
  r.check(worst <= 1e-12, "scalar oracle gap " + fmt("%.1e", worst));
  r.note("bit-level M=1, M=0 and gate-off; 1000 cells convex, oracle gap " + fmt("%.1e", worst));
  return r.outcome();
}

// ------------------------------------------------------- pseudo-label oracle

double bright_fraction_oracle(const Image& img) {
  std::int64_t bright = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      bool any = false;
      for (int c = 0; c < img.channels; ++c) any = any || img.at(y, x, c) >= 250;
      bright += any;
    }
  return static_cast<double>(bright) / (static_cast<double>(img.height) * img.width);
}

Outcome pseudo_label_oracle() {
  Report r;
  synth::SynthConfig c;
  c.num_identities = 100;
  c.samples_per_identity = 5;
  c.flare_probability = 0.5;
  c.flare_radius_min = 0.2 * c.image_width;
  c.flare_radius_max = 0.3 * c.image_width;
  c.rng_seed = 404;
  const auto samples = synth::render_dataset(c);
  int agree_rgb = 0, agree_ni = 0, delta_mismatch = 0, flared = 0;
  for (const auto& s : samples) {
    const bool gt_rgb = s.flare && s.flare->flare_applied_rgb;
    const bool gt_ni = s.flare && s.flare->flare_applied_ni;
    flared += gt_rgb;
    const double d_rgb = pseudo::compute_delta(s.triplet.rgb), d_ni = pseudo::compute_delta(s.triplet.ni);
    agree_rgb += pseudo::flare_label(d_rgb) == gt_rgb;
    agree_ni += pseudo::flare_label(d_ni) == gt_ni;
    delta_mismatch += d_rgb != bright_fraction_oracle(s.triplet.rgb);
    delta_mismatch += d_ni != bright_fraction_oracle(s.triplet.ni);
  }
  const double n = static_cast<double>(samples.size());
  r.check(samples.size() == 500, "sample count " + std::to_string(samples.size()));
  r.check(agree_rgb / n >= 0.95, "rgb agreement " + fmt("%.3f", agree_rgb / n));
  r.check(agree_ni / n >= 0.95, "ni agreement " + fmt("%.3f", agree_ni / n));
  r.check(delta_mismatch == 0, std::to_string(delta_mismatch) + " delta mismatches");
  r.note(std::to_string(samples.size()) + " images (" + std::to_string(flared) + " flared), agreement rgb " +
         fmt("%.3f", agree_rgb / n) + " ni " + fmt("%.3f", agree_ni / n) + " (min 0.95); delta exact on " +
         std::to_string(2 * samples.size() - delta_mismatch) + "/" + std::to_string(2 * samples.size()));
  return r.outcome();
}

// ----------------------------------------------------------- evaluator oracle

Outcome evaluator_oracle() {
  Report r;
  std::mt19937_64 rng(505);
  double worst = 0.0;
  int count_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<eval::EmbeddingRecord> q, g;
    testkit::random_instance(rng, q, g);
    const auto m = eval::evaluate(eval::rank_gallery(q, g));
    const auto o = testkit::brute_force_metrics(q, g, 20);
    if (m.valid_queries != o.valid || m.dropped_queries != o.dropped) ++count_mismatch;
    worst = std::max(worst, std::abs(m.mAP - o.mAP));
    for (int k = 1; k <= 20 && o.valid > 0; ++k) worst = std::max(worst, std::abs(m.rank(k) - o.cmc.at(k)));
  }
  r.check(worst <= 1e-12, "max gap " + fmt("%.1e", worst));
  r.check(count_mismatch == 0, std::to_string(count_mismatch) + " query-count mismatches");

  const std::vector<eval::EmbeddingRecord> q{{"q", 1, 0, {0.0}}};
  const std::vector<eval::EmbeddingRecord> g{
      {"a", 1, 1, {1.0}}, {"b", 2, 1, {2.0}}, {"c", 1, 1, {3.0}}, {"d", 3, 1, {4.0}}};
  const double ap = eval::evaluate(eval::rank_gallery(q, g)).mAP;
  r.check(std::abs(ap - 0.833333) <= 1e-6, "hand AP " + fmt("%.6f", ap));
  r.note("100 instances, max gap " + fmt("%.1e", worst) + "; hand AP " + fmt("%.6f", ap));
  return r.outcome();
}

// --------------------------------------------------------------- training

std::vector<data::SpectralTriplet> train_only(const std::vector<data::SpectralTriplet>& all) {
  std::vector<data::SpectralTriplet> out;
  for (const auto& s : all)
    if (s.split == data::Split::train) out.push_back(s);
  return out;
}

Outcome overfit_check() {
  constexpr int kSteps = 300;
  constexpr int kWindow = 20;
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.num_identities = 20;
  sc.samples_per_identity = 6;
  sc.num_cameras = 2;
  sc.train_fraction = 1.0;
  sc.rng_seed = 606;
  const auto samples = synth::render_triplets(sc);

  TrainConfig tc;
  tc.variant = nn::BackboneVariant::tiny;
  tc.seed = 606;
  tc.lr = 1e-3;
  tc.lr_decay_epochs.clear();
  tc.steps_per_epoch = kSteps;
  tc.epochs = 1;
  train::Trainer trainer(tc, samples);
  std::vector<double> losses;
  trainer.train_epoch([&](std::int64_t, const loss::LossBreakdown& b) { losses.push_back(b.l_all); });
  const auto ev = train::evaluate_model(trainer.model(), samples);

  Report r;
  std::vector<double> medians;
  for (std::size_t i = 0; i + kWindow <= losses.size(); i += kWindow)
    medians.push_back(median({losses.begin() + static_cast<std::ptrdiff_t>(i),
                              losses.begin() + static_cast<std::ptrdiff_t>(i + kWindow)}));
  int rises = 0;
  for (std::size_t i = 1; i < medians.size(); ++i) rises += medians[i] >= medians[i - 1];
  const double secs = seconds_since(t0);
  r.check(losses.size() == static_cast<std::size_t>(kSteps), std::to_string(losses.size()) + " steps");
  r.check(ev.train_on_train, "evaluation was not train-on-train");
  r.check(ev.metrics.rank(1) >= 0.95, "R1 " + fmt("%.3f", ev.metrics.rank(1)));
  r.check(rises == 0, std::to_string(rises) + " non-decreasing windows");
  r.check(secs < 600.0, "runtime " + fmt("%.0f s", secs));
  std::ostringstream ms;
  for (std::size_t i = 0; i < medians.size(); ++i) ms << (i ? " " : "") << fmt("%.2f", medians[i]);
  r.note("train R1 " + fmt("%.3f", ev.metrics.rank(1)) + " (min 0.95), mAP " + fmt("%.3f", ev.metrics.mAP));
  r.note("20-step medians " + ms.str());
  r.note("runtime " + fmt("%.0f s", secs));
  return r.outcome();
}

struct AblationArm {
  std::string name;
  AblationFlags flags;
};

Outcome directional_ablation() {
  constexpr int kSteps = 400;
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto t0 = std::chrono::steady_clock::now();
  AblationFlags baseline, full, mf, no_fmi;
  baseline.use_mfmp = baseline.use_fmi = baseline.use_fce = baseline.use_ic = false;
  mf.use_ic = false;
  no_fmi.use_ic = false;
  no_fmi.use_fmi = false;
  const std::vector<AblationArm> arms{
      {"baseline", baseline}, {"full", full}, {"mfmp+fce", mf}, {"mfmp-w/o-fmi+fce", no_fmi}};

  std::map<std::string, std::vector<double>> maps;
  int train_on_train = 0;
  for (auto seed : seeds) {
    synth::SynthConfig sc;
    sc.num_identities = 40;
    sc.samples_per_identity = 8;
    sc.train_fraction = 0.5;
    sc.flare_probability = 0.5;
    sc.rng_seed = seed;
    const auto samples = synth::render_triplets(sc);
    const auto train = train_only(samples);
    for (const auto& arm : arms) {
      TrainConfig tc;
      tc.ablation = arm.flags;
      tc.seed = seed;
      tc.lr = 1e-3;
      tc.lr_decay_epochs.clear();
      tc.steps_per_epoch = kSteps;
      tc.epochs = 1;
      train::Trainer trainer(tc, train);
      trainer.train_epoch();
      const auto ev = train::evaluate_model(trainer.model(), samples);
      maps[arm.name].push_back(ev.metrics.mAP);
      train_on_train += ev.train_on_train;
      std::cout << "  seed " << seed << " " << arm.name << " mAP " << fmt("%.4f", ev.metrics.mAP) << " ("
                << fmt("%.0f s", seconds_since(t0)) << ")\n"
                << std::flush;
    }
  }
  Report r;
  std::map<std::string, double> med;
  for (const auto& [name, v] : maps) med[name] = median(v);
  const double secs = seconds_since(t0);
  r.check(train_on_train == 0, std::to_string(train_on_train) + " runs evaluated on the train split");
  r.check(med["full"] > med["baseline"],
          "full " + fmt("%.4f", med["full"]) + " <= baseline " + fmt("%.4f", med["baseline"]));
  r.check(med["mfmp+fce"] > med["mfmp-w/o-fmi+fce"], "mfmp+fce " + fmt("%.4f", med["mfmp+fce"]) +
                                                         " <= w/o-fmi " + fmt("%.4f", med["mfmp-w/o-fmi+fce"]));
  r.check(secs < 3600.0, "runtime " + fmt("%.0f s", secs));
  std::ostringstream ms;
  for (const auto& arm : arms) ms << (arm.name == "baseline" ? "" : ", ") << arm.name << " " << fmt("%.4f", med[arm.name]);
  r.note("median mAP over 3 seeds: " + ms.str());
  r.note("runtime " + fmt("%.0f s", secs));
  return r.outcome();
}

// ----------------------------------------------------------------- schedule

Outcome schedule_conformance() {
  Report r;
  const TrainConfig c;
  const std::vector<std::pair<int, double>> expect{{1, 3.5e-4},  {39, 3.5e-4}, {40, 3.5e-5},
                                                   {69, 3.5e-5}, {70, 3.5e-6}, {120, 3.5e-6}};
  std::ostringstream os;
  for (const auto& [epoch, lr] : expect) {
    const double got = train::lr_at(epoch, c);
    r.check(got == lr, "epoch " + std::to_string(epoch) + " gave " + fmt("%.17g", got));
    os << (epoch == 1 ? "" : ", ") << epoch << ":" << fmt("%g", got);
  }
  r.note("lr_at " + os.str());
  return r.outcome();
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"gradient_suite", gradient_suite},
      {"loss_identities", loss_identities},
      {"fce_compositing", fce_compositing},
      {"pseudo_label_oracle", pseudo_label_oracle},
      {"evaluator_oracle", evaluator_oracle},
      {"overfit_check", overfit_check},
      {"directional_ablation", directional_ablation},
      {"schedule_conformance", schedule_conformance},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.size() == 1 && wanted[0] == "--list") {
    for (const auto& [name, fn] : criteria()) std::cout << name << "\n";
    return 0;
  }
  for (const auto& w : wanted) {
    const bool known = std::any_of(criteria().begin(), criteria().end(), [&](const auto& c) { return c.first == w; });
    if (!known) {
      std::cerr << "unknown criterion: " << w << "\n";
      return 2;
    }
  }
  int failed = 0;
  for (const auto& [name, fn] : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << "\n" << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
