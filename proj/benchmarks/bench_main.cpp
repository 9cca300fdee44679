#include <benchmark/benchmark.h>

#include <random>

#include "facenet/evaluator.hpp"
#include "facenet/flare_synth.hpp"
#include "facenet/ops.hpp"
#include "facenet/pseudo_label.hpp"
#include "facenet/trainer.hpp"

using namespace facenet;

namespace {

Tensor noise(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t(shape);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

std::vector<data::SpectralTriplet> synthetic(int identities, int per_identity) {
  synth::SynthConfig c;
  c.num_identities = identities;
  c.samples_per_identity = per_identity;
  c.train_fraction = 1.0;
  c.rng_seed = 5;
  std::vector<data::SpectralTriplet> out;
  for (auto& s : synth::render_dataset(c)) out.push_back(std::move(s.triplet));
  return out;
}

// Channels and spatial size of one backbone stage: conv 3x3 stride 1.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  Var x(noise({8, c, hw, hw / 2}, 1), true);
  Var w(noise({c, c, 3, 3}, 2), true), b(noise({c}, 3), true);
  for (auto _ : state) {
    Var y = ops::conv2d(x, w, b, 1, 1);
    ops::sum(y).backward();
    benchmark::DoNotOptimize(w.grad().raw());
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({16, 64})->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMillisecond);

void BM_ComputeDelta(benchmark::State& state) {
  const auto samples = synthetic(1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(pseudo::compute_delta(samples[0].rgb));
}
BENCHMARK(BM_ComputeDelta);

// Full optimizer step at P=8, K=4 with every module on (arg 1) or the baseline (arg 0).
void BM_TrainStep(benchmark::State& state) {
  train::TrainConfig tc;
  if (state.range(0) == 0) tc.ablation = {false, false, false, false};
  tc.lr_decay_epochs.clear();
  train::Trainer trainer(tc, synthetic(8, 4));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().l_all);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_Evaluate(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d;
  std::vector<eval::EmbeddingRecord> q, g;
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<double> v(192);
    for (auto& x : v) x = d(rng);
    auto& dst = i % 5 == 0 ? q : g;
    dst.push_back({"s" + std::to_string(i), static_cast<int>(i % 50), static_cast<int>(i % 3), std::move(v)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::evaluate(eval::rank_gallery(q, g)).mAP);
}
BENCHMARK(BM_Evaluate)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
