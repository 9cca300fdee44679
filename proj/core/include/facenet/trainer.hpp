#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "facenet/checkpoint.hpp"
#include "facenet/data_model.hpp"
#include "facenet/evaluator.hpp"
#include "facenet/model.hpp"

namespace facenet::train {

/// Adam over a fixed parameter list. Parameters that received no gradient in
/// a step are left untouched.
class Adam {
 public:
  Adam(nn::ParamList params, double beta1, double beta2, double eps);

  void zero_grad();
  void step(double lr);

  std::int64_t t() const { return t_; }
  const nn::ParamList& params() const { return params_; }
  void save(CheckpointData& out) const;
  void load(const CheckpointData& in);

 private:
  nn::ParamList params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

/// Seed for the batch drawn at global step `step`.
std::uint64_t batch_seed(std::uint64_t seed, std::int64_t step);

class Trainer {
 public:
  Trainer(const TrainConfig& config, std::vector<data::SpectralTriplet> train_samples);

  /// One optimizer update on `batch` at learning rate `lr`. Throws
  /// NumericError naming the step and samples when the loss is not finite.
  loss::LossBreakdown train_step(const data::Batch& batch, double lr);
  /// Draws the batch for the current global step and trains on it.
  loss::LossBreakdown step();
  /// Runs the remaining steps of the current epoch.
  void train_epoch(const std::function<void(std::int64_t, const loss::LossBreakdown&)>& on_step = {});

  int steps_per_epoch() const;
  int epoch() const { return epoch_; }  // completed epochs
  std::int64_t global_step() const { return step_; }
  const TrainConfig& config() const { return config_; }
  FaceNetModel& model() { return *model_; }
  const FaceNetModel& model() const { return *model_; }
  const Adam& optimizer() const { return *optimizer_; }
  const std::vector<data::SpectralTriplet>& train_samples() const { return train_; }
  const std::map<int, int>& class_index() const { return class_of_; }

  /// Where non-finite batches are described before the error is raised.
  void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }

  CheckpointData snapshot() const;
  void save(const std::filesystem::path& path) const;
  /// Restores parameters, optimizer moments and the schedule position.
  void restore(const CheckpointData& data);
  /// Copies parameters whose names and shapes match from a weights file.
  int load_weights(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  std::vector<data::SpectralTriplet> train_;
  std::map<int, int> class_of_;
  std::unique_ptr<FaceNetModel> model_;
  std::unique_ptr<Adam> optimizer_;
  int epoch_ = 0;
  std::int64_t step_ = 0;
  std::filesystem::path dump_dir_;
};

/// Embeddings for each sample, computed in chunks of `batch_size`.
std::vector<eval::EmbeddingRecord> embed_samples(const FaceNetModel& model,
                                                 std::span<const data::SpectralTriplet* const> samples,
                                                 int batch_size = 32);

struct Evaluation {
  eval::Metrics metrics;
  std::vector<eval::RankingResult> rankings;
  bool train_on_train = false;
};

/// Query against gallery when the data has query rows, otherwise every
/// training sample against the training set.
Evaluation evaluate_model(const FaceNetModel& model, std::span<const data::SpectralTriplet> samples);

struct RunOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
  std::ostream* log = nullptr;
};

struct RunResult {
  std::filesystem::path checkpoint;
  eval::Metrics metrics;
  std::vector<std::pair<int, eval::Metrics>> history;
};

/// Full training run with periodic evaluation and checkpointing under
/// `options.out`: config.txt, loss.csv, metrics_history.csv, checkpoint.bin,
/// metrics.json and ranking.csv.
RunResult run(const TrainConfig& config, const RunOptions& options);

/// Rebuilds a model from a checkpoint.
std::unique_ptr<FaceNetModel> load_model(const std::filesystem::path& checkpoint);

/// Writes `<sample>_rgb_mask.png` and `<sample>_ni_mask.png`: the soft flare
/// mask as a colour map blended over the input. Returns the files written.
std::vector<std::filesystem::path> visualize_masks(const FaceNetModel& model,
                                                   std::span<const data::SpectralTriplet> samples,
                                                   const std::filesystem::path& out_dir, int limit = 16);

}  // namespace facenet::train
