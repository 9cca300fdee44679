#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facenet/backbone.hpp"
#include "facenet/data_model.hpp"
#include "facenet/fce.hpp"
#include "facenet/losses.hpp"
#include "facenet/mfmp.hpp"
#include "facenet/pseudo_label.hpp"
#include "facenet/train_config.hpp"

namespace facenet::train {

/// Network-ready view of a batch of triplets.
struct PreparedBatch {
  Tensor rgb, ni, ti;
  std::vector<int> labels;  // classifier indices; -1 when unknown (evaluation)
  std::vector<pseudo::FlarePseudoLabel> flare_rgb, flare_ni;
  std::vector<bool> gate;  // per-sample FCE gate
  std::vector<std::string> sample_ids;
};

/// Builds input tensors and histogram pseudo-labels. `flips[i]` mirrors all
/// three spectra of sample i together; pass an empty vector for no flips.
PreparedBatch prepare_batch(std::span<const data::SpectralTriplet* const> samples, std::span<const int> labels,
                            const std::vector<bool>& flips, double bar);

struct ForwardOutput {
  std::array<Var, 3> embeddings;  // rgb, ni, ti
  std::array<Var, 3> scores;
  std::optional<mfmp::MaskPrediction> mask_rgb, mask_ni;
  std::optional<mfmp::FlareClassifierOutput> flare_rgb, flare_ni;
};

/// Three-branch network with MFMP, FCE and the loss stack wired per the
/// ablation switches in the config.
class FaceNetModel {
 public:
  FaceNetModel(const TrainConfig& config, int num_classes);
  FaceNetModel(const FaceNetModel&) = delete;
  FaceNetModel& operator=(const FaceNetModel&) = delete;

  ForwardOutput forward(const PreparedBatch& batch) const;
  loss::LossTerms losses(const ForwardOutput& out, const PreparedBatch& batch) const;

  /// Concatenated rgb|ni|ti embeddings, B x 3D, computed without recording.
  Tensor embed(const PreparedBatch& batch) const;

  /// Every parameter in a fixed order.
  nn::ParamList parameters() const;
  /// Parameters of the enabled components only.
  nn::ParamList trainable_parameters() const;

  const TrainConfig& config() const { return config_; }
  int num_classes() const { return num_classes_; }
  const Var& threshold() const { return threshold_; }

 private:
  TrainConfig config_;
  int num_classes_;
  nn::Backbone rgb_, ni_, ti_;
  nn::ClassifierHead cls_rgb_, cls_ni_, cls_ti_;
  mfmp::FmiCommon fmi_;
  mfmp::MaskHead head_rgb_, head_ni_;
  mfmp::SmpClassifier smp_rgb_, smp_ni_;
  Var threshold_;
};

/// Order-independent digest of parameter values, for change detection.
std::uint64_t parameter_hash(const nn::ParamList& params);

}  // namespace facenet::train
