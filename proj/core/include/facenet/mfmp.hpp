#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "facenet/backbone.hpp"
#include "facenet/pseudo_label.hpp"

/// Mutual flare mask prediction: a shared RGB/NI interaction block (FMI)
/// feeding per-spectrum mask heads, supervised image-wise by the histogram
/// pseudo-label through a small flare classifier (SMP).
namespace facenet::mfmp {

enum class MaskMode {
  channel,    // one mask value per channel and location
  broadcast,  // a single spatial map repeated over channels
};
std::string to_string(MaskMode m);
MaskMode parse_mask_mode(const std::string& text);

/// Fused RGB/NI representation, same shape as either input.
struct CommonFlareFeature {
  Var values;
};

struct FlareMask {
  Var soft;       // sigmoid output in [0, 1]
  Var binary;     // 1[soft > sigmoid(threshold)], straight-through
  Var threshold;  // learnable scalar Delta
};

/// Mask plus the residual-gated spectrum feature the mask was squashed from.
/// The gated feature is what the spectrum carries forward when FCE is off.
struct MaskPrediction {
  FlareMask mask;
  Var affine;  // B x C x (H*W)
  Var gated;   // B x C x H x W
};

struct FlareClassifierOutput {
  Var logits;  // B x 2, column 1 = flare
};

/// Channel concat -> conv 3x3, 3x3, 1x1, 3x3 (each + ReLU) -> f_C'. An
/// attention vector from adaptive average pooling, two 1x1 convs and a sigmoid
/// then gives f_att * f_C' + f_C'.
class FmiCommon {
 public:
  FmiCommon() = default;
  FmiCommon(std::int64_t channels, std::uint64_t seed);

  CommonFlareFeature operator()(const nn::FeatureMap& f_rgb, const nn::FeatureMap& f_ni) const;
  /// Attention map alone (B x C x 1 x 1), for inspection.
  Var attention(const Var& common_pre) const;
  nn::ParamList parameters(const std::string& prefix) const;

 private:
  std::int64_t channels_ = 0;
  nn::Conv2d c3a_, c3b_, c1_, c3c_;
  nn::Conv2d att_a_, att_b_;
};

/// Per-spectrum mask head (RGB and NI each own one).
class MaskHead {
 public:
  MaskHead() = default;
  MaskHead(std::int64_t channels, MaskMode mode, std::uint64_t seed);

  /// `common` is the FMI output, or the spectrum's own feature when FMI is
  /// disabled. `threshold` is the shared Delta parameter.
  MaskPrediction operator()(const CommonFlareFeature& common, const nn::FeatureMap& f_s, const Var& threshold) const;
  nn::ParamList parameters(const std::string& prefix) const;
  /// Parameters of the sigmoid squashing conv only.
  nn::ParamList squash_parameters(const std::string& prefix) const;

 private:
  std::int64_t channels_ = 0;
  MaskMode mode_ = MaskMode::channel;
  nn::Conv2d common_proj_, spectrum_proj_, squash_;
};

/// Global average of the soft mask followed by a 2-way linear layer.
class SmpClassifier {
 public:
  SmpClassifier() = default;
  SmpClassifier(std::int64_t channels, std::uint64_t seed);
  FlareClassifierOutput operator()(const FlareMask& mask) const;
  nn::ParamList parameters(const std::string& prefix) const;

 private:
  nn::Linear fc_;
};

/// Mean two-class cross-entropy between softmax(logits) and the pseudo-labels.
Var loss_flare(const FlareClassifierOutput& logits, std::span<const pseudo::FlarePseudoLabel> labels);

}  // namespace facenet::mfmp
