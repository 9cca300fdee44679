#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facenet/image.hpp"
#include "facenet/nn.hpp"

namespace facenet::nn {

enum class Spectrum { rgb, ni, ti };
std::string to_string(Spectrum s);

enum class BackboneVariant { tiny, resnet50 };
std::string to_string(BackboneVariant v);
BackboneVariant parse_variant(const std::string& text);

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::tiny;
  int plug_layer = 4;  // stage after which MFMP/FCE are applied, 1..4
  int embedding_dim = 64;

  void validate() const;
};

/// Per-spectrum activations, B x C x H x W.
struct FeatureMap {
  Var values;
  Spectrum spectrum = Spectrum::rgb;
};

struct StageShape {
  std::int64_t channels;
  std::int64_t stride;  // cumulative downsampling factor
};

/// Every conv in a backbone is followed by a per-sample group norm with this
/// many groups, then a ReLU.
inline constexpr int kNormGroups = 8;

/// Channel count and cumulative stride after each of the four stages.
std::array<StageShape, 4> stage_shapes(BackboneVariant variant);

/// Feature shape after `stage` (1..4) for an input of B x ? x height x width.
Shape feature_shape(BackboneVariant variant, int stage, std::int64_t batch, std::int64_t height, std::int64_t width);

/// Maps uint8 images to a B x C x H x W tensor scaled to [-1, 1].
Tensor images_to_tensor(std::span<const Image* const> images);

class Backbone;

/// Finishes the forward pass from the plug layer: the remaining stages,
/// global average pooling and the embedding projection.
class Continuation {
 public:
  Continuation(const Backbone* owner, Shape expected) : owner_(owner), expected_(std::move(expected)) {}
  /// Throws ShapeError when the feature differs in shape from the one extracted.
  Var operator()(const FeatureMap& feature) const;
  const Shape& expected_shape() const { return expected_; }

 private:
  const Backbone* owner_;
  Shape expected_;
};

struct Extraction {
  FeatureMap feature;
  Continuation continuation;
};

/// One spectrum's feature extractor. The three spectra each own a separate
/// instance; nothing is shared between them.
class Backbone {
 public:
  Backbone(Spectrum spectrum, int in_channels, const BackboneConfig& config, std::uint64_t seed);

  Extraction extract(const Var& images) const;
  Var finish(const Var& feature) const;
  /// Entire network: extract then finish.
  Var embed(const Var& images) const;

  Spectrum spectrum() const { return spectrum_; }
  const BackboneConfig& config() const { return config_; }
  int in_channels() const { return in_channels_; }
  ParamList parameters(const std::string& prefix) const;

 private:
  struct Bottleneck {
    Conv2d reduce, spatial, expand;
    GroupNorm reduce_norm, spatial_norm, expand_norm;
    std::optional<Conv2d> projection;
  };
  struct Stage {
    std::vector<Conv2d> convs;
    std::vector<GroupNorm> norms;  // one per conv
    bool max_pool = false;
    std::vector<Bottleneck> blocks;
  };

  Var run_stage(const Stage& stage, Var x) const;

  Spectrum spectrum_;
  int in_channels_;
  BackboneConfig config_;
  std::vector<Stage> stages_;
  Linear projection_;
};

/// Identity classifier on top of one branch's embedding.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int embedding_dim, int num_classes, std::uint64_t seed, double init_std = 0.01);
  /// Unnormalised class scores, B x num_classes.
  Var classify(const Var& embedding) const;
  int num_classes() const { return num_classes_; }
  ParamList parameters(const std::string& prefix) const;

 private:
  int num_classes_ = 0;
  Linear fc_;
};

}  // namespace facenet::nn
