#include "facenet/backbone.hpp"

#include <cmath>

#include "facenet/errors.hpp"
#include "facenet/ops.hpp"

namespace facenet::nn {

std::string to_string(Spectrum s) {
  switch (s) {
    case Spectrum::rgb:
      return "rgb";
    case Spectrum::ni:
      return "ni";
    case Spectrum::ti:
      return "ti";
  }
  return "rgb";
}

std::string to_string(BackboneVariant v) { return v == BackboneVariant::tiny ? "tiny" : "resnet50"; }

BackboneVariant parse_variant(const std::string& text) {
  if (text == "tiny") return BackboneVariant::tiny;
  if (text == "resnet50") return BackboneVariant::resnet50;
  throw ConfigError("unknown backbone variant '" + text + "'");
}

void BackboneConfig::validate() const {
  if (plug_layer < 1 || plug_layer > 4) throw ConfigError("plug_layer must be in 1..4");
  if (embedding_dim <= 0) throw ConfigError("embedding_dim must be positive");
}

std::array<StageShape, 4> stage_shapes(BackboneVariant variant) {
  if (variant == BackboneVariant::tiny) return {{{16, 4}, {32, 8}, {48, 16}, {64, 32}}};
  return {{{256, 4}, {512, 8}, {1024, 16}, {2048, 32}}};
}

Shape feature_shape(BackboneVariant variant, int stage, std::int64_t batch, std::int64_t height, std::int64_t width) {
  if (stage < 1 || stage > 4) throw ShapeError("stage must be in 1..4");
  // Every stage but the first halves with a padded stride-2 window.
  std::int64_t h = variant == BackboneVariant::tiny ? height / 4 : ((height - 1) / 2 + 1 - 1) / 2 + 1;
  std::int64_t w = variant == BackboneVariant::tiny ? width / 4 : ((width - 1) / 2 + 1 - 1) / 2 + 1;
  for (int s = 2; s <= stage; ++s) {
    h = (h - 1) / 2 + 1;
    w = (w - 1) / 2 + 1;
  }
  return {batch, stage_shapes(variant)[static_cast<std::size_t>(stage - 1)].channels, h, w};
}

Tensor images_to_tensor(std::span<const Image* const> images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const Image& first = *images.front();
  const std::int64_t B = static_cast<std::int64_t>(images.size()), C = first.channels, H = first.height,
                     W = first.width;
  Tensor out({B, C, H, W});
  for (std::int64_t b = 0; b < B; ++b) {
    const Image& img = *images[static_cast<std::size_t>(b)];
    if (img.channels != C || img.height != H || img.width != W) throw ShapeError("images_to_tensor: mixed image shapes");
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x)
          out.at(b, c, y, x) = img.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(c)) / 127.5 - 1.0;
  }
  return out;
}

Var Continuation::operator()(const FeatureMap& feature) const {
  if (feature.values.shape() != expected_) {
    throw ShapeError("continuation expects " + shape_string(expected_) + ", got " +
                     shape_string(feature.values.shape()));
  }
  return owner_->finish(feature.values);
}

Backbone::Backbone(Spectrum spectrum, int in_channels, const BackboneConfig& config, std::uint64_t seed)
    : spectrum_(spectrum), in_channels_(in_channels), config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto shapes = stage_shapes(config.variant);
  if (config.variant == BackboneVariant::tiny) {
    Stage s1;
    s1.convs.push_back(Conv2d::make(in_channels, shapes[0].channels, 4, 4, 0, rng));
    s1.norms.push_back(GroupNorm::make(shapes[0].channels, kNormGroups));
    stages_.push_back(std::move(s1));
    for (std::size_t i = 1; i < 4; ++i) {
      Stage s;
      s.convs.push_back(Conv2d::make(shapes[i - 1].channels, shapes[i].channels, 3, 2, 1, rng));
      s.norms.push_back(GroupNorm::make(shapes[i].channels, kNormGroups));
      stages_.push_back(std::move(s));
    }
  } else {
    // Bottleneck residual layout [3, 4, 6, 3]; the last norm of each block starts
    // with zero scale so every block is an identity map (plus projection) at init.
    const std::array<int, 4> depth{3, 4, 6, 3};
    std::int64_t cin = 64;
    for (std::size_t i = 0; i < 4; ++i) {
      Stage s;
      if (i == 0) {
        s.convs.push_back(Conv2d::make(in_channels, 64, 7, 2, 3, rng));
        s.norms.push_back(GroupNorm::make(64, kNormGroups));
        s.max_pool = true;
      }
      const std::int64_t cout = shapes[i].channels, mid = cout / 4;
      for (int b = 0; b < depth[i]; ++b) {
        const int stride = (b == 0 && i > 0) ? 2 : 1;
        Bottleneck blk{Conv2d::make(cin, mid, 1, 1, 0, rng),
                       Conv2d::make(mid, mid, 3, stride, 1, rng),
                       Conv2d::make(mid, cout, 1, 1, 0, rng),
                       GroupNorm::make(mid, kNormGroups),
                       GroupNorm::make(mid, kNormGroups),
                       GroupNorm::make(cout, kNormGroups, 0.0),
                       std::nullopt};
        if (cin != cout || stride != 1) blk.projection = Conv2d::make(cin, cout, 1, stride, 0, rng, 0.5);
        s.blocks.push_back(std::move(blk));
        cin = cout;
      }
      stages_.push_back(std::move(s));
    }
  }
  projection_ = Linear::make(shapes[3].channels, config.embedding_dim, rng,
                             std::sqrt(1.0 / static_cast<double>(shapes[3].channels)));
}

Var Backbone::run_stage(const Stage& stage, Var x) const {
  for (std::size_t i = 0; i < stage.convs.size(); ++i) x = ops::relu(stage.norms[i](stage.convs[i](x)));
  if (stage.max_pool) x = ops::max_pool2d(x, 3, 2, 1);
  for (const auto& blk : stage.blocks) {
    Var y = ops::relu(blk.reduce_norm(blk.reduce(x)));
    y = ops::relu(blk.spatial_norm(blk.spatial(y)));
    y = blk.expand_norm(blk.expand(y));
    x = ops::relu(ops::add(y, blk.projection ? (*blk.projection)(x) : x));
  }
  return x;
}

Extraction Backbone::extract(const Var& images) const {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != in_channels_) {
    throw ShapeError(to_string(spectrum_) + " backbone expects B x " + std::to_string(in_channels_) +
                     " x H x W input, got " + shape_string(s));
  }
  Var x = images;
  for (int i = 0; i < config_.plug_layer; ++i) x = run_stage(stages_[static_cast<std::size_t>(i)], x);
  Shape shape = x.shape();
  return {FeatureMap{x, spectrum_}, Continuation(this, std::move(shape))};
}

Var Backbone::finish(const Var& feature) const {
  Var x = feature;
  for (int i = config_.plug_layer; i < 4; ++i) x = run_stage(stages_[static_cast<std::size_t>(i)], x);
  x = ops::global_avg_pool(x);
  x = ops::reshape(x, {x.shape()[0], x.shape()[1]});
  return projection_(x);
}

Var Backbone::embed(const Var& images) const {
  auto ex = extract(images);
  return ex.continuation(ex.feature);
}

ParamList Backbone::parameters(const std::string& prefix) const {
  ParamList out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string sp = prefix + ".stage" + std::to_string(i + 1);
    const auto& st = stages_[i];
    for (std::size_t c = 0; c < st.convs.size(); ++c) {
      st.convs[c].collect(sp + ".conv" + std::to_string(c), out);
      st.norms[c].collect(sp + ".norm" + std::to_string(c), out);
    }
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      const std::string bp = sp + ".block" + std::to_string(b);
      st.blocks[b].reduce.collect(bp + ".reduce", out);
      st.blocks[b].spatial.collect(bp + ".spatial", out);
      st.blocks[b].expand.collect(bp + ".expand", out);
      st.blocks[b].reduce_norm.collect(bp + ".reduce_norm", out);
      st.blocks[b].spatial_norm.collect(bp + ".spatial_norm", out);
      st.blocks[b].expand_norm.collect(bp + ".expand_norm", out);
      if (st.blocks[b].projection) st.blocks[b].projection->collect(bp + ".projection", out);
    }
  }
  projection_.collect(prefix + ".embed", out);
  return out;
}

ClassifierHead::ClassifierHead(int embedding_dim, int num_classes, std::uint64_t seed, double init_std)
    : num_classes_(num_classes) {
  if (num_classes <= 0) throw ConfigError("classifier needs at least one class");
  Rng rng(seed);
  fc_ = Linear::make(embedding_dim, num_classes, rng, init_std);
}

Var ClassifierHead::classify(const Var& embedding) const { return fc_(embedding); }

ParamList ClassifierHead::parameters(const std::string& prefix) const {
  ParamList out;
  fc_.collect(prefix, out);
  return out;
}

}  // namespace facenet::nn
