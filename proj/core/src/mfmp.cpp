#include "facenet/mfmp.hpp"

#include "facenet/errors.hpp"
#include "facenet/losses.hpp"
#include "facenet/ops.hpp"

namespace facenet::mfmp {

std::string to_string(MaskMode m) { return m == MaskMode::channel ? "channel" : "broadcast"; }

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "channel") return MaskMode::channel;
  if (text == "broadcast") return MaskMode::broadcast;
  throw ConfigError("unknown mask mode '" + text + "'");
}

FmiCommon::FmiCommon(std::int64_t channels, std::uint64_t seed) : channels_(channels) {
  nn::Rng rng(seed);
  c3a_ = nn::Conv2d::make(2 * channels, channels, 3, 1, 1, rng, 0.5);
  c3b_ = nn::Conv2d::make(channels, channels, 3, 1, 1, rng, 0.5);
  c1_ = nn::Conv2d::make(channels, channels, 1, 1, 0, rng, 0.5);
  c3c_ = nn::Conv2d::make(channels, channels, 3, 1, 1, rng, 0.5);
  att_a_ = nn::Conv2d::make(channels, channels, 1, 1, 0, rng, 0.5);
  att_b_ = nn::Conv2d::make(channels, channels, 1, 1, 0, rng, 0.5);
}

Var FmiCommon::attention(const Var& common_pre) const {
  Var a = ops::global_avg_pool(common_pre);
  a = ops::relu(att_a_(a));
  return ops::sigmoid(att_b_(a));
}

CommonFlareFeature FmiCommon::operator()(const nn::FeatureMap& f_rgb, const nn::FeatureMap& f_ni) const {
  if (f_rgb.values.shape() != f_ni.values.shape()) {
    throw ShapeError("fmi_common: RGB " + shape_string(f_rgb.values.shape()) + " vs NI " +
                     shape_string(f_ni.values.shape()));
  }
  if (f_rgb.values.shape()[1] != channels_) throw ShapeError("fmi_common: channel count mismatch");
  Var x = ops::concat1(f_rgb.values, f_ni.values);
  x = ops::relu(c3a_(x));
  x = ops::relu(c3b_(x));
  x = ops::relu(c1_(x));
  x = ops::relu(c3c_(x));
  const Var att = attention(x);
  return {ops::add(ops::mul(x, att), x)};
}

nn::ParamList FmiCommon::parameters(const std::string& prefix) const {
  nn::ParamList out;
  c3a_.collect(prefix + ".conv3a", out);
  c3b_.collect(prefix + ".conv3b", out);
  c1_.collect(prefix + ".conv1", out);
  c3c_.collect(prefix + ".conv3c", out);
  att_a_.collect(prefix + ".att_a", out);
  att_b_.collect(prefix + ".att_b", out);
  return out;
}

namespace {
constexpr double kInitialSquashBias = -2.0;
}  // namespace

MaskHead::MaskHead(std::int64_t channels, MaskMode mode, std::uint64_t seed) : channels_(channels), mode_(mode) {
  nn::Rng rng(seed);
  common_proj_ = nn::Conv2d::make(channels, channels, 1, 1, 0, rng, 0.5);
  spectrum_proj_ = nn::Conv2d::make(channels, channels, 1, 1, 0, rng, 0.5);
  squash_ = nn::Conv2d::make(channels, mode == MaskMode::channel ? channels : 1, 1, 1, 0, rng, 0.25);
  // Start with gated == f_s and an all-clear mask so the head does not perturb early training.
  spectrum_proj_.weight = nn::zero_param(spectrum_proj_.weight.shape());
  squash_.bias = Var(Tensor(squash_.bias.shape(), kInitialSquashBias), true);
}

MaskPrediction MaskHead::operator()(const CommonFlareFeature& common, const nn::FeatureMap& f_s,
                                    const Var& threshold) const {
  const Shape& shape = f_s.values.shape();
  if (common.values.shape() != shape) {
    throw ShapeError("fmi_mask: common " + shape_string(common.values.shape()) + " vs spectrum " + shape_string(shape));
  }
  if (shape[1] != channels_) throw ShapeError("fmi_mask: channel count mismatch");
  const std::int64_t B = shape[0], C = shape[1], HW = shape[2] * shape[3];

  const Var m_com = ops::reshape(common_proj_(common.values), {B, C, HW});
  const Var f_flat = ops::reshape(spectrum_proj_(f_s.values), {B, C, HW});
  MaskPrediction out;
  out.affine = ops::add(ops::mul(m_com, f_flat), f_flat);
  const Var pre = ops::reshape(out.affine, shape);
  out.gated = ops::add(ops::mul(pre, f_s.values), f_s.values);
  Var soft = ops::sigmoid(squash_(out.gated));
  if (mode_ == MaskMode::broadcast) soft = ops::repeat_channels(soft, C);
  out.mask.soft = soft;
  out.mask.binary = ops::binarize_ste(soft, threshold);
  out.mask.threshold = threshold;
  return out;
}

nn::ParamList MaskHead::parameters(const std::string& prefix) const {
  nn::ParamList out;
  common_proj_.collect(prefix + ".common_proj", out);
  spectrum_proj_.collect(prefix + ".spectrum_proj", out);
  squash_.collect(prefix + ".squash", out);
  return out;
}

nn::ParamList MaskHead::squash_parameters(const std::string& prefix) const {
  nn::ParamList out;
  squash_.collect(prefix + ".squash", out);
  return out;
}

SmpClassifier::SmpClassifier(std::int64_t channels, std::uint64_t seed) {
  nn::Rng rng(seed);
  fc_ = nn::Linear::make(channels, 2, rng, 0.1);
}

FlareClassifierOutput SmpClassifier::operator()(const FlareMask& mask) const {
  const auto& s = mask.soft.shape();
  Var pooled = ops::reshape(ops::global_avg_pool(mask.soft), {s[0], s[1]});
  return {fc_(pooled)};
}

nn::ParamList SmpClassifier::parameters(const std::string& prefix) const {
  nn::ParamList out;
  fc_.collect(prefix, out);
  return out;
}

Var loss_flare(const FlareClassifierOutput& logits, std::span<const pseudo::FlarePseudoLabel> labels) {
  std::vector<int> y;
  y.reserve(labels.size());
  for (const auto& l : labels) y.push_back(l.is_flare ? 1 : 0);
  return loss::cross_entropy(logits.logits, y);
}

}  // namespace facenet::mfmp
