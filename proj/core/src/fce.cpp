#include "facenet/fce.hpp"

#include "facenet/errors.hpp"

namespace facenet::fce {

std::string to_string(MaskMode m) { return m == MaskMode::binary ? "binary" : "soft"; }

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "binary") return MaskMode::binary;
  if (text == "soft") return MaskMode::soft;
  throw ConfigError("unknown fce mask mode '" + text + "'");
}

EnhancedFeature enhance(const nn::FeatureMap& f_s, const nn::FeatureMap& f_t, const Var& mask,
                        const std::vector<bool>& apply) {
  const Shape& shape = f_s.values.shape();
  if (shape.size() != 4) throw ShapeError("enhance: expected rank-4 features, got " + shape_string(shape));
  if (f_t.values.shape() != shape || mask.shape() != shape) {
    throw ShapeError("enhance: shapes differ: f_S " + shape_string(shape) + ", f_T " +
                     shape_string(f_t.values.shape()) + ", mask " + shape_string(mask.shape()));
  }
  if (static_cast<std::int64_t>(apply.size()) != shape[0]) throw ShapeError("enhance: one gate flag per sample required");
  const Tensor& s = f_s.values.value();
  const Tensor& t = f_t.values.value();
  const Tensor& m = mask.value();
  for (double v : m.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("enhance: mask value outside [0,1]");
  }
  const std::int64_t per = s.numel() / shape[0];

  Tensor out = s;
  for (std::int64_t b = 0; b < shape[0]; ++b) {
    if (!apply[static_cast<std::size_t>(b)]) continue;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i) {
      const double w = m[i];
      out[i] = w == 1.0 ? t[i] : (w == 0.0 ? s[i] : t[i] * w + s[i] * (1.0 - w));
    }
  }

  EnhancedFeature ef;
  ef.spectrum = f_s.spectrum;
  ef.enhanced_flags = apply;
  ef.values = Var::from_op(std::move(out), {f_s.values, f_t.values, mask},
                           [s, t, m, apply, per](const Tensor& g, std::vector<Tensor*>& pg) {
                             for (std::int64_t b = 0; b < static_cast<std::int64_t>(apply.size()); ++b) {
                               const bool on = apply[static_cast<std::size_t>(b)];
                               for (std::int64_t i = b * per; i < (b + 1) * per; ++i) {
                                 if (!on) {
                                   if (pg[0]) (*pg[0])[i] += g[i];
                                   continue;
                                 }
                                 if (pg[0]) (*pg[0])[i] += g[i] * (1.0 - m[i]);
                                 if (pg[1]) (*pg[1])[i] += g[i] * m[i];
                                 if (pg[2]) (*pg[2])[i] += g[i] * (t[i] - s[i]);
                               }
                             }
                           });
  return ef;
}

}  // namespace facenet::fce
