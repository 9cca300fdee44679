#include "facenet/model.hpp"

#include <cstring>

#include "facenet/errors.hpp"
#include "facenet/ops.hpp"

namespace facenet::train {

PreparedBatch prepare_batch(std::span<const data::SpectralTriplet* const> samples, std::span<const int> labels,
                            const std::vector<bool>& flips, double bar) {
  if (samples.empty()) throw ValidationError("prepare_batch: empty batch");
  std::vector<Image> rgb, ni, ti;
  rgb.reserve(samples.size());
  ni.reserve(samples.size());
  ti.reserve(samples.size());
  PreparedBatch out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    const bool flip = !flips.empty() && flips[i];
    rgb.push_back(flip ? flip_horizontal(s.rgb) : s.rgb);
    ni.push_back(flip ? flip_horizontal(s.ni) : s.ni);
    ti.push_back(flip ? flip_horizontal(s.ti) : s.ti);
    const double dr = pseudo::compute_delta(s.rgb), dn = pseudo::compute_delta(s.ni);
    out.flare_rgb.push_back(pseudo::make_label(dr, bar));
    out.flare_ni.push_back(pseudo::make_label(dn, bar));
    out.gate.push_back(pseudo::sample_flare_flag(dr, dn, bar));
    out.sample_ids.push_back(s.sample_id);
  }
  auto pointers = [](const std::vector<Image>& v) {
    std::vector<const Image*> p;
    for (const auto& i : v) p.push_back(&i);
    return p;
  };
  out.rgb = nn::images_to_tensor(pointers(rgb));
  out.ni = nn::images_to_tensor(pointers(ni));
  out.ti = nn::images_to_tensor(pointers(ti));
  out.labels.assign(labels.begin(), labels.end());
  if (out.labels.empty()) out.labels.assign(samples.size(), -1);
  return out;
}

namespace {
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t k) { return seed * 1000003ULL + k * 7919ULL + 17ULL; }
}  // namespace

FaceNetModel::FaceNetModel(const TrainConfig& config, int num_classes)
    : config_(config),
      num_classes_(num_classes),
      rgb_(nn::Spectrum::rgb, 3, config.backbone(), sub_seed(config.seed, 1)),
      ni_(nn::Spectrum::ni, 1, config.backbone(), sub_seed(config.seed, 2)),
      ti_(nn::Spectrum::ti, 1, config.backbone(), sub_seed(config.seed, 3)),
      cls_rgb_(config.embedding_dim, num_classes, sub_seed(config.seed, 4)),
      cls_ni_(config.embedding_dim, num_classes, sub_seed(config.seed, 5)),
      cls_ti_(config.embedding_dim, num_classes, sub_seed(config.seed, 6)),
      threshold_(Tensor({1}, 0.0), true) {
  config_.validate();
  const auto channels = nn::stage_shapes(config.variant)[static_cast<std::size_t>(config.plug_layer - 1)].channels;
  fmi_ = mfmp::FmiCommon(channels, sub_seed(config.seed, 7));
  head_rgb_ = mfmp::MaskHead(channels, config.mask_mode, sub_seed(config.seed, 8));
  head_ni_ = mfmp::MaskHead(channels, config.mask_mode, sub_seed(config.seed, 9));
  smp_rgb_ = mfmp::SmpClassifier(channels, sub_seed(config.seed, 10));
  smp_ni_ = mfmp::SmpClassifier(channels, sub_seed(config.seed, 11));
}

ForwardOutput FaceNetModel::forward(const PreparedBatch& batch) const {
  const auto& ab = config_.ablation;
  auto ex_rgb = rgb_.extract(Var(batch.rgb));
  auto ex_ni = ni_.extract(Var(batch.ni));
  auto ex_ti = ti_.extract(Var(batch.ti));

  nn::FeatureMap f_rgb = ex_rgb.feature;
  nn::FeatureMap f_ni = ex_ni.feature;
  ForwardOutput out;
  if (ab.use_mfmp) {
    const mfmp::CommonFlareFeature common_rgb =
        ab.use_fmi ? fmi_(ex_rgb.feature, ex_ni.feature) : mfmp::CommonFlareFeature{ex_rgb.feature.values};
    const mfmp::CommonFlareFeature common_ni = ab.use_fmi ? common_rgb : mfmp::CommonFlareFeature{ex_ni.feature.values};
    out.mask_rgb = head_rgb_(common_rgb, ex_rgb.feature, threshold_);
    out.mask_ni = head_ni_(common_ni, ex_ni.feature, threshold_);
    out.flare_rgb = smp_rgb_(out.mask_rgb->mask);
    out.flare_ni = smp_ni_(out.mask_ni->mask);
    f_rgb = {out.mask_rgb->gated, nn::Spectrum::rgb};
    f_ni = {out.mask_ni->gated, nn::Spectrum::ni};
    if (ab.use_fce) {
      auto pick = [&](const mfmp::FlareMask& m) {
        return config_.fce_mask_mode == fce::MaskMode::binary ? m.binary : m.soft;
      };
      f_rgb.values = fce::enhance(f_rgb, ex_ti.feature, pick(out.mask_rgb->mask), batch.gate).values;
      f_ni.values = fce::enhance(f_ni, ex_ti.feature, pick(out.mask_ni->mask), batch.gate).values;
    }
  }
  out.embeddings = {ex_rgb.continuation(f_rgb), ex_ni.continuation(f_ni), ex_ti.continuation(ex_ti.feature)};
  out.scores = {cls_rgb_.classify(out.embeddings[0]), cls_ni_.classify(out.embeddings[1]),
                cls_ti_.classify(out.embeddings[2])};
  return out;
}

loss::LossTerms FaceNetModel::losses(const ForwardOutput& out, const PreparedBatch& batch) const {
  loss::LossTerms t;
  t.id = loss::loss_identity(out.scores, batch.labels);
  t.tri = loss::loss_triplet(out.embeddings, batch.labels, config_.margin);
  if (config_.ablation.use_mfmp) {
    t.f = ops::add(mfmp::loss_flare(*out.flare_rgb, batch.flare_rgb), mfmp::loss_flare(*out.flare_ni, batch.flare_ni));
  }
  if (config_.ablation.use_ic) t.ic = loss::loss_ic(out.scores[0], out.scores[1], config_.ic_reduction);
  return t;
}

Tensor FaceNetModel::embed(const PreparedBatch& batch) const {
  NoGradGuard guard;
  const auto out = forward(batch);
  Var cat = ops::concat1(ops::concat1(out.embeddings[0], out.embeddings[1]), out.embeddings[2]);
  return cat.value();
}

nn::ParamList FaceNetModel::parameters() const {
  nn::ParamList out;
  auto append = [&out](nn::ParamList more) { out.insert(out.end(), more.begin(), more.end()); };
  append(rgb_.parameters("backbone.rgb"));
  append(ni_.parameters("backbone.ni"));
  append(ti_.parameters("backbone.ti"));
  append(cls_rgb_.parameters("classifier.rgb"));
  append(cls_ni_.parameters("classifier.ni"));
  append(cls_ti_.parameters("classifier.ti"));
  append(fmi_.parameters("mfmp.fmi"));
  append(head_rgb_.parameters("mfmp.head_rgb"));
  append(head_ni_.parameters("mfmp.head_ni"));
  append(smp_rgb_.parameters("mfmp.smp_rgb"));
  append(smp_ni_.parameters("mfmp.smp_ni"));
  out.push_back({"mfmp.threshold", threshold_});
  return out;
}

nn::ParamList FaceNetModel::trainable_parameters() const {
  const auto& ab = config_.ablation;
  nn::ParamList out;
  for (auto& p : parameters()) {
    const auto& n = p.name;
    if (n.rfind("mfmp.fmi", 0) == 0 && !(ab.use_mfmp && ab.use_fmi)) continue;
    if (n == "mfmp.threshold" && !(ab.use_mfmp && ab.use_fce)) continue;
    if (n.rfind("mfmp.", 0) == 0 && !ab.use_mfmp) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::uint64_t parameter_hash(const nn::ParamList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params) {
    for (double v : p.var.value().data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace facenet::train
