#include "facenet/pseudo_label.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>

#include "facenet/data_model.hpp"
#include "facenet/errors.hpp"

namespace facenet::pseudo {

double compute_delta(const Image& image) {
  if (image.empty() || image.height <= 0 || image.width <= 0 || image.channels <= 0) {
    throw ValidationError("compute_delta: empty image");
  }
  const std::size_t npix = static_cast<std::size_t>(image.height) * image.width;
  std::size_t bright = 0;
  for (std::size_t p = 0; p < npix; ++p) {
    const auto* px = image.pixels.data() + p * image.channels;
    const auto peak = *std::max_element(px, px + image.channels);
    if (peak >= kBrightLow) ++bright;
  }
  return static_cast<double>(bright) / static_cast<double>(npix);
}

bool flare_label(double delta, double bar) { return delta > bar; }

FlarePseudoLabel make_label(double delta, double bar) { return {delta, flare_label(delta, bar), bar}; }

bool sample_flare_flag(double rgb_delta, double ni_delta, double bar) {
  return flare_label(rgb_delta, bar) || flare_label(ni_delta, bar);
}

std::vector<PseudoLabelRow> label_dataset(const std::filesystem::path& dataset_root, double bar) {
  const auto manifest = data::resolve_manifest(dataset_root);
  const auto root = manifest.parent_path();
  std::vector<PseudoLabelRow> out;
  std::set<std::string> seen;
  for (const auto& row : data::read_manifest_rows(manifest)) {
    if (!seen.insert(row.sample_id).second) continue;
    const double dr = compute_delta(read_image(root / "rgb" / (row.sample_id + ".png"), 3));
    const double dn = compute_delta(read_image(root / "ni" / (row.sample_id + ".png"), 1));
    out.push_back({row.sample_id, dr, dn, sample_flare_flag(dr, dn, bar)});
  }
  return out;
}

void write_pseudo_labels(const std::filesystem::path& csv, const std::vector<PseudoLabelRow>& rows) {
  std::ofstream out(csv);
  if (!out) throw Error("cannot write " + csv.string());
  out << "sample_id,delta_rgb,delta_ni,is_flare\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.sample_id << ',' << r.delta_rgb << ',' << r.delta_ni << ',' << (r.is_flare ? 1 : 0) << '\n';
}

}  // namespace facenet::pseudo
