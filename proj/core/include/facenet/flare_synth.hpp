#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facenet/data_model.hpp"

namespace facenet::synth {

struct SynthConfig {
  int num_identities = 20;
  int samples_per_identity = 6;
  int image_height = data::kDefaultInputHeight;
  int image_width = data::kDefaultInputWidth;
  double flare_probability = 0.5;
  double flare_radius_min = 26.0;  // px
  double flare_radius_max = 40.0;  // px
  int flare_peak = 255;
  std::uint64_t rng_seed = 0;
  int num_cameras = 2;
  /// Fraction of identities assigned to the train split; the rest form the gallery.
  double train_fraction = 0.5;
  /// Query samples drawn per camera for every test identity.
  int queries_per_camera = 1;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Parses a flat `key=value` file whose keys are the SynthConfig field names.
SynthConfig load_synth_config(const std::filesystem::path& path);

struct FlareGroundTruth {
  std::string sample_id;
  bool flare_applied_rgb = false;
  bool flare_applied_ni = false;
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 0.0;
};

/// Additive flare amplitude at the centre, as a multiple of flare_peak. Values
/// above 1 over-drive the core so it clips to the peak.
inline constexpr double kFlareOverdrive = 4.0;
/// NI receives this fraction of the RGB flare amplitude.
inline constexpr double kNiFlareGain = 0.8;
/// Upper bound of every non-specular template pixel.
inline constexpr int kTemplateCeiling = 240;

/// In-memory sample produced by the renderer, before it is written to disk.
struct RenderedSample {
  data::SpectralTriplet triplet;
  std::optional<FlareGroundTruth> flare;
};

/// Renders every sample of the configured dataset in memory.
std::vector<RenderedSample> render_dataset(const SynthConfig& config);

/// Query rows for the test identities: `queries_per_camera` samples drawn
/// per camera from the gallery rows, with split set to query.
std::vector<data::ManifestRow> select_queries(const SynthConfig& config, std::span<const data::ManifestRow> rows);

/// Rendered samples followed by their query copies, in the order
/// load_manifest returns them for a dataset written by generate().
std::vector<data::SpectralTriplet> render_triplets(const SynthConfig& config);

struct GenerateResult {
  std::filesystem::path manifest;
  std::vector<FlareGroundTruth> flares;
};

/// Writes `out_dir/{rgb,ni,ti}/*.png`, `manifest.csv` and `flare_gt.csv`.
GenerateResult generate(const SynthConfig& config, const std::filesystem::path& out_dir);

/// Composites a radial flare in place: each pixel becomes
/// max(p, min(peak, p + gain * overdrive * peak * exp(-d^2 / (2 r^2)))).
void composite_flare(Image& image, double cx, double cy, double radius, int peak, double gain);

}  // namespace facenet::synth
