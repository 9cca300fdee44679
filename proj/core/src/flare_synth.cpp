#include "facenet/flare_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <opencv2/imgproc.hpp>
#include <random>
#include <sstream>

#include "facenet/config.hpp"
#include "facenet/errors.hpp"

namespace facenet::synth {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (num_identities <= 0) throw ConfigError("num_identities must be positive");
  if (samples_per_identity <= 0) throw ConfigError("samples_per_identity must be positive");
  if (image_height < 32 || image_width < 16) throw ConfigError("image size too small");
  if (!(flare_probability >= 0.0 && flare_probability <= 1.0)) throw ConfigError("flare_probability must be in [0,1]");
  if (!(flare_radius_min > 0.0) || flare_radius_max < flare_radius_min) {
    throw ConfigError("flare radius range must be positive and ordered");
  }
  if (flare_peak < 0 || flare_peak > 255) throw ConfigError("flare_peak must be a uint8 value");
  if (num_cameras <= 0) throw ConfigError("num_cameras must be positive");
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must be in [0,1]");
  if (queries_per_camera < 0) throw ConfigError("queries_per_camera must be non-negative");
}

SynthConfig load_synth_config(const fs::path& path) {
  const auto kv = KeyValueFile::load(path);
  kv.reject_unknown({"num_identities", "samples_per_identity", "image_height", "image_width", "flare_probability",
                     "flare_radius_min", "flare_radius_max", "flare_peak", "rng_seed", "num_cameras",
                     "train_fraction", "queries_per_camera"});
  SynthConfig c;
  kv.read("num_identities", c.num_identities);
  kv.read("samples_per_identity", c.samples_per_identity);
  kv.read("image_height", c.image_height);
  kv.read("image_width", c.image_width);
  kv.read("flare_probability", c.flare_probability);
  kv.read("flare_radius_min", c.flare_radius_min);
  kv.read("flare_radius_max", c.flare_radius_max);
  kv.read("flare_peak", c.flare_peak);
  kv.read("rng_seed", c.rng_seed);
  kv.read("num_cameras", c.num_cameras);
  kv.read("train_fraction", c.train_fraction);
  kv.read("queries_per_camera", c.queries_per_camera);
  c.validate();
  return c;
}

void composite_flare(Image& image, double cx, double cy, double radius, int peak, double gain) {
  const double amp = gain * kFlareOverdrive * peak;
  const double inv = 1.0 / (2.0 * radius * radius);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const double add = amp * std::exp(-d2 * inv);
      for (int c = 0; c < image.channels; ++c) {
        auto& p = image.at(y, x, c);
        const double lifted = std::min<double>(peak, p + add);
        p = static_cast<std::uint8_t>(std::max<double>(p, std::round(lifted)));
      }
    }
  }
}

namespace {

using Rng = std::mt19937_64;

Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Per-identity appearance. Geometry is in normalised [0,1] image coordinates.
struct VehicleTemplate {
  cv::Vec3d body_rgb, stripe_rgb, emblem_rgb;
  double body_ni, stripe_ni, emblem_ni;
  double body_ti, hood_ti, wheel_ti, cabin_ti;
  double body_half_width, body_top, body_bottom;
  double cabin_height;
  double stripe_y, stripe_h;
  double emblem_x, emblem_y, emblem_r;
  int grille;
  double lamp_y;
};

cv::Vec3d random_color(Rng& rng) {
  // Hue wheel sample with moderate saturation, kept below the template ceiling.
  const double h = uniform(rng, 0.0, 6.0);
  const double v = uniform(rng, 110.0, 225.0);
  const double s = uniform(rng, 0.45, 0.95);
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  const double m = v - c;
  std::array<double, 3> rgb{};
  switch (static_cast<int>(h)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

VehicleTemplate make_template(std::uint64_t seed, int identity) {
  Rng rng = make_rng(seed, 1, static_cast<std::uint64_t>(identity));
  VehicleTemplate t{};
  t.body_rgb = random_color(rng);
  t.stripe_rgb = random_color(rng);
  t.emblem_rgb = random_color(rng);
  t.body_ni = uniform(rng, 60, 200);
  t.stripe_ni = uniform(rng, 30, 230);
  t.emblem_ni = uniform(rng, 30, 230);
  t.body_ti = uniform(rng, 80, 150);
  t.hood_ti = uniform(rng, 140, 225);
  t.wheel_ti = uniform(rng, 90, 200);
  t.cabin_ti = uniform(rng, 60, 140);
  t.body_half_width = uniform(rng, 0.36, 0.46);
  t.body_top = uniform(rng, 0.18, 0.28);
  t.body_bottom = uniform(rng, 0.78, 0.86);
  t.cabin_height = uniform(rng, 0.10, 0.18);
  t.stripe_y = uniform(rng, 0.50, 0.64);
  t.stripe_h = uniform(rng, 0.03, 0.07);
  t.emblem_x = uniform(rng, 0.38, 0.62);
  t.emblem_y = uniform(rng, 0.44, 0.70);
  t.emblem_r = uniform(rng, 0.05, 0.09);
  t.grille = uniform_int(rng, 0, 3);
  t.lamp_y = uniform(rng, 0.45, 0.58);
  return t;
}

struct Pose {
  double scale, dx, dy;
  double W, H;
  cv::Point map(double u, double v) const {
    const double x = (0.5 + scale * (u - 0.5)) * W + dx;
    const double y = (0.5 + scale * (v - 0.5)) * H + dy;
    return {static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))};
  }
  int len(double u) const { return std::max(1, static_cast<int>(std::lround(scale * u * W))); }
};

struct Canvases {
  cv::Mat rgb, ni, ti;  // CV_64FC3 (RGB order), CV_64FC1, CV_64FC1
};

void fill_rect(Canvases& cv_, const Pose& p, double u0, double v0, double u1, double v1, const cv::Vec3d& rgb,
               double ni, double ti) {
  const cv::Point a = p.map(u0, v0), b = p.map(u1, v1);
  cv::rectangle(cv_.rgb, a, b, cv::Scalar(rgb[0], rgb[1], rgb[2]), cv::FILLED);
  if (ni >= 0) cv::rectangle(cv_.ni, a, b, cv::Scalar(ni), cv::FILLED);
  if (ti >= 0) cv::rectangle(cv_.ti, a, b, cv::Scalar(ti), cv::FILLED);
}

Image to_image(const cv::Mat& m, int channels) {
  Image out(m.rows, m.cols, channels);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < channels; ++c) {
        const double v = channels == 1 ? m.at<double>(y, x) : m.at<cv::Vec3d>(y, x)[c];
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, static_cast<long>(kTemplateCeiling)));
      }
    }
  }
  return out;
}

void add_specular(Image& img, cv::Point c, int r) {
  for (int y = c.y - r; y <= c.y + r; ++y) {
    for (int x = c.x - r; x <= c.x + r; ++x) {
      if (y < 0 || x < 0 || y >= img.height || x >= img.width) continue;
      if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) > r * r) continue;
      for (int ch = 0; ch < img.channels; ++ch) img.at(y, x, ch) = 255;
    }
  }
}

data::SpectralTriplet render_sample(const SynthConfig& cfg, const VehicleTemplate& t, int identity, int index,
                                    int camera) {
  const int H = cfg.image_height, W = cfg.image_width;
  Rng rng = make_rng(cfg.rng_seed, 2, static_cast<std::uint64_t>(identity), static_cast<std::uint64_t>(index));
  const Pose pose{uniform(rng, 0.9, 1.08), uniform(rng, -0.06, 0.06) * W, uniform(rng, -0.04, 0.04) * H,
                  static_cast<double>(W), static_cast<double>(H)};

  // Cameras differ in exposure, tint and background.
  const double gain = 1.0 - 0.18 * (camera % 3) + uniform(rng, -0.05, 0.05);
  const cv::Vec3d tint = camera % 2 == 0 ? cv::Vec3d(1.0, 1.0, 1.0) : cv::Vec3d(0.92, 1.0, 1.08);
  const double bg = uniform(rng, 50, 110) + 15.0 * camera;

  Canvases c{cv::Mat(H, W, CV_64FC3, cv::Scalar(bg, bg * 0.95, bg * 0.9)), cv::Mat(H, W, CV_64FC1, cv::Scalar(bg * 0.8)),
             cv::Mat(H, W, CV_64FC1, cv::Scalar(35 + 5.0 * camera))};
  // Background clutter.
  for (int k = 0; k < 4; ++k) {
    const double u = uniform(rng, 0, 1), v = uniform(rng, 0, 1), s = uniform(rng, 0.05, 0.25);
    const double g = uniform(rng, 30, 150);
    cv::rectangle(c.rgb, cv::Point(int(u * W), int(v * H)), cv::Point(int((u + s) * W), int((v + s) * H)),
                  cv::Scalar(g, g * 1.05, g * 0.9), cv::FILLED);
    cv::rectangle(c.ni, cv::Point(int(u * W), int(v * H)), cv::Point(int((u + s) * W), int((v + s) * H)), cv::Scalar(g),
                  cv::FILLED);
  }

  const double l = 0.5 - t.body_half_width, r = 0.5 + t.body_half_width;
  fill_rect(c, pose, l, t.body_top, r, t.body_bottom, t.body_rgb, t.body_ni, t.body_ti);
  // Windshield.
  fill_rect(c, pose, l + 0.05, t.body_top + 0.02, r - 0.05, t.body_top + t.cabin_height, {45, 55, 65}, 20, t.cabin_ti);
  // Hood (thermal only).
  fill_rect(c, pose, l + 0.04, t.body_top + t.cabin_height + 0.03, r - 0.04, t.stripe_y - 0.01, t.body_rgb, t.body_ni,
            t.hood_ti);
  // Stripe.
  fill_rect(c, pose, l, t.stripe_y, r, t.stripe_y + t.stripe_h, t.stripe_rgb, t.stripe_ni, -1);
  // Grille.
  const cv::Vec3d dark = t.body_rgb * 0.45;
  const double gt = t.stripe_y + t.stripe_h + 0.02, gb = t.body_bottom - 0.08;
  for (int k = 0; k < 5; ++k) {
    const double f = k / 5.0;
    switch (t.grille) {
      case 0:
        fill_rect(c, pose, 0.32, gt + f * (gb - gt), 0.68, gt + f * (gb - gt) + 0.012, dark, t.body_ni * 0.4, -1);
        break;
      case 1:
        fill_rect(c, pose, 0.32 + f * 0.36, gt, 0.32 + f * 0.36 + 0.03, gb, dark, t.body_ni * 0.4, -1);
        break;
      case 2:
        fill_rect(c, pose, 0.32 + f * 0.36, gt + f * (gb - gt), 0.32 + f * 0.36 + 0.06, gt + f * (gb - gt) + 0.03, dark,
                  t.body_ni * 0.4, -1);
        break;
      default:
        break;
    }
  }
  // Emblem.
  cv::circle(c.rgb, pose.map(t.emblem_x, t.emblem_y), pose.len(t.emblem_r),
             cv::Scalar(t.emblem_rgb[0], t.emblem_rgb[1], t.emblem_rgb[2]), cv::FILLED);
  cv::circle(c.ni, pose.map(t.emblem_x, t.emblem_y), pose.len(t.emblem_r), cv::Scalar(t.emblem_ni), cv::FILLED);
  // Plate.
  fill_rect(c, pose, 0.4, t.body_bottom - 0.06, 0.6, t.body_bottom - 0.025, {215, 215, 205}, 225, -1);
  // Wheels.
  fill_rect(c, pose, l - 0.02, t.body_bottom - 0.02, l + 0.12, t.body_bottom + 0.04, {25, 25, 25}, 25, t.wheel_ti);
  fill_rect(c, pose, r - 0.12, t.body_bottom - 0.02, r + 0.02, t.body_bottom + 0.04, {25, 25, 25}, 25, t.wheel_ti);
  // Lamps.
  const cv::Point lamp_l = pose.map(l + 0.09, t.lamp_y), lamp_r = pose.map(r - 0.09, t.lamp_y);
  const int lamp_r_px = pose.len(0.06);
  for (auto p : {lamp_l, lamp_r}) {
    cv::circle(c.rgb, p, lamp_r_px, cv::Scalar(205, 205, 190), cv::FILLED);
    cv::circle(c.ni, p, lamp_r_px, cv::Scalar(200), cv::FILLED);
  }

  // Exposure, tint and sensor noise.
  std::normal_distribution<double> noise(0.0, 3.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      auto& px = c.rgb.at<cv::Vec3d>(y, x);
      for (int ch = 0; ch < 3; ++ch) px[ch] = px[ch] * gain * tint[ch] + noise(rng);
      c.ni.at<double>(y, x) = c.ni.at<double>(y, x) * gain + noise(rng);
    }
  }
  // Thermal emission is diffuse.
  cv::GaussianBlur(c.ti, c.ti, cv::Size(0, 0), 0.035 * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) c.ti.at<double>(y, x) += noise(rng);

  data::SpectralTriplet s;
  s.rgb = to_image(c.rgb, 3);
  s.ni = to_image(c.ni, 1);
  s.ti = to_image(c.ti, 1);
  const int spec = std::max(1, W / 48);
  for (auto p : {lamp_l, lamp_r}) {
    add_specular(s.rgb, p, spec);
    add_specular(s.ni, p, spec);
  }
  s.identity = identity;
  s.camera = camera;
  return s;
}

std::string sample_name(int identity, int index) {
  std::ostringstream os;
  os << "id" << std::setw(4) << std::setfill('0') << identity << "_s" << std::setw(3) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

std::vector<RenderedSample> render_dataset(const SynthConfig& config) {
  config.validate();
  const int W = config.image_width, H = config.image_height;
  const int n_train = static_cast<int>(std::lround(config.train_fraction * config.num_identities));

  std::vector<RenderedSample> out;
  out.reserve(static_cast<std::size_t>(config.num_identities) * config.samples_per_identity);
  for (int id = 0; id < config.num_identities; ++id) {
    const auto tmpl = make_template(config.rng_seed, id);
    for (int j = 0; j < config.samples_per_identity; ++j) {
      const int camera = j % config.num_cameras;
      RenderedSample rs;
      rs.triplet = render_sample(config, tmpl, id, j, camera);
      rs.triplet.sample_id = sample_name(id, j);
      rs.triplet.split = id < n_train ? data::Split::train : data::Split::gallery;

      // Independent stream so the flare draw never perturbs appearance.
      Rng frng = make_rng(config.rng_seed, 3, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(j));
      const bool flare = uniform(frng, 0.0, 1.0) < config.flare_probability;
      const double cx = uniform(frng, 0.3, 0.7) * W;
      const double cy = uniform(frng, 0.3, 0.72) * H;
      const double radius = uniform(frng, config.flare_radius_min, std::nextafter(config.flare_radius_max, 1e300));
      if (flare) {
        composite_flare(rs.triplet.rgb, cx, cy, radius, config.flare_peak, 1.0);
        composite_flare(rs.triplet.ni, cx, cy, radius, config.flare_peak, kNiFlareGain);
        rs.flare = FlareGroundTruth{rs.triplet.sample_id, true, true, cx, cy, radius};
      }
      out.push_back(std::move(rs));
    }
  }
  return out;
}

std::vector<data::ManifestRow> select_queries(const SynthConfig& config, std::span<const data::ManifestRow> rows) {
  // Per test identity, a random gallery sample from each camera.
  Rng qrng = make_rng(config.rng_seed, 4);
  std::vector<data::ManifestRow> queries;
  const int n_train = static_cast<int>(std::lround(config.train_fraction * config.num_identities));
  for (int id = n_train; id < config.num_identities; ++id) {
    for (int cam = 0; cam < config.num_cameras; ++cam) {
      std::vector<const data::ManifestRow*> pool;
      for (const auto& r : rows)
        if (r.identity == id && r.camera == cam) pool.push_back(&r);
      std::shuffle(pool.begin(), pool.end(), qrng);
      for (int q = 0; q < config.queries_per_camera && q < static_cast<int>(pool.size()); ++q) {
        auto row = *pool[static_cast<std::size_t>(q)];
        row.split = data::Split::query;
        queries.push_back(row);
      }
    }
  }
  return queries;
}

std::vector<data::SpectralTriplet> render_triplets(const SynthConfig& config) {
  std::vector<data::SpectralTriplet> out;
  std::vector<data::ManifestRow> rows;
  for (auto& s : render_dataset(config)) {
    rows.push_back({s.triplet.sample_id, s.triplet.identity, s.triplet.camera, s.triplet.split});
    out.push_back(std::move(s.triplet));
  }
  const std::size_t rendered = out.size();
  for (const auto& q : select_queries(config, rows)) {
    const auto it = std::find_if(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(rendered),
                                 [&](const data::SpectralTriplet& t) { return t.sample_id == q.sample_id; });
    auto copy = *it;
    copy.split = data::Split::query;
    out.push_back(std::move(copy));
  }
  return out;
}

GenerateResult generate(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  for (const char* sub : {"rgb", "ni", "ti"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw Error("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  const auto samples = render_dataset(config);

  std::vector<data::ManifestRow> rows;
  GenerateResult result;
  for (const auto& s : samples) {
    const auto& t = s.triplet;
    write_image(out_dir / "rgb" / (t.sample_id + ".png"), t.rgb);
    write_image(out_dir / "ni" / (t.sample_id + ".png"), t.ni);
    write_image(out_dir / "ti" / (t.sample_id + ".png"), t.ti);
    rows.push_back({t.sample_id, t.identity, t.camera, t.split});
    if (s.flare) result.flares.push_back(*s.flare);
  }

  const auto queries = select_queries(config, rows);
  rows.insert(rows.end(), queries.begin(), queries.end());

  result.manifest = out_dir / "manifest.csv";
  data::write_manifest(result.manifest, rows);

  std::ofstream gt(out_dir / "flare_gt.csv");
  if (!gt) throw Error("cannot write flare_gt.csv in " + out_dir.string());
  gt << "sample_id,flare_rgb,flare_ni,cx,cy,radius\n" << std::setprecision(17);
  for (const auto& f : result.flares) {
    gt << f.sample_id << ',' << int(f.flare_applied_rgb) << ',' << int(f.flare_applied_ni) << ',' << f.center_x << ','
       << f.center_y << ',' << f.radius << '\n';
  }
  return result;
}

}  // namespace facenet::synth
