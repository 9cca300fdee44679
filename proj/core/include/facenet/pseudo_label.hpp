#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "facenet/image.hpp"

namespace facenet::pseudo {

inline constexpr double kDefaultBar = 0.10;
inline constexpr int kBrightLow = 250;

/// Fraction of near-saturated pixels and the flare flag it implies.
struct FlarePseudoLabel {
  double delta = 0.0;
  bool is_flare = false;
  double bar = kDefaultBar;
};

/// Fraction of pixels whose value lies in [250, 255]. Multi-channel images
/// are reduced by the per-pixel channel maximum first.
double compute_delta(const Image& image);

/// delta > bar, strictly.
bool flare_label(double delta, double bar = kDefaultBar);

FlarePseudoLabel make_label(double delta, double bar = kDefaultBar);

/// Per-sample gate: flagged when either flare-susceptible spectrum is.
bool sample_flare_flag(double rgb_delta, double ni_delta, double bar = kDefaultBar);

struct PseudoLabelRow {
  std::string sample_id;
  double delta_rgb = 0.0;
  double delta_ni = 0.0;
  bool is_flare = false;
};

/// Reads the raw (un-resized) RGB and NI images of every distinct sample in a
/// dataset root and labels them.
std::vector<PseudoLabelRow> label_dataset(const std::filesystem::path& dataset_root, double bar = kDefaultBar);
void write_pseudo_labels(const std::filesystem::path& csv, const std::vector<PseudoLabelRow>& rows);

}  // namespace facenet::pseudo
