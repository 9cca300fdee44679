#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "facenet/image.hpp"

namespace facenet::data {

enum class Split { train, gallery, query };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// Aligned RGB / near-infrared / thermal-infrared capture of one vehicle.
struct SpectralTriplet {
  Image rgb;  // 3 channels
  Image ni;   // 1 channel
  Image ti;   // 1 channel
  int identity = 0;
  int camera = 0;
  std::string sample_id;
  Split split = Split::train;
};

/// P identities x K images each.
struct Batch {
  std::vector<SpectralTriplet> triplets;
  int identities_per_batch = 0;  // P
  int images_per_identity = 0;   // K
};

struct DatasetSplit {
  std::set<int> train_ids;
  std::vector<std::string> gallery_samples;
  std::vector<std::string> query_samples;
};

/// One row of `manifest.csv`.
struct ManifestRow {
  std::string sample_id;
  int identity = 0;
  int camera = 0;
  Split split = Split::train;
};

inline constexpr const char* kManifestHeader = "sample_id,identity,camera,split";
inline constexpr int kDefaultInputHeight = 256;
inline constexpr int kDefaultInputWidth = 128;

struct LoadOptions {
  int height = kDefaultInputHeight;
  int width = kDefaultInputWidth;
};

std::vector<ManifestRow> read_manifest_rows(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, std::span<const ManifestRow> rows);

/// Accepts either the manifest file or the dataset root containing `manifest.csv`.
std::filesystem::path resolve_manifest(const std::filesystem::path& path);

/// Decodes every row's images from `<root>/{rgb,ni,ti}/<sample_id>.png` and
/// resizes them to the configured input size. Rows keep manifest order; a
/// sample listed for both gallery and query yields two triplets.
std::vector<SpectralTriplet> load_manifest(const std::filesystem::path& path, const LoadOptions& options = {});

/// Builds and validates the train / gallery / query partition.
DatasetSplit make_split(std::span<const SpectralTriplet> samples);

/// Indices into `dataset` for a P x K batch. Identities with fewer than K
/// images contribute all of them, topped up by draws with replacement.
std::vector<std::size_t> sample_pk_indices(std::span<const SpectralTriplet> dataset, int P, int K, std::uint64_t seed);
Batch sample_pk_batch(std::span<const SpectralTriplet> dataset, int P, int K, std::uint64_t seed);

/// Throws ValidationError unless the batch has exactly P identities with K images each.
void check_batch(const Batch& batch);

}  // namespace facenet::data
