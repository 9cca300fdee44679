#include "facenet/data_model.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "facenet/errors.hpp"

namespace facenet::data {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::gallery:
      return "gallery";
    case Split::query:
      return "query";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "gallery") return Split::gallery;
  if (text == "query") return Split::query;
  throw ValidationError("unknown split '" + text + "'");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int parse_label(const std::string& text, const char* what, std::size_t row) {
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || value < 0) {
    throw ValidationError("manifest row " + std::to_string(row) + ": " + what + " must be a non-negative integer, got '" +
                          text + "'");
  }
  return value;
}

}  // namespace

fs::path resolve_manifest(const fs::path& path) {
  if (fs::is_directory(path)) return path / "manifest.csv";
  return path;
}

std::vector<ManifestRow> read_manifest_rows(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IngestionError("cannot open manifest " + manifest.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("manifest is empty: " + manifest.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw ValidationError("manifest header must be '" + std::string(kManifestHeader) + "', got '" + line + "'");
  }
  std::vector<ManifestRow> rows;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row_no;
    const auto f = split_csv(line);
    if (f.size() != 4) throw ValidationError("manifest row " + std::to_string(row_no) + ": expected 4 fields");
    if (f[0].empty()) throw ValidationError("manifest row " + std::to_string(row_no) + ": empty sample_id");
    rows.push_back({f[0], parse_label(f[1], "identity", row_no), parse_label(f[2], "camera", row_no), parse_split(f[3])});
  }
  return rows;
}

void write_manifest(const fs::path& manifest, std::span<const ManifestRow> rows) {
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + manifest.string());
  out << kManifestHeader << '\n';
  for (const auto& r : rows) out << r.sample_id << ',' << r.identity << ',' << r.camera << ',' << to_string(r.split) << '\n';
}

std::vector<SpectralTriplet> load_manifest(const fs::path& path, const LoadOptions& options) {
  const fs::path manifest = resolve_manifest(path);
  const fs::path root = manifest.parent_path();
  const auto rows = read_manifest_rows(manifest);

  // Rows repeating a sample_id (gallery + query) share one decode.
  std::map<std::string, std::size_t> decoded;
  std::vector<SpectralTriplet> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    SpectralTriplet t;
    if (auto it = decoded.find(row.sample_id); it != decoded.end()) {
      const auto& prev = out[it->second];
      if (prev.identity != row.identity) {
        throw ValidationError("sample " + row.sample_id + " listed with conflicting identities");
      }
      t = prev;
    } else {
      auto load = [&](const char* dir, int channels) {
        const fs::path file = root / dir / (row.sample_id + ".png");
        try {
          return read_image(file, channels);
        } catch (const IngestionError& e) {
          throw IngestionError("sample " + row.sample_id + ": " + e.what());
        }
      };
      Image rgb = load("rgb", 3);
      Image ni = load("ni", 1);
      Image ti = load("ti", 1);
      if (rgb.height != ni.height || rgb.width != ni.width || rgb.height != ti.height || rgb.width != ti.width) {
        throw ValidationError("sample " + row.sample_id + ": spectra have different dimensions");
      }
      t.rgb = resize_bilinear(rgb, options.height, options.width);
      t.ni = resize_bilinear(ni, options.height, options.width);
      t.ti = resize_bilinear(ti, options.height, options.width);
      decoded.emplace(row.sample_id, out.size());
    }
    t.identity = row.identity;
    t.camera = row.camera;
    t.sample_id = row.sample_id;
    t.split = row.split;
    out.push_back(std::move(t));
  }
  return out;
}

DatasetSplit make_split(std::span<const SpectralTriplet> samples) {
  DatasetSplit split;
  std::set<int> test_ids;
  std::set<std::string> gallery;
  for (const auto& s : samples) {
    switch (s.split) {
      case Split::train:
        split.train_ids.insert(s.identity);
        break;
      case Split::gallery:
        test_ids.insert(s.identity);
        if (gallery.insert(s.sample_id).second) split.gallery_samples.push_back(s.sample_id);
        break;
      case Split::query:
        test_ids.insert(s.identity);
        split.query_samples.push_back(s.sample_id);
        break;
    }
  }
  for (int id : split.train_ids) {
    if (test_ids.count(id)) throw ValidationError("identity " + std::to_string(id) + " appears in train and test splits");
  }
  for (const auto& q : split.query_samples) {
    if (!gallery.count(q)) throw ValidationError("query sample " + q + " is not listed in the gallery");
  }
  return split;
}

std::vector<std::size_t> sample_pk_indices(std::span<const SpectralTriplet> dataset, int P, int K, std::uint64_t seed) {
  if (P <= 0 || K <= 0) throw ValidationError("P and K must be positive");
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_id[dataset[i].identity].push_back(i);
  if (static_cast<int>(by_id.size()) < P) {
    throw ValidationError("need at least " + std::to_string(P) + " identities, dataset has " +
                          std::to_string(by_id.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<int> ids;
  for (const auto& [id, _] : by_id) ids.push_back(id);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(P));

  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(P * K));
  for (int id : ids) {
    auto pool = by_id[id];
    std::shuffle(pool.begin(), pool.end(), rng);
    if (static_cast<int>(pool.size()) >= K) {
      out.insert(out.end(), pool.begin(), pool.begin() + K);
    } else {
      out.insert(out.end(), pool.begin(), pool.end());
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (int k = static_cast<int>(pool.size()); k < K; ++k) out.push_back(pool[pick(rng)]);
    }
  }
  return out;
}

Batch sample_pk_batch(std::span<const SpectralTriplet> dataset, int P, int K, std::uint64_t seed) {
  Batch batch;
  batch.identities_per_batch = P;
  batch.images_per_identity = K;
  for (auto i : sample_pk_indices(dataset, P, K, seed)) batch.triplets.push_back(dataset[i]);
  return batch;
}

void check_batch(const Batch& batch) {
  const int P = batch.identities_per_batch, K = batch.images_per_identity;
  if (static_cast<int>(batch.triplets.size()) != P * K) {
    throw ValidationError("batch size " + std::to_string(batch.triplets.size()) + " != P*K = " + std::to_string(P * K));
  }
  std::map<int, int> counts;
  for (const auto& t : batch.triplets) ++counts[t.identity];
  if (static_cast<int>(counts.size()) != P) throw ValidationError("batch does not contain exactly P identities");
  for (const auto& [id, n] : counts) {
    if (n != K) throw ValidationError("identity " + std::to_string(id) + " appears " + std::to_string(n) + " times, expected K");
  }
}

}  // namespace facenet::data
