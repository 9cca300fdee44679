#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "facenet/data_model.hpp"
#include "facenet/errors.hpp"

using namespace facenet;
using namespace facenet::data;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("facenet_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_sample(const fs::path& root, const std::string& id, int h, int w, std::uint8_t v, bool with_ni = true) {
  for (const char* d : {"rgb", "ni", "ti"}) fs::create_directories(root / d);
  write_image(root / "rgb" / (id + ".png"), Image(h, w, 3, v));
  if (with_ni) write_image(root / "ni" / (id + ".png"), Image(h, w, 1, v));
  write_image(root / "ti" / (id + ".png"), Image(h, w, 1, v));
}

std::vector<SpectralTriplet> fake_dataset(const std::vector<int>& images_per_id) {
  std::vector<SpectralTriplet> out;
  for (std::size_t id = 0; id < images_per_id.size(); ++id) {
    for (int k = 0; k < images_per_id[id]; ++k) {
      SpectralTriplet t;
      t.identity = static_cast<int>(id);
      t.camera = k % 2;
      t.sample_id = "s" + std::to_string(id) + "_" + std::to_string(k);
      out.push_back(t);
    }
  }
  return out;
}

}  // namespace

TEST(Manifest, EmptyManifestGivesEmptyList) {
  TempDir dir("empty_manifest");
  write_manifest(dir.path() / "manifest.csv", {});
  EXPECT_TRUE(load_manifest(dir.path()).empty());
}

TEST(Manifest, PreservesRowOrderAndResizes) {
  TempDir dir("three_rows");
  std::vector<ManifestRow> rows{{"c", 2, 0, Split::train}, {"a", 0, 1, Split::train}, {"b", 1, 0, Split::train}};
  for (const auto& r : rows) write_sample(dir.path(), r.sample_id, 20, 10, 7);
  write_manifest(dir.path() / "manifest.csv", rows);
  const auto out = load_manifest(dir.path() / "manifest.csv", {32, 16});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].sample_id, "c");
  EXPECT_EQ(out[1].sample_id, "a");
  EXPECT_EQ(out[2].sample_id, "b");
  EXPECT_EQ(out[1].camera, 1);
  EXPECT_EQ(out[0].rgb.height, 32);
  EXPECT_EQ(out[0].rgb.width, 16);
  EXPECT_EQ(out[0].rgb.channels, 3);
  EXPECT_EQ(out[0].ni.channels, 1);
}

TEST(Manifest, MissingSpectrumNamesSample) {
  TempDir dir("missing_ni");
  write_sample(dir.path(), "ok", 8, 8, 1);
  write_sample(dir.path(), "broken_one", 8, 8, 1, false);
  write_manifest(dir.path() / "manifest.csv",
                 std::vector<ManifestRow>{{"ok", 0, 0, Split::train}, {"broken_one", 1, 0, Split::train}});
  try {
    load_manifest(dir.path());
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("broken_one"), std::string::npos);
  }
}

TEST(Manifest, RejectsBadHeaderAndLabels) {
  TempDir dir("bad_header");
  {
    std::ofstream(dir.path() / "manifest.csv") << "id,identity,camera,split\n";
  }
  EXPECT_THROW(read_manifest_rows(dir.path() / "manifest.csv"), ValidationError);
  {
    std::ofstream(dir.path() / "manifest.csv") << kManifestHeader << "\nx,-1,0,train\n";
  }
  EXPECT_THROW(read_manifest_rows(dir.path() / "manifest.csv"), ValidationError);
  {
    std::ofstream(dir.path() / "manifest.csv") << kManifestHeader << "\nx,1,0,holdout\n";
  }
  EXPECT_THROW(read_manifest_rows(dir.path() / "manifest.csv"), ValidationError);
}

TEST(Manifest, MismatchedSpectraDimensionsRejected) {
  TempDir dir("mismatch");
  write_sample(dir.path(), "m", 8, 8, 1);
  write_image(dir.path() / "ti" / "m.png", Image(9, 8, 1, 0));
  write_manifest(dir.path() / "manifest.csv", std::vector<ManifestRow>{{"m", 0, 0, Split::train}});
  EXPECT_THROW(load_manifest(dir.path()), ValidationError);
}

TEST(Split, TrainAndTestIdentitiesMustBeDisjoint) {
  auto ds = fake_dataset({2, 2});
  ds[2].split = Split::gallery;
  ds[3].split = Split::gallery;
  EXPECT_NO_THROW(make_split(ds));
  ds[1].split = Split::gallery;  // identity 0 now on both sides
  EXPECT_THROW(make_split(ds), ValidationError);
}

TEST(Split, QueryMustBeInGallery) {
  auto ds = fake_dataset({2});
  ds[0].split = Split::gallery;
  ds[1].split = Split::query;
  EXPECT_THROW(make_split(ds), ValidationError);
}

TEST(Sampler, ExactFitGivesEveryIdentityKTimes) {
  const auto ds = fake_dataset(std::vector<int>(8, 4));
  const auto batch = sample_pk_batch(ds, 8, 4, 11);
  ASSERT_EQ(batch.triplets.size(), 32u);
  EXPECT_NO_THROW(check_batch(batch));
  std::map<std::string, int> seen;
  for (const auto& t : batch.triplets) ++seen[t.sample_id];
  EXPECT_EQ(seen.size(), 32u);
}

TEST(Sampler, DeterministicForFixedSeed) {
  const auto ds = fake_dataset(std::vector<int>(8, 4));
  EXPECT_EQ(sample_pk_indices(ds, 4, 4, 5), sample_pk_indices(ds, 4, 4, 5));
  EXPECT_NE(sample_pk_indices(ds, 4, 4, 5), sample_pk_indices(ds, 4, 4, 6));
}

TEST(Sampler, ShortIdentityIsPaddedWithReplacement) {
  const auto ds = fake_dataset({2});
  const auto got = sample_pk_indices(ds, 1, 4, 42);

  // Seeded enumeration of the draw: shuffle ids, shuffle the pool, keep it
  // all, then fill with uniform picks from the shuffled pool.
  std::mt19937_64 rng(42);
  std::vector<int> ids{0};
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::size_t> pool{0, 1};
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::size_t> expected = pool;
  std::uniform_int_distribution<std::size_t> pick(0, 1);
  expected.push_back(pool[pick(rng)]);
  expected.push_back(pool[pick(rng)]);
  EXPECT_EQ(got, expected);
  EXPECT_NE(std::find(got.begin(), got.end(), 0u), got.end());
  EXPECT_NE(std::find(got.begin(), got.end(), 1u), got.end());
}

TEST(Sampler, TooFewIdentitiesThrows) {
  const auto ds = fake_dataset({4, 4});
  EXPECT_THROW(sample_pk_indices(ds, 3, 2, 0), ValidationError);
}

TEST(Sampler, CheckBatchRejectsUnbalancedBatch) {
  auto batch = sample_pk_batch(fake_dataset({4, 4}), 2, 2, 0);
  batch.triplets.pop_back();
  EXPECT_THROW(check_batch(batch), ValidationError);
}
