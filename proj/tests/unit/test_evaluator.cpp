#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "eval_oracle.hpp"
#include "facenet/errors.hpp"
#include "facenet/evaluator.hpp"

using namespace facenet;
using namespace facenet::eval;

namespace {
EmbeddingRecord rec(std::string id, int identity, int camera, std::vector<double> v) {
  return {std::move(id), identity, camera, std::move(v)};
}
}  // namespace

TEST(Distance, IdenticalAndPythagorean) {
  const std::vector<EmbeddingRecord> q{rec("q", 0, 0, {0, 0})};
  const std::vector<EmbeddingRecord> g{rec("a", 0, 1, {0, 0}), rec("b", 1, 1, {3, 4})};
  const Tensor d = distance_matrix(q, g);
  EXPECT_EQ(d.at(0, 0), 0.0);
  EXPECT_EQ(d.at(0, 1), 5.0);
}

TEST(Distance, RandomMatchesDoubleLoop) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<EmbeddingRecord> q, g;
  for (int i = 0; i < 4; ++i) q.push_back(rec("q" + std::to_string(i), 0, 0, {n(rng), n(rng), n(rng)}));
  for (int i = 0; i < 6; ++i) g.push_back(rec("g" + std::to_string(i), 0, 0, {n(rng), n(rng), n(rng)}));
  const Tensor d = distance_matrix(q, g);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += std::pow(q[i].vector[k] - g[j].vector[k], 2);
      EXPECT_NEAR(d.at(i, j), std::sqrt(s), 1e-9);
    }
}

TEST(Metrics, PerfectSingleQuery) {
  const std::vector<EmbeddingRecord> q{rec("q", 1, 0, {0.0})};
  std::vector<EmbeddingRecord> g{rec("m", 1, 1, {0.1})};
  for (int i = 0; i < 4; ++i) g.push_back(rec("x" + std::to_string(i), 2 + i, 1, {1.0 + i}));
  const auto m = evaluate(rank_gallery(q, g));
  EXPECT_DOUBLE_EQ(m.mAP, 1.0);
  EXPECT_DOUBLE_EQ(m.rank(1), 1.0);
}

TEST(Metrics, TwoRelevantAtRanksOneAndThree) {
  const std::vector<EmbeddingRecord> q{rec("q", 1, 0, {0.0})};
  const std::vector<EmbeddingRecord> g{rec("a", 1, 1, {1.0}), rec("b", 2, 1, {2.0}), rec("c", 1, 1, {3.0}),
                                       rec("d", 3, 1, {4.0})};
  const auto m = evaluate(rank_gallery(q, g));
  EXPECT_NEAR(m.mAP, (1.0 / 1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(m.mAP, 0.833333, 1e-6);
}

TEST(Metrics, SameCameraOnlyMatchDropsQuery) {
  const std::vector<EmbeddingRecord> q{rec("q", 1, 0, {0.0}), rec("r", 2, 0, {0.0})};
  const std::vector<EmbeddingRecord> g{rec("a", 1, 0, {1.0}), rec("b", 2, 1, {2.0})};
  const auto m = evaluate(rank_gallery(q, g));
  EXPECT_EQ(m.valid_queries, 1);
  EXPECT_EQ(m.dropped_queries, 1);
  // Query r: its match b sits behind a (another identity) at rank 2.
  EXPECT_DOUBLE_EQ(m.mAP, 0.5);
}

TEST(Metrics, TiesBrokenBySampleId) {
  const std::vector<EmbeddingRecord> q{rec("q", 1, 0, {0.0})};
  const std::vector<EmbeddingRecord> g{rec("zz", 1, 1, {1.0}), rec("aa", 2, 1, {1.0})};
  const auto r = rank_gallery(q, g);
  EXPECT_EQ(r[0].gallery_ids.front(), "aa");
  EXPECT_DOUBLE_EQ(evaluate(r).mAP, 0.5);
}

TEST(Metrics, EmptyGalleryThrows) {
  const std::vector<EmbeddingRecord> q{rec("q", 1, 0, {0.0})};
  EXPECT_THROW(rank_gallery(q, {}), ValidationError);
}

TEST(Metrics, AgreesWithBruteForceOracle) {
  std::mt19937_64 rng(7);
  std::vector<EmbeddingRecord> q, g;
  for (int trial = 0; trial < 50; ++trial) {
    testkit::random_instance(rng, q, g);
    const auto m = evaluate(rank_gallery(q, g));
    const auto o = testkit::brute_force_metrics(q, g, 20);
    ASSERT_EQ(m.valid_queries, o.valid);
    ASSERT_EQ(m.dropped_queries, o.dropped);
    EXPECT_NEAR(m.mAP, o.mAP, 1e-12);
    for (int k = 1; k <= 20 && o.valid > 0; ++k) EXPECT_NEAR(m.rank(k), o.cmc.at(k), 1e-12);
    const auto ref = evaluate_reference(q, g);
    EXPECT_NEAR(ref.mAP, o.mAP, 1e-12);
  }
}

TEST(Output, MetricsJsonAndRankingCsv) {
  const auto dir = std::filesystem::temp_directory_path() / "facenet_eval_out";
  std::filesystem::create_directories(dir);
  const std::vector<EmbeddingRecord> q{rec("q", 1, 0, {0.0})};
  const std::vector<EmbeddingRecord> g{rec("a", 1, 1, {1.0}), rec("b", 2, 1, {2.0}), rec("c", 1, 1, {3.0})};
  const auto r = rank_gallery(q, g);
  write_metrics_json(dir / "metrics.json", evaluate(r));
  write_ranking_csv(dir / "ranking.csv", r);
  std::ifstream js(dir / "metrics.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_NEAR(j.at("mAP").get<double>(), 0.833333, 1e-6);
  EXPECT_DOUBLE_EQ(j.at("R1").get<double>(), 1.0);
  std::ifstream csv(dir / "ranking.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_FALSE(header.empty());
  std::filesystem::remove_all(dir);
}
