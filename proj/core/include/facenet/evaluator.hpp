#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "facenet/tensor.hpp"

namespace facenet::eval {

struct EmbeddingRecord {
  std::string sample_id;
  int identity = 0;
  int camera = 0;
  std::vector<double> vector;
};

/// Gallery ordering for one query. Items sharing the query's identity and
/// camera are flagged excluded and take no part in scoring.
struct RankingResult {
  std::string query_id;
  std::vector<std::size_t> order;  // gallery indices, ascending distance
  std::vector<std::string> gallery_ids;
  std::vector<double> distances;
  std::vector<bool> matches;
  std::vector<bool> excluded;
};

struct Metrics {
  double mAP = 0.0;
  std::map<int, double> cmc;  // rank k -> fraction of queries hit within top k
  int valid_queries = 0;
  int dropped_queries = 0;

  double rank(int k) const;
};

/// Q x G Euclidean distances.
Tensor distance_matrix(std::span<const EmbeddingRecord> queries, std::span<const EmbeddingRecord> gallery);

/// Rankings by ascending distance; ties go to the lexicographically smaller
/// gallery sample_id.
std::vector<RankingResult> rank_gallery(std::span<const EmbeddingRecord> queries,
                                        std::span<const EmbeddingRecord> gallery);

/// mAP and CMC over rankings. Queries without any valid relevant gallery item
/// are dropped and counted. CMC is reported for k = 1..max_rank.
Metrics evaluate(std::span<const RankingResult> rankings, int max_rank = 20);

/// Independent reference: computes each relevant item's rank by pairwise
/// precedence counting instead of sorting. Must agree with evaluate().
Metrics evaluate_reference(std::span<const EmbeddingRecord> queries, std::span<const EmbeddingRecord> gallery,
                           int max_rank = 20);

void write_metrics_json(const std::filesystem::path& path, const Metrics& metrics);
void write_ranking_csv(const std::filesystem::path& path, std::span<const RankingResult> rankings, int top_k = 10);

}  // namespace facenet::eval
