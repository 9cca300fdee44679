#include "facenet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numeric>

#include "facenet/errors.hpp"

namespace facenet::eval {

double Metrics::rank(int k) const {
  if (cmc.empty()) return 0.0;
  auto it = cmc.find(k);
  if (it != cmc.end()) return it->second;
  return k > cmc.rbegin()->first ? cmc.rbegin()->second : 0.0;
}

namespace {

void check_dims(std::span<const EmbeddingRecord> a, std::span<const EmbeddingRecord> b) {
  if (a.empty() && b.empty()) return;
  const std::size_t d = a.empty() ? b.front().vector.size() : a.front().vector.size();
  for (const auto* set : {&a, &b}) {
    for (const auto& r : *set) {
      if (r.vector.size() != d) throw ShapeError("embedding " + r.sample_id + " has a different dimension");
    }
  }
}

}  // namespace

Tensor distance_matrix(std::span<const EmbeddingRecord> queries, std::span<const EmbeddingRecord> gallery) {
  check_dims(queries, gallery);
  const auto Q = static_cast<std::int64_t>(queries.size()), G = static_cast<std::int64_t>(gallery.size());
  Tensor d({Q, G});
  for (std::int64_t i = 0; i < Q; ++i) {
    const auto& q = queries[static_cast<std::size_t>(i)].vector;
    for (std::int64_t j = 0; j < G; ++j) {
      const auto& g = gallery[static_cast<std::size_t>(j)].vector;
      double s = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) s += (q[k] - g[k]) * (q[k] - g[k]);
      d.at(i, j) = std::sqrt(s);
    }
  }
  return d;
}

std::vector<RankingResult> rank_gallery(std::span<const EmbeddingRecord> queries,
                                        std::span<const EmbeddingRecord> gallery) {
  if (gallery.empty()) throw ValidationError("rank_gallery: empty gallery");
  const Tensor d = distance_matrix(queries, gallery);
  std::vector<RankingResult> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    RankingResult r;
    r.query_id = q.sample_id;
    r.order.resize(gallery.size());
    std::iota(r.order.begin(), r.order.end(), std::size_t{0});
    const double* row = d.raw() + i * gallery.size();
    std::sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
      if (row[a] != row[b]) return row[a] < row[b];
      return gallery[a].sample_id < gallery[b].sample_id;
    });
    for (auto j : r.order) {
      const auto& g = gallery[j];
      r.gallery_ids.push_back(g.sample_id);
      r.distances.push_back(row[j]);
      const bool same_id = g.identity == q.identity;
      const bool excluded = same_id && g.camera == q.camera;
      r.excluded.push_back(excluded);
      r.matches.push_back(same_id && !excluded);
    }
    out.push_back(std::move(r));
  }
  return out;
}

Metrics evaluate(std::span<const RankingResult> rankings, int max_rank) {
  Metrics m;
  std::vector<int> hits_at(static_cast<std::size_t>(max_rank) + 1, 0);
  double ap_sum = 0.0;
  for (const auto& r : rankings) {
    if (r.order.empty()) throw ValidationError("evaluate: empty gallery");
    int rank = 0, found = 0, first = -1;
    double ap = 0.0;
    for (std::size_t j = 0; j < r.order.size(); ++j) {
      if (r.excluded[j]) continue;
      ++rank;
      if (!r.matches[j]) continue;
      ++found;
      if (first < 0) first = rank;
      ap += static_cast<double>(found) / rank;
    }
    if (found == 0) {
      ++m.dropped_queries;
      continue;
    }
    ++m.valid_queries;
    ap_sum += ap / found;
    if (first <= max_rank) ++hits_at[static_cast<std::size_t>(first)];
  }
  if (m.valid_queries == 0) return m;
  m.mAP = ap_sum / m.valid_queries;
  int cum = 0;
  for (int k = 1; k <= max_rank; ++k) {
    cum += hits_at[static_cast<std::size_t>(k)];
    m.cmc[k] = static_cast<double>(cum) / m.valid_queries;
  }
  return m;
}

Metrics evaluate_reference(std::span<const EmbeddingRecord> queries, std::span<const EmbeddingRecord> gallery,
                           int max_rank) {
  if (gallery.empty()) throw ValidationError("evaluate_reference: empty gallery");
  check_dims(queries, gallery);
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  };
  Metrics m;
  std::vector<int> first_hits;
  double ap_sum = 0.0;
  for (const auto& q : queries) {
    std::vector<double> d(gallery.size());
    std::vector<bool> valid(gallery.size()), relevant(gallery.size());
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      d[j] = dist(q.vector, gallery[j].vector);
      const bool same = gallery[j].identity == q.identity;
      valid[j] = !(same && gallery[j].camera == q.camera);
      relevant[j] = valid[j] && same;
    }
    auto before = [&](std::size_t a, std::size_t b) {
      return d[a] < d[b] || (d[a] == d[b] && gallery[a].sample_id < gallery[b].sample_id);
    };
    // For each relevant item: its position among valid items and among relevant items.
    std::vector<std::pair<int, int>> ranks;
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      if (!relevant[j]) continue;
      int pos = 1, rel_pos = 1;
      for (std::size_t i = 0; i < gallery.size(); ++i) {
        if (i == j || !valid[i] || !before(i, j)) continue;
        ++pos;
        if (relevant[i]) ++rel_pos;
      }
      ranks.emplace_back(pos, rel_pos);
    }
    if (ranks.empty()) {
      ++m.dropped_queries;
      continue;
    }
    std::sort(ranks.begin(), ranks.end());
    double ap = 0.0;
    for (const auto& [pos, rel] : ranks) ap += static_cast<double>(rel) / pos;
    ap_sum += ap / static_cast<double>(ranks.size());
    first_hits.push_back(ranks.front().first);
    ++m.valid_queries;
  }
  if (m.valid_queries == 0) return m;
  m.mAP = ap_sum / m.valid_queries;
  for (int k = 1; k <= max_rank; ++k) {
    const auto n = std::count_if(first_hits.begin(), first_hits.end(), [k](int r) { return r <= k; });
    m.cmc[k] = static_cast<double>(n) / m.valid_queries;
  }
  return m;
}

void write_metrics_json(const std::filesystem::path& path, const Metrics& metrics) {
  nlohmann::json j;
  j["mAP"] = metrics.mAP;
  j["R1"] = metrics.rank(1);
  j["R5"] = metrics.rank(5);
  j["R10"] = metrics.rank(10);
  j["valid_queries"] = metrics.valid_queries;
  j["dropped_queries"] = metrics.dropped_queries;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_ranking_csv(const std::filesystem::path& path, std::span<const RankingResult> rankings, int top_k) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "query_id,rank,gallery_id,distance,match,excluded\n" << std::setprecision(10);
  for (const auto& r : rankings) {
    int rank = 0;
    for (std::size_t j = 0; j < r.order.size() && rank < top_k; ++j) {
      if (r.excluded[j]) continue;
      ++rank;
      out << r.query_id << ',' << rank << ',' << r.gallery_ids[j] << ',' << r.distances[j] << ','
          << int(r.matches[j]) << ",0\n";
    }
  }
}

}  // namespace facenet::eval
