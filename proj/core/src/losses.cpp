#include "facenet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "facenet/errors.hpp"
#include "facenet/ops.hpp"

namespace facenet::loss {

namespace {

void softmax_row(const double* x, std::int64_t n, double* out) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - m);
    s += out[i];
  }
  for (std::int64_t i = 0; i < n; ++i) out[i] /= s;
}

void require_matrix(const Var& v, const char* what) {
  if (v.value().rank() != 2) throw ShapeError(std::string(what) + ": expected B x C, got " + shape_string(v.shape()));
}

}  // namespace

ScoreDistribution to_distribution(std::span<const double> scores, double eps) {
  ScoreDistribution d;
  d.probs.resize(scores.size());
  softmax_row(scores.data(), static_cast<std::int64_t>(scores.size()), d.probs.data());
  for (auto& p : d.probs) p = std::max(p, eps);
  return d;
}

double kl_divergence(const ScoreDistribution& p, const ScoreDistribution& q) {
  if (p.probs.size() != q.probs.size()) throw ShapeError("kl_divergence: class count mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) kl += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
  return kl;
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  require_matrix(logits, "cross_entropy");
  const Tensor& z = logits.value();
  const std::int64_t B = z.dim(0), C = z.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != B) throw ShapeError("cross_entropy: label count != batch size");
  Tensor probs({B, C});
  double total = 0.0;
  for (std::int64_t b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= C) throw ValidationError("cross_entropy: label " + std::to_string(y) + " out of range");
    const double* row = z.raw() + b * C;
    double m = -std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < C; ++c) m = std::max(m, row[c]);
    double s = 0.0;
    for (std::int64_t c = 0; c < C; ++c) s += std::exp(row[c] - m);
    const double lse = m + std::log(s);
    total += lse - row[y];
    for (std::int64_t c = 0; c < C; ++c) probs.at(b, c) = std::exp(row[c] - lse);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return Var::from_op(Tensor({1}, total / static_cast<double>(B)), {logits},
                      [probs = std::move(probs), lab = std::move(lab), B, C](const Tensor& g, std::vector<Tensor*>& pg) {
                        const double s = g[0] / static_cast<double>(B);
                        for (std::int64_t b = 0; b < B; ++b) {
                          for (std::int64_t c = 0; c < C; ++c) {
                            const double target = c == lab[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
                            pg[0]->at(b, c) += s * (probs.at(b, c) - target);
                          }
                        }
                      });
}

Var loss_identity(std::span<const Var> scores, std::span<const int> labels) {
  if (scores.empty()) throw ShapeError("loss_identity: no spectra");
  Var total = cross_entropy(scores[0], labels);
  for (std::size_t i = 1; i < scores.size(); ++i) total = ops::add(total, cross_entropy(scores[i], labels));
  return total;
}

Var batch_hard_triplet(const Var& embeddings, std::span<const int> labels, double margin) {
  require_matrix(embeddings, "batch_hard_triplet");
  const Tensor& x = embeddings.value();
  const std::int64_t B = x.dim(0), D = x.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != B) throw ShapeError("batch_hard_triplet: label count != batch size");

  // A floor on squared distance keeps sqrt differentiable for coincident points.
  constexpr double kMinSq = 1e-12;
  Tensor dist({B, B});
  for (std::int64_t i = 0; i < B; ++i) {
    for (std::int64_t j = 0; j < B; ++j) {
      double s = 0.0;
      for (std::int64_t d = 0; d < D; ++d) {
        const double diff = x.at(i, d) - x.at(j, d);
        s += diff * diff;
      }
      dist.at(i, j) = std::sqrt(std::max(s, kMinSq));
    }
  }

  struct Active {
    std::int64_t anchor, pos, neg;
  };
  std::vector<Active> active;
  double total = 0.0;
  for (std::int64_t a = 0; a < B; ++a) {
    std::int64_t pos = -1, neg = -1;
    for (std::int64_t j = 0; j < B; ++j) {
      if (j == a) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)]) {
        if (pos < 0 || dist.at(a, j) > dist.at(a, pos)) pos = j;
      } else if (neg < 0 || dist.at(a, j) < dist.at(a, neg)) {
        neg = j;
      }
    }
    if (pos < 0 || neg < 0) {
      throw ValidationError("batch_hard_triplet: anchor " + std::to_string(a) + " lacks a positive or a negative");
    }
    const double hinge = margin + dist.at(a, pos) - dist.at(a, neg);
    if (hinge > 0.0) {
      total += hinge;
      active.push_back({a, pos, neg});
    }
  }

  return Var::from_op(Tensor({1}, total / static_cast<double>(B)), {embeddings},
                      [x, dist = std::move(dist), active = std::move(active), B, D](const Tensor& g,
                                                                                    std::vector<Tensor*>& pg) {
                        const double s = g[0] / static_cast<double>(B);
                        Tensor& gx = *pg[0];
                        auto pull = [&](std::int64_t i, std::int64_t j, double w) {
                          const double inv = w / dist.at(i, j);
                          if (dist.at(i, j) <= 1e-6) return;  // floored: zero gradient
                          for (std::int64_t d = 0; d < D; ++d) {
                            const double u = (x.at(i, d) - x.at(j, d)) * inv;
                            gx.at(i, d) += u;
                            gx.at(j, d) -= u;
                          }
                        };
                        for (const auto& t : active) {
                          pull(t.anchor, t.pos, s);
                          pull(t.anchor, t.neg, -s);
                        }
                      });
}

Var loss_triplet(std::span<const Var> embeddings, std::span<const int> labels, double margin) {
  if (embeddings.empty()) throw ShapeError("loss_triplet: no spectra");
  Var total = batch_hard_triplet(embeddings[0], labels, margin);
  for (std::size_t i = 1; i < embeddings.size(); ++i)
    total = ops::add(total, batch_hard_triplet(embeddings[i], labels, margin));
  return total;
}

std::string to_string(IcReduction r) { return r == IcReduction::per_sample ? "per_sample" : "per_batch"; }

IcReduction parse_ic_reduction(const std::string& text) {
  if (text == "per_sample") return IcReduction::per_sample;
  if (text == "per_batch") return IcReduction::per_batch;
  throw ConfigError("unknown ic_reduction '" + text + "'");
}

Var loss_ic(const Var& scores_rgb, const Var& scores_ni, IcReduction reduction, double eps) {
  require_matrix(scores_rgb, "loss_ic");
  require_matrix(scores_ni, "loss_ic");
  if (scores_rgb.shape() != scores_ni.shape()) throw ShapeError("loss_ic: score shapes differ");
  const Tensor& a = scores_rgb.value();
  const Tensor& b = scores_ni.value();
  const std::int64_t B = a.dim(0), C = a.dim(1);

  // Raw softmax rows (for the Jacobian) and clamped copies (for the divergence).
  Tensor pa({B, C}), pb({B, C});
  for (std::int64_t i = 0; i < B; ++i) {
    softmax_row(a.raw() + i * C, C, pa.raw() + i * C);
    softmax_row(b.raw() + i * C, C, pb.raw() + i * C);
  }
  auto clamp = [eps](double p) { return std::max(p, eps); };
  std::vector<double> kl_ab(static_cast<std::size_t>(B)), kl_ba(static_cast<std::size_t>(B));
  for (std::int64_t i = 0; i < B; ++i) {
    double ab = 0.0, ba = 0.0;
    for (std::int64_t c = 0; c < C; ++c) {
      const double p = clamp(pa.at(i, c)), q = clamp(pb.at(i, c));
      ab += p * std::log(p / q);
      ba += q * std::log(q / p);
    }
    kl_ab[static_cast<std::size_t>(i)] = ab;
    kl_ba[static_cast<std::size_t>(i)] = ba;
  }

  // direction[i] = true when KL(rgb || ni) is the selected term for row i.
  std::vector<bool> direction(static_cast<std::size_t>(B));
  double value = 0.0;
  if (reduction == IcReduction::per_sample) {
    for (std::size_t i = 0; i < direction.size(); ++i) {
      direction[i] = kl_ab[i] <= kl_ba[i];
      value += direction[i] ? kl_ab[i] : kl_ba[i];
    }
  } else {
    double sab = 0.0, sba = 0.0;
    for (std::size_t i = 0; i < direction.size(); ++i) {
      sab += kl_ab[i];
      sba += kl_ba[i];
    }
    const bool ab = sab <= sba;
    std::fill(direction.begin(), direction.end(), ab);
    value = ab ? sab : sba;
  }
  value /= static_cast<double>(B);

  return Var::from_op(
      Tensor({1}, value), {scores_rgb, scores_ni},
      [pa, pb, direction, B, C, eps](const Tensor& g, std::vector<Tensor*>& pg) {
        const double s = g[0] / static_cast<double>(B);
        std::vector<double> dp(static_cast<std::size_t>(C)), dq(static_cast<std::size_t>(C));
        for (std::int64_t i = 0; i < B; ++i) {
          // P is the first argument of the selected KL, Q the second.
          const bool ab = direction[static_cast<std::size_t>(i)];
          const double* P = (ab ? pa : pb).raw() + i * C;
          const double* Q = (ab ? pb : pa).raw() + i * C;
          for (std::int64_t c = 0; c < C; ++c) {
            const double p = std::max(P[c], eps), q = std::max(Q[c], eps);
            dp[static_cast<std::size_t>(c)] = P[c] > eps ? std::log(p / q) + 1.0 : 0.0;
            dq[static_cast<std::size_t>(c)] = Q[c] > eps ? -p / q : 0.0;
          }
          // Back through the softmax: dz = y * (g - <y, g>).
          auto through_softmax = [&](const double* y, const std::vector<double>& gy, Tensor* out) {
            if (!out) return;
            double dot = 0.0;
            for (std::int64_t c = 0; c < C; ++c) dot += y[c] * gy[static_cast<std::size_t>(c)];
            for (std::int64_t c = 0; c < C; ++c) out->at(i, c) += s * y[c] * (gy[static_cast<std::size_t>(c)] - dot);
          };
          through_softmax(P, dp, ab ? pg[0] : pg[1]);
          through_softmax(Q, dq, ab ? pg[1] : pg[0]);
        }
      });
}

LossBreakdown loss_total(double l_id, double l_tri, double l_f, double l_ic) {
  return {l_id, l_tri, l_f, l_ic, l_id + l_tri + l_f + l_ic};
}

std::pair<Var, LossBreakdown> combine(const LossTerms& terms, const LossWeights& weights) {
  auto value = [](const Var& v) { return v.defined() ? v.value()[0] : 0.0; };
  LossBreakdown br;
  br.l_id = value(terms.id);
  br.l_tri = value(terms.tri);
  br.l_f = value(terms.f);
  br.l_ic = value(terms.ic);

  Var total;
  double all = 0.0;
  auto accumulate = [&](const Var& term, double w) {
    if (!term.defined()) return;
    Var scaled = w == 1.0 ? term : ops::scale(term, w);
    total = total.defined() ? ops::add(total, scaled) : scaled;
    all += w * term.value()[0];
  };
  accumulate(terms.id, weights.id);
  accumulate(terms.tri, weights.tri);
  accumulate(terms.f, weights.f);
  accumulate(terms.ic, weights.ic);
  if (!total.defined()) total = Var(Tensor({1}, 0.0));
  // The breakdown reports the sum in component order so unit weights give
  // exactly l_id + l_tri + l_f + l_ic.
  br.l_all = all;
  return {total, br};
}

}  // namespace facenet::loss
