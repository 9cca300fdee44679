#pragma once

#include <span>
#include <string>
#include <vector>

#include "facenet/autograd.hpp"

namespace facenet::loss {

inline constexpr double kProbFloor = 1e-8;
inline constexpr double kDefaultMargin = 0.3;

/// Softmax of one row of class scores, clamped below at `eps`.
struct ScoreDistribution {
  std::vector<double> probs;
};
ScoreDistribution to_distribution(std::span<const double> scores, double eps = kProbFloor);
/// KL(p || q) in nats over clamped distributions.
double kl_divergence(const ScoreDistribution& p, const ScoreDistribution& q);

/// Mean softmax cross-entropy of B x C logits against integer labels.
Var cross_entropy(const Var& logits, std::span<const int> labels);

/// Sum over spectra of the batch-mean identity cross-entropy.
Var loss_identity(std::span<const Var> scores, std::span<const int> labels);

/// Batch-hard triplet loss on B x D embeddings with Euclidean distance:
/// mean over anchors of max(m + max_pos D - min_neg D, 0).
Var batch_hard_triplet(const Var& embeddings, std::span<const int> labels, double margin);
/// batch_hard_triplet summed over spectra.
Var loss_triplet(std::span<const Var> embeddings, std::span<const int> labels, double margin = kDefaultMargin);

enum class IcReduction { per_sample, per_batch };
std::string to_string(IcReduction r);
IcReduction parse_ic_reduction(const std::string& text);

/// Inter-modality consistency: the smaller of the two directed KL divergences
/// between the RGB and NI class distributions. per_sample takes the min per
/// row then averages; per_batch sums each direction over the batch, takes
/// the min and divides by B.
Var loss_ic(const Var& scores_rgb, const Var& scores_ni, IcReduction reduction = IcReduction::per_sample,
            double eps = kProbFloor);

struct LossBreakdown {
  double l_id = 0.0;
  double l_tri = 0.0;
  double l_f = 0.0;
  double l_ic = 0.0;
  double l_all = 0.0;
};

struct LossWeights {
  double id = 1.0;
  double tri = 1.0;
  double f = 1.0;
  double ic = 1.0;
};

/// Unit-weighted sum of the four components.
LossBreakdown loss_total(double l_id, double l_tri, double l_f, double l_ic);

/// Differentiable terms of one batch; undefined Vars count as zero.
struct LossTerms {
  Var id, tri, f, ic;
};

/// Weighted objective plus the per-component breakdown. With unit weights
/// l_all equals l_id + l_tri + l_f + l_ic.
std::pair<Var, LossBreakdown> combine(const LossTerms& terms, const LossWeights& weights = {});

}  // namespace facenet::loss
