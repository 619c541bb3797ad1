#ifndef CYCCONF_CYCMATCH_HPP_
#define CYCCONF_CYCMATCH_HPP_

#include "cycconf/mat.hpp"

namespace cycconf::cycmatch {

// The matching rule applied in both the forward (t0 -> t1) and backward
// (t1 -> t0) passes of the time cycle.
//
//   kConfusion:   softmax over +distance; the largest weight lands on the
//                 most different instance.
//   kConsistency: softmax over -distance; the largest weight lands on the
//                 nearest neighbor (the baseline behavior).
enum class MatchMode { kConfusion, kConsistency };

struct MatchConfig {
  double temperature = 1.0;  // logits are distance / temperature
  // When set, the loss is the mean of the t0->t1->t0 and t1->t0->t1 cycles.
  bool symmetric = false;
};

struct SslLossResult {
  double loss = 0.0;
  Mat grad_u;  // N0 x D, d loss / d U
  Mat grad_v;  // N1 x D, d loss / d V
  bool skipped = false;
};

// out[i][j] = squared L2 distance between row i of u and row j of v.
Mat pairwise_sq_dist(const Mat& u, const Mat& v);

// Row-wise stabilized softmax of dist/temperature (kConfusion) or
// -dist/temperature (kConsistency). Throws ContractError when dist has no
// columns: an empty target frame cannot be matched, callers skip the pair.
Mat forward_match_weights(const Mat& dist, MatchMode mode = MatchMode::kConfusion,
                          double temperature = 1.0);

// vhat = alpha * v; row i is the soft target assembled for instance i.
Mat soft_targets(const Mat& alpha, const Mat& v);

// out[k][i] = squared distance between u row k and vhat row i. Column i is
// the logit vector classifying which t0 instance the soft target i matches
// back to.
Mat backward_logits(const Mat& u, const Mat& vhat);

// Full differentiable cycle: distances -> forward weights -> soft target ->
// backward classification with the originating index as the positive class.
// Gradients flow through the entire cycle including the soft target.
SslLossResult cycle_confusion_loss(const Mat& u, const Mat& v,
                                   const MatchConfig& cfg = {});

// Same cycle with nearest-neighbor (negated distance) matching on both
// passes.
SslLossResult cycle_consistency_loss(const Mat& u, const Mat& v,
                                     const MatchConfig& cfg = {});

// H = -(1/N0) sum_ij alpha_ij log alpha_ij, with 0 log 0 := 0.
// Diagnostic for the flatness of the forward matching distribution.
double matching_entropy(const Mat& alpha);

}  // namespace cycconf::cycmatch

#endif  // CYCCONF_CYCMATCH_HPP_
