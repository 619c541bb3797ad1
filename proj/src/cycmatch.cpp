#include "cycconf/cycmatch.hpp"

#include <algorithm>
#include <cmath>

#include "cycconf/util.hpp"

namespace cycconf::cycmatch {

namespace {

double mode_sign(MatchMode mode) {
  return mode == MatchMode::kConfusion ? 1.0 : -1.0;
}

// One direction of the cycle, with gradients for every entry of u and v.
//
// Shorthand (sigma = +1 confusion, -1 consistency; tau = temperature):
//   S[i][j]  = ||u_i - v_j||^2
//   A        = row softmax of (sigma/tau) S
//   vhat_i   = sum_j A[i][j] v_j
//   B[k][i]  = ||u_k - vhat_i||^2
//   q^i      = softmax of (sigma/tau) B[:,i]
//   loss     = -(1/N0) sum_i log q^i_i
SslLossResult cycle_loss_one_way(const Mat& u, const Mat& v, MatchMode mode,
                                 double temperature) {
  const int n0 = u.rows();
  const int n1 = v.rows();
  const int d = u.cols();
  const double sig = mode_sign(mode) / temperature;

  SslLossResult res;
  res.grad_u = Mat(n0, d);
  res.grad_v = Mat(n1, d);
  if (n0 == 0 || n1 == 0) {
    res.skipped = true;
    return res;
  }
  if (d != v.cols())
    throw ContractError("cycle loss: embedding dims differ");

  const Mat s = pairwise_sq_dist(u, v);
  const Mat alpha = forward_match_weights(s, mode, temperature);
  const Mat vhat = soft_targets(alpha, v);
  const Mat b = backward_logits(u, vhat);

  // Backward classification per soft target i; logits are column i of b.
  Mat q(n0, n0);  // q(k, i) = softmax over k of (sig * b[:, i])
  double loss = 0.0;
  for (int i = 0; i < n0; ++i) {
    double mx = -1e300;
    for (int k = 0; k < n0; ++k) mx = std::max(mx, sig * b(k, i));
    double z = 0.0;
    for (int k = 0; k < n0; ++k) z += std::exp(sig * b(k, i) - mx);
    double logz = std::log(z) + mx;
    for (int k = 0; k < n0; ++k) q(k, i) = std::exp(sig * b(k, i) - logz);
    loss += logz - sig * b(i, i);  // -log q(i, i)
  }
  loss /= n0;
  if (!std::isfinite(loss)) throw NumericError("cycle loss: non-finite loss");
  res.loss = loss;

  // d loss / d b, then through b into u and vhat.
  Mat dvhat(n0, d);
  for (int i = 0; i < n0; ++i) {
    for (int k = 0; k < n0; ++k) {
      const double gb = sig * (q(k, i) - (k == i ? 1.0 : 0.0)) / n0;
      if (gb == 0.0) continue;
      const double* uk = u.row(k);
      const double* vh = vhat.row(i);
      double* gu = res.grad_u.row(k);
      double* gv = dvhat.row(i);
      for (int c = 0; c < d; ++c) {
        const double diff2 = 2.0 * (uk[c] - vh[c]);
        gu[c] += gb * diff2;
        gv[c] -= gb * diff2;
      }
    }
  }

  // Through the soft target: vhat = alpha v.
  Mat dalpha(n0, n1);
  for (int i = 0; i < n0; ++i) {
    const double* gvh = dvhat.row(i);
    for (int j = 0; j < n1; ++j) {
      const double* vj = v.row(j);
      double* gv = res.grad_v.row(j);
      const double a = alpha(i, j);
      double dot = 0.0;
      for (int c = 0; c < d; ++c) {
        gv[c] += a * gvh[c];
        dot += gvh[c] * vj[c];
      }
      dalpha(i, j) = dot;
    }
  }

  // Through the forward softmax into the distances.
  Mat ds(n0, n1);
  for (int i = 0; i < n0; ++i) {
    double inner = 0.0;
    for (int j = 0; j < n1; ++j) inner += alpha(i, j) * dalpha(i, j);
    for (int j = 0; j < n1; ++j)
      ds(i, j) = sig * alpha(i, j) * (dalpha(i, j) - inner);
  }

  // Through the distances into the embeddings.
  for (int i = 0; i < n0; ++i) {
    const double* ui = u.row(i);
    double* gu = res.grad_u.row(i);
    for (int j = 0; j < n1; ++j) {
      const double g = ds(i, j);
      if (g == 0.0) continue;
      const double* vj = v.row(j);
      double* gv = res.grad_v.row(j);
      for (int c = 0; c < d; ++c) {
        const double diff2 = 2.0 * (ui[c] - vj[c]);
        gu[c] += g * diff2;
        gv[c] -= g * diff2;
      }
    }
  }

  if (!res.grad_u.all_finite() || !res.grad_v.all_finite())
    throw NumericError("cycle loss: non-finite gradient");
  return res;
}

SslLossResult cycle_loss(const Mat& u, const Mat& v, MatchMode mode,
                         const MatchConfig& cfg) {
  SslLossResult fwd = cycle_loss_one_way(u, v, mode, cfg.temperature);
  if (!cfg.symmetric || fwd.skipped) return fwd;

  SslLossResult rev = cycle_loss_one_way(v, u, mode, cfg.temperature);
  SslLossResult res;
  res.loss = 0.5 * (fwd.loss + rev.loss);
  res.grad_u = fwd.grad_u;
  res.grad_v = fwd.grad_v;
  for (int i = 0; i < res.grad_u.rows(); ++i)
    for (int c = 0; c < res.grad_u.cols(); ++c)
      res.grad_u(i, c) = 0.5 * (res.grad_u(i, c) + rev.grad_v(i, c));
  for (int j = 0; j < res.grad_v.rows(); ++j)
    for (int c = 0; c < res.grad_v.cols(); ++c)
      res.grad_v(j, c) = 0.5 * (res.grad_v(j, c) + rev.grad_u(j, c));
  return res;
}

}  // namespace

Mat pairwise_sq_dist(const Mat& u, const Mat& v) {
  if (u.cols() != v.cols())
    throw ContractError("pairwise_sq_dist: embedding dims differ (" +
                        std::to_string(u.cols()) + " vs " +
                        std::to_string(v.cols()) + ")");
  if (!u.all_finite() || !v.all_finite())
    throw NumericError("pairwise_sq_dist: non-finite input");
  Mat out(u.rows(), v.rows());
  const int d = u.cols();
  for (int i = 0; i < u.rows(); ++i) {
    const double* ui = u.row(i);
    for (int j = 0; j < v.rows(); ++j) {
      const double* vj = v.row(j);
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        const double t = ui[c] - vj[c];
        acc += t * t;
      }
      out(i, j) = acc;
    }
  }
  return out;
}

Mat forward_match_weights(const Mat& dist, MatchMode mode, double temperature) {
  if (dist.cols() == 0)
    throw ContractError("forward_match_weights: no target instances");
  if (!dist.all_finite())
    throw NumericError("forward_match_weights: non-finite distances");
  if (temperature <= 0.0)
    throw ContractError("forward_match_weights: temperature must be positive");
  const double sig = mode_sign(mode) / temperature;
  Mat alpha(dist.rows(), dist.cols());
  for (int i = 0; i < dist.rows(); ++i) {
    double mx = -1e300;
    for (int j = 0; j < dist.cols(); ++j) mx = std::max(mx, sig * dist(i, j));
    double z = 0.0;
    for (int j = 0; j < dist.cols(); ++j) {
      const double e = std::exp(sig * dist(i, j) - mx);
      alpha(i, j) = e;
      z += e;
    }
    for (int j = 0; j < dist.cols(); ++j) alpha(i, j) /= z;
  }
  return alpha;
}

Mat soft_targets(const Mat& alpha, const Mat& v) {
  if (alpha.cols() != v.rows())
    throw ContractError("soft_targets: alpha cols != v rows");
  Mat out(alpha.rows(), v.cols());
  for (int i = 0; i < alpha.rows(); ++i) {
    double* oi = out.row(i);
    for (int j = 0; j < v.rows(); ++j) {
      const double a = alpha(i, j);
      const double* vj = v.row(j);
      for (int c = 0; c < v.cols(); ++c) oi[c] += a * vj[c];
    }
  }
  return out;
}

Mat backward_logits(const Mat& u, const Mat& vhat) {
  if (u.cols() != vhat.cols())
    throw ContractError("backward_logits: dims differ");
  Mat out(u.rows(), vhat.rows());
  const int d = u.cols();
  for (int k = 0; k < u.rows(); ++k) {
    const double* uk = u.row(k);
    for (int i = 0; i < vhat.rows(); ++i) {
      const double* vh = vhat.row(i);
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        const double t = uk[c] - vh[c];
        acc += t * t;
      }
      out(k, i) = acc;
    }
  }
  return out;
}

SslLossResult cycle_confusion_loss(const Mat& u, const Mat& v,
                                   const MatchConfig& cfg) {
  return cycle_loss(u, v, MatchMode::kConfusion, cfg);
}

SslLossResult cycle_consistency_loss(const Mat& u, const Mat& v,
                                     const MatchConfig& cfg) {
  return cycle_loss(u, v, MatchMode::kConsistency, cfg);
}

double matching_entropy(const Mat& alpha) {
  if (alpha.rows() == 0) return 0.0;
  double h = 0.0;
  for (int i = 0; i < alpha.rows(); ++i) {
    for (int j = 0; j < alpha.cols(); ++j) {
      const double a = alpha(i, j);
      if (a < 0.0)
        throw ContractError("matching_entropy: negative entry");
      if (a > 0.0) h -= a * std::log(a);
    }
  }
  return h / alpha.rows();
}

}  // namespace cycconf::cycmatch
