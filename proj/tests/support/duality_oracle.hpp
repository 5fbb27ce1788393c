#pragma once

// Independent reference for minimum-total-transmit-power coordinated
// beamforming under per-user SINR targets, used to cross-check the conic
// solves. It never touches the production solver: the downlink optimum is
// obtained through the equivalent uplink problem, whose optimal powers are
// the fixed point of a standard interference iteration, and the downlink
// beamformers are recovered as scaled MMSE receive directions. Per-AP power
// caps are outside this model; callers use it where the caps are slack or
// as a lower bound.
//
// Supports task-allocation restrictions: each user's beamformer may be
// confined to an arbitrary subset of the stacked AP-antenna coordinates.
// The uplink equivalent then listens on that same subset, so the iteration
// runs on masked channels.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace testsupport {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

struct DualityResult {
  bool feasible = false;
  double total_power = 0.0;            // sum of ||w_k||^2
  std::vector<VectorXcd> w;            // per user, full stacked length (zeros off-support)
  VectorXd uplink_powers;              // fixed-point q, for diagnostics
};

// channels: per user, the full stacked channel (all APs x antennas).
// support: per user, sorted coordinate indices its beamformer may use.
// gamma: per-user linear SINR targets.  noise_power: sigma^2.
inline DualityResult duality_power_min(const std::vector<VectorXcd>& channels,
                                       const std::vector<std::vector<int>>& support,
                                       const VectorXd& gamma, double noise_power,
                                       int max_iter = 5000, double tol = 1e-13) {
  const int K = static_cast<int>(channels.size());
  DualityResult out;
  if (K == 0) {
    out.feasible = true;
    return out;
  }
  const int dim = static_cast<int>(channels[0].size());
  for (int k = 0; k < K; ++k)
    if (support[k].empty()) return out;  // user cannot be served

  // Masked copies: hk_on[k][j] = channel of user k restricted to user j's
  // allowed coordinates (the coupling the uplink receiver for j sees).
  std::vector<std::vector<VectorXcd>> on(K, std::vector<VectorXcd>(K));
  for (int j = 0; j < K; ++j) {
    const auto& S = support[j];
    for (int k = 0; k < K; ++k) {
      VectorXcd v(static_cast<int>(S.size()));
      for (int i = 0; i < static_cast<int>(S.size()); ++i) v(i) = channels[k](S[i]);
      on[j][k] = std::move(v);
    }
  }

  VectorXd q = VectorXd::Zero(K);
  const double bound = 1e14 * noise_power * (1.0 + gamma.sum());
  bool converged = false;
  for (int it = 0; it < max_iter && !converged; ++it) {
    converged = true;
    for (int k = 0; k < K; ++k) {
      const int sk = static_cast<int>(support[k].size());
      MatrixXcd R = noise_power * MatrixXcd::Identity(sk, sk);
      for (int j = 0; j < K; ++j)
        if (j != k) R.noalias() += q(j) * (on[k][j] * on[k][j].adjoint());
      const VectorXcd hk = on[k][k];
      const double gain = std::real(hk.dot(R.llt().solve(hk).eval()));
      if (!(gain > 0.0)) return out;  // unreachable user
      const double next = gamma(k) / gain;
      if (std::abs(next - q(k)) > tol * std::max(1.0, next)) converged = false;
      q(k) = next;
    }
    if (q.sum() > bound) return out;  // diverging: targets infeasible
  }
  if (!converged) return out;

  // Downlink directions: MMSE receive vectors of the uplink at the fixed
  // point, embedded back into the full coordinate space.
  std::vector<VectorXcd> dirs(K);
  for (int k = 0; k < K; ++k) {
    const int sk = static_cast<int>(support[k].size());
    MatrixXcd R = noise_power * MatrixXcd::Identity(sk, sk);
    for (int j = 0; j < K; ++j)
      if (j != k) R.noalias() += q(j) * (on[k][j] * on[k][j].adjoint());
    VectorXcd u = R.llt().solve(on[k][k]);
    u /= u.norm();
    VectorXcd full = VectorXcd::Zero(dim);
    for (int i = 0; i < static_cast<int>(support[k].size()); ++i)
      full(support[k][i]) = u(i);
    dirs[k] = std::move(full);
  }

  // Power scaling so every SINR holds with equality:
  //   p_k |h_k^H u_k|^2 / gamma_k - sum_{j!=k} p_j |h_k^H u_j|^2 = sigma^2.
  MatrixXd M(K, K);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j) {
      const double g = std::norm(channels[k].dot(dirs[j]));
      M(k, j) = (j == k) ? g / gamma(k) : -g;
    }
  const VectorXd p = M.partialPivLu().solve(VectorXd::Constant(K, noise_power));
  if (!(p.minCoeff() > 0.0) || !p.allFinite()) return out;

  out.feasible = true;
  out.total_power = p.sum();
  out.uplink_powers = q;
  out.w.resize(K);
  for (int k = 0; k < K; ++k) out.w[k] = std::sqrt(p(k)) * dirs[k];
  return out;
}

}  // namespace testsupport
