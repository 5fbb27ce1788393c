#pragma once

// Brute-force reference for the joint task-allocation + beamforming search:
// enumerates every support (subset of AP-user pairs in which each user keeps
// at least one serving AP), prices each feasible support by transmit power
// (through the duality reference) plus per-task computation power, and
// returns the global minimum. Per-AP caps are not modeled, so on instances
// where caps bind the result is a lower bound on any cap-respecting
// allocator. Intended for tiny instances only (num_aps * num_users <= ~12).

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "duality_oracle.hpp"

namespace testsupport {

struct ExhaustiveResult {
  bool feasible = false;
  double best_total = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;  // bit n*K+k set when AP n serves user k
  int best_card = 0;
};

// h[n][k]: length-L channel from AP n to user k.
inline ExhaustiveResult exhaustive_allocation(
    const std::vector<std::vector<VectorXcd>>& h, const VectorXd& gamma,
    double noise_power, double per_task_power, double eta = 1.0) {
  const int N = static_cast<int>(h.size());
  const int K = N > 0 ? static_cast<int>(h[0].size()) : 0;
  const int L = K > 0 ? static_cast<int>(h[0][0].size()) : 0;
  ExhaustiveResult out;
  if (N * K == 0) return out;

  std::vector<VectorXcd> stacked(K, VectorXcd::Zero(N * L));
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < N; ++n) stacked[k].segment(n * L, L) = h[n][k];

  const std::uint32_t total = 1u << (N * K);
  for (std::uint32_t mask = 0; mask < total; ++mask) {
    std::vector<std::vector<int>> support(K);
    bool covered = true;
    int card = 0;
    for (int k = 0; k < K && covered; ++k) {
      for (int n = 0; n < N; ++n)
        if (mask & (1u << (n * K + k))) {
          for (int l = 0; l < L; ++l) support[k].push_back(n * L + l);
          ++card;
        }
      covered = !support[k].empty();
    }
    if (!covered) continue;
    const DualityResult r = duality_power_min(stacked, support, gamma, noise_power);
    if (!r.feasible) continue;
    const double cost = r.total_power / eta + per_task_power * card;
    if (cost < out.best_total) {
      out.best_total = cost;
      out.best_mask = mask;
      out.best_card = card;
      out.feasible = true;
    }
  }
  return out;
}

}  // namespace testsupport
