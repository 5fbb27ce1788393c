#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "edgeinfer/conic.hpp"
#include "edgeinfer/scenario.hpp"

namespace edgeinfer::gsbf {

using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// AP-user pairs allowed to carry a task. Order-insensitive; duplicates and
// out-of-range pairs are rejected during compilation.
using ActiveSet = std::vector<std::pair<int, int>>;

// Joint task-allocation + beamforming instance. Channels in `sc.h` are the
// effective ones (any reflection path already composed in). `weights` prices
// each pair's group norm in the sparsity stage; leave empty for the uniform
// default sqrt(per-task compute power), which charges a group at the standby
// cost its activation would add. `amp_efficiency` divides transmit power in
// the total-power account.
struct BeamformingProblem {
  scenario::EdgeScenario sc;
  MatrixXd weights;            // num_aps x num_users, nonnegative (or empty)
  double amp_efficiency = 1.0;
};

struct BeamformingSolution {
  // w[n][k] has length antennas_per_ap; pairs outside `active` stay exact
  // zeros (structural, never thresholded).
  std::vector<std::vector<VectorXcd>> w;
  ActiveSet active;             // sorted (ap, user) pairs
  VectorXd ap_transmit_power;   // watts, per AP
  double transmit_power = 0.0;  // watts, summed over APs
  double compute_power = 0.0;   // watts, per-task power x |active|
  double total_power = 0.0;     // transmit/amp_efficiency + compute
  VectorXd sinr;                // achieved linear SINR per user
  bool feasible = false;
  conic::SolveStatus status = conic::SolveStatus::kMaxIter;
};

// Solver settings for these cone programs. The residual-to-ratio
// amplification is about 2e3, so this tolerance keeps the direct SINR
// re-check two orders of magnitude inside its 1e-6 allowance.
inline conic::SolveOptions beamforming_solve_options() {
  conic::SolveOptions o;
  o.tol = 1e-11;
  o.max_iter = 400000;
  return o;
}

// Lower the fixed-support power minimization to a second-order cone program:
// a norm epigraph over the stacked beamformers as objective, one rotated
// per-user SINR cone (real part of the served signal dominates the
// interference-plus-noise norm, imaginary part pinned to zero), and one
// power-cap cone per AP when a cap is set. A user with an empty serving set
// yields a structurally infeasible program.
conic::ConicProgram compile_power_min(const BeamformingProblem& prob,
                                      const ActiveSet& active);

// Compile, solve, and recover beamformers (each user's stack is rotated so
// its served signal is real nonnegative). Infeasibility is a valid outcome:
// the flag stays down and the status records why. A user with no serving
// pair short-circuits without invoking the solver.
BeamformingSolution solve_power_min(
    const BeamformingProblem& prob, const ActiveSet& active,
    const conic::SolveOptions& opts = beamforming_solve_options());

// Mixed-norm relaxation over the full support: minimizes the weighted sum of
// per-pair group norms under the same SINR and power-cap constraints. Group
// norms of the result drive the allocation scan; an infeasible relaxation
// means the instance is infeasible at these targets.
BeamformingSolution solve_l12_stage(
    const BeamformingProblem& prob,
    const conic::SolveOptions& opts = beamforming_solve_options());

// Two-stage allocator: run the mixed-norm stage, order pairs by ascending
// group norm, then scan prefixes of that order as deactivation sets (never
// emptying a user's serving set), solving the fixed-support problem for
// each. The scan stops at the first infeasible support; the cheapest total
// power among feasible ones wins, ties broken toward fewer deactivations.
BeamformingSolution group_sparse_allocate(
    const BeamformingProblem& prob,
    const conic::SolveOptions& opts = beamforming_solve_options());

// Power account for a solution: sum ||w||^2 / eta + per-task power x |active|.
double total_power(const BeamformingSolution& sol, double per_task_power,
                   double eta);

}  // namespace edgeinfer::gsbf
