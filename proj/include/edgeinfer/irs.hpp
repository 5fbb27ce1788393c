#pragma once

#include <vector>

#include <Eigen/Dense>

#include "edgeinfer/conic.hpp"
#include "edgeinfer/gsbf.hpp"
#include "edgeinfer/rng.hpp"
#include "edgeinfer/scenario.hpp"

namespace edgeinfer::irs {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// With the beamformers held fixed, each user's SINR constraint is a
// quadratic form in the extended vector [v; t] (reflection coefficients
// plus a homogenizing unit-modulus entry): the served-signal and
// interference powers are rank-one quadratics in that vector, and the
// constraint reads  [v; t]^H Q_k [v; t] >= rhs_k.
struct LiftedPhaseProblem {
  int order = 0;                // num reflection elements + 1
  std::vector<MatrixXcd> data;  // Q_k, order x order, Hermitian
  VectorXd rhs;                 // target_k * noise_power, watts
};

enum class PhaseMethod { kDc, kSdr, kRandom };
const char* to_string(PhaseMethod m);

struct PhaseResult {
  scenario::PhaseVector phases;  // unit-modulus, one entry per element
  PhaseMethod method = PhaseMethod::kDc;
  // Minimum over users of the quadratic constraint margin, re-evaluated at
  // the extracted unit-modulus phases (never the relaxed matrix's value).
  double slack = 0.0;
  double rank_ratio = 0.0;  // second/first eigenvalue of the final iterate
  int dc_iterations = 0;
  bool feasible = false;  // the lifted solve reached optimality
  conic::SolveStatus status = conic::SolveStatus::kMaxIter;
  MatrixXcd lifted;  // final matrix iterate (diagnostics; diag = 1, PSD)
};

// Settings for the phase-update solves. The defaults bound runtime at the
// experiment scale used by the harness.
struct PhaseOptions {
  conic::SolveOptions solver;  // see phase_solve_options()
  int max_dc_iterations = 30;
  // Converged when trace(V) - ||V||_2 <= rank1_gap_rel * trace(V).
  double rank1_gap_rel = 1e-4;
  // Fraction of the best uniform margin released before the rank-one
  // search, so its feasible set keeps an interior.
  double slack_backoff = 0.05;
  int num_randomizations = 200;
};

inline conic::SolveOptions phase_solve_options() {
  conic::SolveOptions o;
  o.tol = 1e-8;
  o.max_iter = 200000;
  return o;
}

inline PhaseOptions default_phase_options() {
  PhaseOptions p;
  p.solver = phase_solve_options();
  return p;
}

// Builds the lifted constraint data from the scenario's raw channel pieces
// and the fixed beamformers. Throws std::invalid_argument when the scenario
// has no reflection elements (callers must skip phase optimization).
LiftedPhaseProblem build_lifted(const scenario::EdgeScenario& sc,
                                const gsbf::BeamformingSolution& sol);

// Minimum over users of the SINR constraint margin
//   |h_k(v)^H w_k|^2 - target_k (interference + noise),
// evaluated from the scenario's raw channels at the given phases.
double direct_min_slack(const scenario::EdgeScenario& sc,
                        const gsbf::BeamformingSolution& sol,
                        const scenario::PhaseVector& phases);

// Rank-one search: maximize the uniform constraint margin over the relaxed
// lifted matrix, then iterate a trace-minus-spectral-norm minimization at a
// locked margin until the iterate is numerically rank one; phases come from
// the top eigenvector.
PhaseResult solve_phase_dc(const LiftedPhaseProblem& lp,
                           const PhaseOptions& opts = default_phase_options());

// Same relaxation without the rank-one search: draws Gaussian samples with
// the relaxed matrix as covariance, projects each to unit modulus, and keeps
// the best directly evaluated margin (ties to the earlier draw; zero draws
// means top-eigenvector extraction only).
PhaseResult solve_phase_sdr(const LiftedPhaseProblem& lp, Rng& rng,
                            const PhaseOptions& opts = default_phase_options());

struct AlternatingOptions {
  PhaseMethod phase_method = PhaseMethod::kDc;
  int max_rounds = 3;
  double power_tol = 1e-4;  // watts; accepted rounds must beat this margin
  int num_restarts = 5;     // round-1 phase draws before declaring infeasible
  PhaseOptions phase;
  conic::SolveOptions beamform;
  MatrixXd weights;  // forwarded to the allocator (empty = default)
  double amp_efficiency = 1.0;

  AlternatingOptions()
      : phase(default_phase_options()),
        beamform(gsbf::beamforming_solve_options()) {}
};

struct AlternatingResult {
  gsbf::BeamformingSolution solution;
  scenario::PhaseVector phases;
  std::vector<double> round_log;  // best total power after each round
  bool feasible = false;
  int restarts_used = 0;
};

// Alternates task allocation (beamformers under the composed effective
// channels) with the phase update, keeping the best pair seen; a candidate
// is accepted only when its re-solved total power improves by more than
// power_tol. Scenarios without reflection elements reduce to a single
// allocation call. Random draws (initial phases, restarts, randomization
// samples) consume `rng` in a fixed documented order.
AlternatingResult alternating_optimize(const scenario::EdgeScenario& sc,
                                       const AlternatingOptions& opts,
                                       Rng& rng);

}  // namespace edgeinfer::irs
