#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "edgeinfer/scenario.hpp"

namespace edgeinfer::shuffle {

using Eigen::MatrixXcd;
using cd = std::complex<double>;

// One intermediate value to deliver: the destination device, the file it is
// computed from, and the devices able to transmit it (those storing the file).
struct Message {
  int dest = 0;
  int file = 0;
  std::vector<int> transmitters;  // ascending
  std::vector<int> columns;       // matrix column per transmitter, parallel
};

struct MessageSet {
  int num_devices = 0;
  int num_files = 0;
  int num_columns = 0;
  std::vector<Message> messages;
  std::vector<std::vector<int>> stores;  // copied from the placement
};

enum class ConstraintKind { kDesired, kInterference };

// One alignment condition: sum over transmitters of h[k][j] * X(k, col(j,m))
// equals 1 (desired) or 0 (interference the receiver cannot cancel).
struct AlignmentConstraint {
  int receiver = 0;
  int message = 0;
  ConstraintKind kind = ConstraintKind::kDesired;
  std::vector<std::pair<int, cd>> coeffs;  // (column, channel coefficient)
  double rhs = 0.0;
};

struct AffineRankProblem {
  int rows = 0;  // receivers
  int cols = 0;  // transmit pairs
  std::vector<AlignmentConstraint> constraints;
};

struct RankSolution {
  MatrixXcd X;
  int rank = 0;
  double dof = 0.0;  // 1/rank; 0 is the undefined sentinel (rank 0 or failure)
  double residual = 0.0;  // max constraint violation of X
  bool success = false;
  int dc_iterations = 0;    // convex subproblem solves performed
  int admm_iterations = 0;  // splitting iterations summed over all solves
  std::vector<double> objective_per_r;  // DC objective at exit of each tried r
};

// Factorized scheme: decoding column per receiver, precoding column per
// (transmitter, message) pair, over r channel uses; U^H V reproduces X.
struct TransceiverScheme {
  int r = 0;
  MatrixXcd U;  // r x K
  MatrixXcd V;  // r x C
};

struct RankSolveOptions {
  double eps_dc = 1e-4;     // DC objective threshold, on the normalized scale
  int max_dc_iter = 50;     // inner solves per candidate rank
  int r_max = 0;            // 0 means min(rows, cols)
  double tau_rank = 1e-3;   // relative singular-value cutoff
  double admm_tol = 1e-7;   // inner solver relative residual
  int admm_max_iter = 4000;
};

MessageSet build_message_set(const scenario::Placement& p);

AffineRankProblem compile_alignment_constraints(const MessageSet& ms,
                                                const scenario::InterferenceChannel& ch);

// Independent evaluation of max |constraint residual| at X.
double constraint_residual(const AffineRankProblem& p, const MatrixXcd& X);

// Numerical rank: count of singular values above tau_rank times the largest;
// zero when the Frobenius norm is at most 1e-9.
int effective_rank(const MatrixXcd& X, double tau_rank = 1e-3);

// Nuclear-norm minimization subject to the alignment constraints.
RankSolution solve_nuclear(const AffineRankProblem& p,
                           const RankSolveOptions& opts = {});

// DC rank minimization: for r = 1, 2, ... linearize the Ky Fan r-norm and
// re-solve until the tail of the spectrum falls below eps_dc; the first
// certified r is the rank.
RankSolution solve_dc_rank(const AffineRankProblem& p,
                           const RankSolveOptions& opts = {});

// Truncated-SVD factor split of a certified solution.
TransceiverScheme recover_transceivers(const RankSolution& sol);

struct DofCurveOptions {
  std::vector<int> K_list;
  int num_files = 5;
  int files_per_device = 2;
  int trials = 100;
  std::uint64_t seed = 1;
  bool irs = false;
  int irs_elements = 0;
  int irs_candidates = 1;  // random phase vectors tried per trial
  RankSolveOptions solve;
};

struct DofTrialRecord {
  int K = 0;
  int trial = 0;
  bool ok_nuclear = false, ok_dc = false;
  int rank_nuclear = 0, rank_dc = 0;
  double dof_nuclear = 0.0, dof_dc = 0.0;
};

struct DofCurveRow {
  int K = 0;
  int trials = 0;
  double mean_dof_nuclear = 0.0, mean_dof_dc = 0.0;
  int fail_nuclear = 0, fail_dc = 0;
};

// One full trial (placement, channel, optional best-of-R IRS phase search,
// both solvers). Deterministic in (opts, K, trial).
DofTrialRecord run_dof_trial(const DofCurveOptions& opts, int K, int trial);

namespace detail {
// Gram-matrix spectral path used inside the solvers (cheap when rows << cols);
// cross-checked in tests against the dense-SVD reference routines.
Eigen::VectorXd singular_values_gram(const MatrixXcd& W);
MatrixXcd svt_gram(const MatrixXcd& W, double tau);
MatrixXcd kyfan_subgradient_gram(const MatrixXcd& W, int r);
}  // namespace detail

// Monte Carlo sweep. workers = 1 runs the serial reference loop; workers > 1
// runs the OpenMP loop. Results are identical byte for byte because trials
// are seeded by index and merged by index.
std::vector<DofCurveRow> evaluate_dof_curve(const DofCurveOptions& opts,
                                            std::vector<DofTrialRecord>* records = nullptr,
                                            int workers = 1);

}  // namespace edgeinfer::shuffle
