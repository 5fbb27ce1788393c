#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "edgeinfer/linalg.hpp"

namespace edgeinfer::conic {

using Eigen::VectorXd;

// Cone of one constraint block, in row order.
//   zero(m)   : m rows, expression == 0
//   nonneg(m) : m rows, expression >= 0 elementwise
//   soc(q)    : q rows (t; z), t >= ||z||_2
//   psd(p)    : p(p+1)/2 rows, svec of a real symmetric p x p PSD matrix
//               (scaled lower triangle, off-diagonals multiplied by sqrt(2))
enum class ConeKind { kZero, kNonneg, kSoc, kPsd };

struct ConeBlock {
  ConeKind kind;
  int size;  // m, q, or p depending on kind
};

inline int cone_rows(const ConeBlock& blk) {
  return blk.kind == ConeKind::kPsd ? svec_len(blk.size) : blk.size;
}

// Cone-constrained linear program
//   minimize    c' x
//   subject to  A x + b  in  K_1 x ... x K_B
// with A stored as triplets over the concatenated block rows.
struct ConicProgram {
  int num_vars = 0;
  VectorXd c;
  VectorXd b;
  std::vector<Eigen::Triplet<double>> entries;
  std::vector<ConeBlock> cones;

  int num_rows() const {
    int m = 0;
    for (const auto& blk : cones) m += cone_rows(blk);
    return m;
  }
};

enum class SolveStatus { kOptimal, kPrimalInfeasible, kDualInfeasible, kMaxIter };

const char* to_string(SolveStatus s);

struct SolveOptions {
  double tol = 1e-6;
  int max_iter = 50000;
  double relax_alpha = 1.5;
  int check_interval = 25;
  int ruiz_iters = 10;
  bool verbose = false;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::kMaxIter;
  VectorXd x;  // primal
  VectorXd y;  // dual multipliers, one per constraint row
  VectorXd s;  // cone slack, s = A x + b at convergence
  double objective = 0.0;
  double res_primal = 0.0;
  double res_dual = 0.0;
  double res_gap = 0.0;
  double comp_slack = 0.0;
  int iterations = 0;
};

// Operator-splitting solve of the homogeneous self-dual embedding.
// Deterministic and single-threaded; an optional warm start reuses a
// previous solution of a problem with the same dimensions.
ConicSolution solve_conic(const ConicProgram& p, const SolveOptions& opts = {},
                          const ConicSolution* warm = nullptr);

// Reusable solver state: keeps the factorization so that repeated solves of
// programs with identical A and b (different c) or identical structure skip
// the setup cost.
class ConicSolver {
 public:
  explicit ConicSolver(const ConicProgram& p, const SolveOptions& opts = {});

  // Re-solve after replacing the objective; A, b and the cones are unchanged.
  void set_objective(const VectorXd& c);

  ConicSolution solve(const ConicSolution* warm = nullptr);

 private:
  void factorize();
  void project_dual_cone(VectorXd& y) const;
  void compute_residuals(const VectorXd& x, const VectorXd& y, const VectorXd& s,
                         double& rp, double& rd, double& gap, double& comp,
                         double& obj) const;

  SolveOptions opts_;
  int n_ = 0, m_ = 0;
  std::vector<ConeBlock> cones_;
  Eigen::SparseMatrix<double> A_;       // original
  Eigen::SparseMatrix<double> As_;      // scaled: D A E
  VectorXd b_, c_;                      // original
  VectorXd bs_, cs_;                    // scaled
  VectorXd row_scale_, col_scale_;      // D, E diagonals
  double b_scale_ = 1.0, c_scale_ = 1.0;  // sigma, rho
  Eigen::LLT<Eigen::MatrixXd> llt_;     // I + As' As
  VectorXd g_;                          // M^{-1} h, h = (cs; bs)
  double g_denom_ = 1.0;                // 1 + h' g
};

}  // namespace edgeinfer::conic
