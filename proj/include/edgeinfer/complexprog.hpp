#pragma once

#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "edgeinfer/conic.hpp"

namespace edgeinfer::conic {

using cd = std::complex<double>;

// Real-valued affine expression over the builder's real slots.
struct RExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  RExpr& add(int slot, double coeff) {
    if (coeff != 0.0) terms.push_back({slot, coeff});
    return *this;
  }
};

// Complex-valued affine expression: each real slot carries a complex
// coefficient, so value = sum coeff_s * x_s + constant.
struct CExpr {
  std::vector<std::pair<int, cd>> terms;
  cd constant{0.0, 0.0};

  CExpr& add(int slot, cd coeff) {
    if (coeff != cd{0.0, 0.0}) terms.push_back({slot, coeff});
    return *this;
  }
  RExpr real_part() const;
  RExpr imag_part() const;
};

// Builds a conic program from complex-valued pieces and lowers it to the
// real ConicProgram form. Layout (documented, relied on by callers):
//   - a real variable occupies one slot;
//   - a complex variable occupies two adjacent slots (re, im);
//   - a Hermitian matrix variable of order p occupies p diagonal slots
//     followed by (re, im) pairs of the strict lower triangle in
//     column-major order;
//   - a complex entry inside a second-order cone contributes its (re, im)
//     rows adjacently, so a cone over t >= ||w||, w in C^k, has 2k+1 rows;
//   - a Hermitian PSD constraint becomes a real PSD block of order 2p on
//     the symmetric embedding [[X, -Y], [Y, X]] of V = X + iY.
class ComplexProgramBuilder {
 public:
  int add_rvar();
  int add_cvar();
  int add_hermitian_var(int p);

  int cvar_re(int h) const { return cvars_[h]; }
  int cvar_im(int h) const { return cvars_[h] + 1; }
  int herm_order(int h) const { return herm_[h].p; }
  int herm_diag_slot(int h, int i) const;
  int herm_re_slot(int h, int i, int j) const;  // i > j
  int herm_im_slot(int h, int i, int j) const;  // i > j

  // e += coeff * z_h and e += coeff * conj(z_h).
  void add_cvar_term(CExpr& e, int h, cd coeff) const;
  void add_conj_cvar_term(CExpr& e, int h, cd coeff) const;

  // e += scale * Tr(Q V_h) for Hermitian Q (the trace is then real).
  void add_trace_term(RExpr& e, const Eigen::MatrixXcd& Q, int h,
                      double scale = 1.0) const;

  void add_zero(const RExpr& e);
  void add_zero(const CExpr& e);  // two rows, real then imaginary
  void add_nonneg(const RExpr& e);
  // head >= sqrt(sum |c_i|^2 + sum r_j^2)
  void add_soc(const RExpr& head, const std::vector<CExpr>& centries,
               const std::vector<RExpr>& rentries = {});
  void add_psd(int h);  // V_h is Hermitian PSD

  void set_objective(const RExpr& e);
  double objective_offset() const { return obj_offset_; }

  int num_slots() const { return num_slots_; }
  int num_rows() const { return num_rows_; }

  // Lower to the real conic program (named after the operation it performs:
  // the standard real embedding of complex cone constraints).
  ConicProgram embed_complex() const;

  double rvar_value(const VectorXd& x, int slot) const { return x[slot]; }
  cd cvar_value(const VectorXd& x, int h) const {
    return {x[cvars_[h]], x[cvars_[h] + 1]};
  }
  Eigen::MatrixXcd hermitian_value(const VectorXd& x, int h) const;

 private:
  struct HermVar {
    int base;
    int p;
  };

  void append_row(const RExpr& e);

  int num_slots_ = 0;
  int num_rows_ = 0;
  std::vector<int> cvars_;
  std::vector<HermVar> herm_;
  std::vector<Eigen::Triplet<double>> entries_;
  std::vector<double> b_;
  std::vector<ConeBlock> cones_;
  std::vector<std::pair<int, double>> obj_terms_;
  double obj_offset_ = 0.0;
};

}  // namespace edgeinfer::conic
