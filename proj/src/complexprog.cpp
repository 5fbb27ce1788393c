#include "edgeinfer/complexprog.hpp"

#include <cmath>
#include <stdexcept>

namespace edgeinfer::conic {

RExpr CExpr::real_part() const {
  RExpr r;
  r.constant = constant.real();
  for (const auto& [slot, coeff] : terms) r.add(slot, coeff.real());
  return r;
}

RExpr CExpr::imag_part() const {
  RExpr r;
  r.constant = constant.imag();
  for (const auto& [slot, coeff] : terms) r.add(slot, coeff.imag());
  return r;
}

int ComplexProgramBuilder::add_rvar() { return num_slots_++; }

int ComplexProgramBuilder::add_cvar() {
  cvars_.push_back(num_slots_);
  num_slots_ += 2;
  return static_cast<int>(cvars_.size()) - 1;
}

int ComplexProgramBuilder::add_hermitian_var(int p) {
  if (p <= 0) throw std::invalid_argument("complexprog: matrix order must be positive");
  herm_.push_back({num_slots_, p});
  num_slots_ += p * p;  // p diagonal + 2 * p(p-1)/2 off-diagonal slots
  return static_cast<int>(herm_.size()) - 1;
}

int ComplexProgramBuilder::herm_diag_slot(int h, int i) const {
  return herm_[h].base + i;
}

int ComplexProgramBuilder::herm_re_slot(int h, int i, int j) const {
  const int p = herm_[h].p;
  // strict lower triangle, column-major: column j holds p-1-j entries
  const int off = j * (p - 1) - j * (j - 1) / 2 + (i - j - 1);
  return herm_[h].base + p + 2 * off;
}

int ComplexProgramBuilder::herm_im_slot(int h, int i, int j) const {
  return herm_re_slot(h, i, j) + 1;
}

void ComplexProgramBuilder::add_cvar_term(CExpr& e, int h, cd coeff) const {
  e.add(cvar_re(h), coeff);
  e.add(cvar_im(h), coeff * cd{0.0, 1.0});
}

void ComplexProgramBuilder::add_conj_cvar_term(CExpr& e, int h, cd coeff) const {
  e.add(cvar_re(h), coeff);
  e.add(cvar_im(h), coeff * cd{0.0, -1.0});
}

void ComplexProgramBuilder::add_trace_term(RExpr& e, const Eigen::MatrixXcd& Q,
                                           int h, double scale) const {
  const int p = herm_[h].p;
  if (Q.rows() != p || Q.cols() != p)
    throw std::invalid_argument("complexprog: trace coefficient order mismatch");
  // Tr(Q V) for Hermitian Q, V: diagonal terms plus twice the real part of
  // the lower-triangle products.
  for (int i = 0; i < p; ++i) e.add(herm_diag_slot(h, i), scale * Q(i, i).real());
  for (int j = 0; j < p; ++j) {
    for (int i = j + 1; i < p; ++i) {
      const cd q = Q(j, i);  // multiplies V(i, j) in Tr(QV)
      e.add(herm_re_slot(h, i, j), 2.0 * scale * q.real());
      e.add(herm_im_slot(h, i, j), -2.0 * scale * q.imag());
    }
  }
}

void ComplexProgramBuilder::append_row(const RExpr& e) {
  for (const auto& [slot, coeff] : e.terms)
    entries_.push_back({num_rows_, slot, coeff});
  b_.push_back(e.constant);
  ++num_rows_;
}

void ComplexProgramBuilder::add_zero(const RExpr& e) {
  append_row(e);
  cones_.push_back({ConeKind::kZero, 1});
}

void ComplexProgramBuilder::add_zero(const CExpr& e) {
  append_row(e.real_part());
  append_row(e.imag_part());
  cones_.push_back({ConeKind::kZero, 2});
}

void ComplexProgramBuilder::add_nonneg(const RExpr& e) {
  append_row(e);
  cones_.push_back({ConeKind::kNonneg, 1});
}

void ComplexProgramBuilder::add_soc(const RExpr& head,
                                    const std::vector<CExpr>& centries,
                                    const std::vector<RExpr>& rentries) {
  append_row(head);
  for (const auto& e : centries) {
    append_row(e.real_part());
    append_row(e.imag_part());
  }
  for (const auto& e : rentries) append_row(e);
  cones_.push_back(
      {ConeKind::kSoc, 1 + 2 * static_cast<int>(centries.size()) +
                           static_cast<int>(rentries.size())});
}

void ComplexProgramBuilder::add_psd(int h) {
  const int p = herm_[h].p;
  const int n2 = 2 * p;
  // svec rows of the symmetric embedding E = [[X, -Y], [Y, X]], column-major
  // lower triangle. Every row depends on at most one slot of V_h.
  const double rt2 = std::sqrt(2.0);
  for (int J = 0; J < n2; ++J) {
    for (int I = J; I < n2; ++I) {
      RExpr e;
      const double w = (I == J) ? 1.0 : rt2;
      if (I < p && J < p) {
        // X block lower triangle: X(i,j) = Re V(i,j)
        if (I == J)
          e.add(herm_diag_slot(h, I), w);
        else
          e.add(herm_re_slot(h, I, J), w);
      } else if (I >= p && J < p) {
        // Y block, full: Y(i,j) = Im V(i,j), skew-symmetric
        const int i = I - p, j = J;
        if (i > j)
          e.add(herm_im_slot(h, i, j), w);
        else if (i < j)
          e.add(herm_im_slot(h, j, i), -w);
        // i == j: structurally zero row
      } else {
        // X block again (lower triangle of the bottom-right copy)
        const int i = I - p, j = J - p;
        if (i == j)
          e.add(herm_diag_slot(h, i), w);
        else
          e.add(herm_re_slot(h, i, j), w);
      }
      append_row(e);
    }
  }
  cones_.push_back({ConeKind::kPsd, n2});
}

void ComplexProgramBuilder::set_objective(const RExpr& e) {
  obj_terms_.assign(e.terms.begin(), e.terms.end());
  obj_offset_ = e.constant;
}

ConicProgram ComplexProgramBuilder::embed_complex() const {
  ConicProgram p;
  p.num_vars = num_slots_;
  p.c = VectorXd::Zero(num_slots_);
  for (const auto& [slot, coeff] : obj_terms_) p.c[slot] += coeff;
  p.b = Eigen::Map<const VectorXd>(b_.data(), b_.size());
  p.entries = entries_;
  p.cones = cones_;
  return p;
}

Eigen::MatrixXcd ComplexProgramBuilder::hermitian_value(const VectorXd& x,
                                                        int h) const {
  const int p = herm_[h].p;
  Eigen::MatrixXcd V(p, p);
  for (int i = 0; i < p; ++i) V(i, i) = x[herm_diag_slot(h, i)];
  for (int j = 0; j < p; ++j) {
    for (int i = j + 1; i < p; ++i) {
      const cd v{x[herm_re_slot(h, i, j)], x[herm_im_slot(h, i, j)]};
      V(i, j) = v;
      V(j, i) = std::conj(v);
    }
  }
  return V;
}

}  // namespace edgeinfer::conic
