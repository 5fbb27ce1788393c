#include "edgeinfer/conic.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace edgeinfer::conic {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kPrimalInfeasible: return "primal_infeasible";
    case SolveStatus::kDualInfeasible: return "dual_infeasible";
    case SolveStatus::kMaxIter: return "max_iter";
  }
  return "unknown";
}

namespace {

void validate(const ConicProgram& p) {
  if (p.num_vars <= 0) throw std::invalid_argument("conic: program has no variables");
  if (p.c.size() != p.num_vars) throw std::invalid_argument("conic: objective length mismatch");
  const int m = p.num_rows();
  if (p.b.size() != m) throw std::invalid_argument("conic: offset length does not match cone rows");
  for (const auto& blk : p.cones) {
    if (blk.size <= 0) throw std::invalid_argument("conic: empty cone block");
    if (blk.kind == ConeKind::kSoc && blk.size < 1)
      throw std::invalid_argument("conic: soc block too small");
  }
  for (const auto& t : p.entries) {
    if (t.row() < 0 || t.row() >= m || t.col() < 0 || t.col() >= p.num_vars)
      throw std::invalid_argument("conic: entry index out of range");
  }
}

void project_soc(double* v, int q) {
  if (q == 1) {
    v[0] = std::max(v[0], 0.0);
    return;
  }
  double t = v[0];
  double nz = 0.0;
  for (int i = 1; i < q; ++i) nz += v[i] * v[i];
  nz = std::sqrt(nz);
  if (nz <= t) return;
  if (nz <= -t) {
    for (int i = 0; i < q; ++i) v[i] = 0.0;
    return;
  }
  const double beta = 0.5 * (t + nz);
  const double f = beta / nz;
  v[0] = beta;
  for (int i = 1; i < q; ++i) v[i] *= f;
}

void project_psd_svec(double* v, int p) {
  using Eigen::MatrixXd;
  Eigen::Map<VectorXd> vm(v, svec_len(p));
  MatrixXd S = smat(vm, p);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S);
  VectorXd d = eig.eigenvalues();
  bool any_neg = false;
  for (int i = 0; i < d.size(); ++i) {
    if (d[i] < 0.0) {
      d[i] = 0.0;
      any_neg = true;
    }
  }
  if (!any_neg) return;
  MatrixXd P = eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
  vm = svec(P);
}

}  // namespace

ConicSolver::ConicSolver(const ConicProgram& p, const SolveOptions& opts) : opts_(opts) {
  validate(p);
  n_ = p.num_vars;
  m_ = p.num_rows();
  cones_ = p.cones;
  // The program is stated as A x + b in K; internally the iteration works on
  // the equivalent form  A_int x + s = b, s in K  with A_int = -A, so the
  // reported slack s equals A x + b and y is the multiplier of the stated form.
  A_.resize(m_, n_);
  A_.setFromTriplets(p.entries.begin(), p.entries.end());
  A_ = -A_;
  A_.makeCompressed();
  b_ = p.b;
  c_ = p.c;
  factorize();
}

void ConicSolver::factorize() {
  // Ruiz equilibration. Rows belonging to one soc/psd block share a scale
  // factor so the cone is preserved; zero/nonneg rows scale independently.
  row_scale_ = VectorXd::Ones(m_);
  col_scale_ = VectorXd::Ones(n_);
  Eigen::SparseMatrix<double> W = A_;

  std::vector<int> block_of(m_);
  {
    int r = 0, bi = 0;
    for (const auto& blk : cones_) {
      for (int i = 0; i < cone_rows(blk); ++i) block_of[r++] = bi;
      ++bi;
    }
  }
  const int nblocks = static_cast<int>(cones_.size());
  std::vector<char> uniform(nblocks);
  for (int i = 0; i < nblocks; ++i)
    uniform[i] = cones_[i].kind == ConeKind::kSoc || cones_[i].kind == ConeKind::kPsd;

  for (int pass = 0; pass < opts_.ruiz_iters; ++pass) {
    VectorXd rmax = VectorXd::Zero(m_);
    VectorXd cmax = VectorXd::Zero(n_);
    for (int k = 0; k < W.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(W, k); it; ++it) {
        const double a = std::abs(it.value());
        rmax[it.row()] = std::max(rmax[it.row()], a);
        cmax[it.col()] = std::max(cmax[it.col()], a);
      }
    }
    VectorXd bmax = VectorXd::Zero(nblocks);
    for (int r = 0; r < m_; ++r) bmax[block_of[r]] = std::max(bmax[block_of[r]], rmax[r]);
    VectorXd dr(m_), dc(n_);
    for (int r = 0; r < m_; ++r) {
      double v = uniform[block_of[r]] ? bmax[block_of[r]] : rmax[r];
      dr[r] = v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0;
    }
    for (int cidx = 0; cidx < n_; ++cidx)
      dc[cidx] = cmax[cidx] > 1e-12 ? 1.0 / std::sqrt(cmax[cidx]) : 1.0;
    for (int k = 0; k < W.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(W, k); it; ++it)
        it.valueRef() *= dr[it.row()] * dc[it.col()];
    }
    row_scale_.array() *= dr.array();
    col_scale_.array() *= dc.array();
  }
  As_ = W;

  VectorXd db = row_scale_.cwiseProduct(b_);
  VectorXd ec = col_scale_.cwiseProduct(c_);
  b_scale_ = 1.0 / std::clamp(db.norm(), 1e-4, 1e4);
  c_scale_ = 1.0 / std::clamp(ec.norm(), 1e-4, 1e4);
  bs_ = b_scale_ * db;
  cs_ = c_scale_ * ec;

  Eigen::MatrixXd AtA = Eigen::MatrixXd(As_.transpose() * As_);
  AtA.diagonal().array() += 1.0;
  llt_.compute(AtA);
  if (llt_.info() != Eigen::Success)
    throw std::runtime_error("conic: factorization failed");

  // g = M^{-1} (cs; bs) with M = [[I, As'], [-As, I]].
  VectorXd g1 = llt_.solve(cs_ - As_.transpose() * bs_);
  VectorXd g2 = bs_ + As_ * g1;
  g_.resize(n_ + m_);
  g_ << g1, g2;
  g_denom_ = 1.0 + cs_.dot(g1) + bs_.dot(g2);
}

void ConicSolver::set_objective(const VectorXd& c) {
  if (c.size() != n_) throw std::invalid_argument("conic: objective length mismatch");
  c_ = c;
  VectorXd ec = col_scale_.cwiseProduct(c_);
  c_scale_ = 1.0 / std::clamp(ec.norm(), 1e-4, 1e4);
  cs_ = c_scale_ * ec;
  VectorXd g1 = llt_.solve(cs_ - As_.transpose() * bs_);
  VectorXd g2 = bs_ + As_ * g1;
  g_ << g1, g2;
  g_denom_ = 1.0 + cs_.dot(g1) + bs_.dot(g2);
}

void ConicSolver::project_dual_cone(VectorXd& y) const {
  int r = 0;
  for (const auto& blk : cones_) {
    switch (blk.kind) {
      case ConeKind::kZero:
        // dual of {0} is free
        r += blk.size;
        break;
      case ConeKind::kNonneg:
        for (int i = 0; i < blk.size; ++i, ++r) y[r] = std::max(y[r], 0.0);
        break;
      case ConeKind::kSoc:
        project_soc(y.data() + r, blk.size);
        r += blk.size;
        break;
      case ConeKind::kPsd:
        project_psd_svec(y.data() + r, blk.size);
        r += svec_len(blk.size);
        break;
    }
  }
}

void ConicSolver::compute_residuals(const VectorXd& x, const VectorXd& y,
                                    const VectorXd& s, double& rp, double& rd,
                                    double& gap, double& comp, double& obj) const {
  VectorXd pr = A_ * x + s - b_;
  VectorXd dr = A_.transpose() * y + c_;
  const double ctx = c_.dot(x);
  const double bty = b_.dot(y);
  rp = pr.norm() / (1.0 + b_.norm());
  rd = dr.norm() / (1.0 + c_.norm());
  gap = std::abs(ctx + bty) / (1.0 + std::abs(ctx) + std::abs(bty));
  comp = std::abs(s.dot(y)) / (1.0 + std::abs(ctx) + std::abs(bty));
  obj = ctx;
}

ConicSolution ConicSolver::solve(const ConicSolution* warm) {
  const int N = n_ + m_ + 1;
  VectorXd u = VectorXd::Zero(N), v = VectorXd::Zero(N);
  if (warm && warm->x.size() == n_ && warm->y.size() == m_ && warm->s.size() == m_) {
    u.head(n_) = b_scale_ * warm->x.cwiseQuotient(col_scale_);
    u.segment(n_, m_) = c_scale_ * warm->y.cwiseQuotient(row_scale_);
    u[N - 1] = 1.0;
    v.segment(n_, m_) = b_scale_ * row_scale_.cwiseProduct(warm->s);
  } else {
    u[N - 1] = 1.0;
    v[N - 1] = 1.0;
  }

  ConicSolution best;
  best.status = SolveStatus::kMaxIter;
  double best_score = std::numeric_limits<double>::infinity();

  VectorXd ut(N), t(N), w(N);
  const double alpha = opts_.relax_alpha;

  auto unscale = [&](const VectorXd& uu, const VectorXd& vv, double tau, VectorXd& x,
                     VectorXd& y, VectorXd& s) {
    x = uu.head(n_).cwiseProduct(col_scale_) / (b_scale_ * tau);
    y = uu.segment(n_, m_).cwiseProduct(row_scale_) / (c_scale_ * tau);
    s = vv.segment(n_, m_).cwiseQuotient(row_scale_) / (b_scale_ * tau);
  };

  int iter = 0;
  for (; iter < opts_.max_iter; ++iter) {
    w = u + v;
    // ut = (I + Q)^{-1} w
    {
      VectorXd r1 = w.head(n_);
      VectorXd r2 = w.segment(n_, m_);
      VectorXd p1 = llt_.solve(r1 - As_.transpose() * r2);
      VectorXd p2 = r2 + As_ * p1;
      const double z3 =
          (w[N - 1] + cs_.dot(p1) + bs_.dot(p2)) / g_denom_;
      ut.head(n_) = p1 - z3 * g_.head(n_);
      ut.segment(n_, m_) = p2 - z3 * g_.tail(m_);
      ut[N - 1] = z3;
    }
    // over-relaxed reflection, cone projection, dual update
    t = alpha * ut + (1.0 - alpha) * u - v;
    u.head(n_) = t.head(n_);
    {
      VectorXd ypart = t.segment(n_, m_);
      project_dual_cone(ypart);
      u.segment(n_, m_) = ypart;
    }
    u[N - 1] = std::max(t[N - 1], 0.0);
    v = u - t;

    if ((iter + 1) % opts_.check_interval != 0 && iter + 1 != opts_.max_iter) continue;

    const double tau = u[N - 1];
    const double unorm = u.norm() + v.norm();
    if (tau > 1e-10 * std::max(1.0, unorm)) {
      VectorXd x, y, s;
      unscale(u, v, tau, x, y, s);
      double rp, rd, gap, comp, obj;
      compute_residuals(x, y, s, rp, rd, gap, comp, obj);
      if (opts_.verbose && (iter + 1) % (opts_.check_interval * 40) == 0)
        std::fprintf(stderr, "  iter %6d  rp %.2e rd %.2e gap %.2e\n", iter + 1, rp, rd, gap);
      const double score = std::max({rp, rd, gap});
      if (score < best_score) {
        best_score = score;
        best.x = x;
        best.y = y;
        best.s = s;
        best.objective = obj;
        best.res_primal = rp;
        best.res_dual = rd;
        best.res_gap = gap;
        best.comp_slack = comp;
      }
      if (rp <= opts_.tol && rd <= opts_.tol && gap <= opts_.tol) {
        best.status = SolveStatus::kOptimal;
        best.iterations = iter + 1;
        return best;
      }
    }
    // Certificate checks.
    {
      VectorXd ycert = u.segment(n_, m_).cwiseProduct(row_scale_);
      const double bty = b_.dot(ycert);
      if (bty < -1e-12) {
        VectorXd yn = ycert / (-bty);
        if ((A_.transpose() * yn).norm() * std::max(1.0, b_.norm()) <= opts_.tol) {
          best.status = SolveStatus::kPrimalInfeasible;
          best.y = yn;
          best.x = VectorXd::Zero(n_);
          best.s = VectorXd::Zero(m_);
          best.iterations = iter + 1;
          return best;
        }
      }
      VectorXd xcert = u.head(n_).cwiseProduct(col_scale_);
      const double ctx = c_.dot(xcert);
      if (ctx < -1e-12) {
        VectorXd xn = xcert / (-ctx);
        VectorXd res = A_ * xn;
        // nearest cone point to -A xn certifies A xn + s ~= 0 with s in K
        VectorXd s = -res;
        int r = 0;
        for (const auto& blk : cones_) {
          switch (blk.kind) {
            case ConeKind::kZero:
              for (int i = 0; i < blk.size; ++i, ++r) s[r] = 0.0;
              break;
            case ConeKind::kNonneg:
              for (int i = 0; i < blk.size; ++i, ++r) s[r] = std::max(s[r], 0.0);
              break;
            case ConeKind::kSoc:
              project_soc(s.data() + r, blk.size);
              r += blk.size;
              break;
            case ConeKind::kPsd:
              project_psd_svec(s.data() + r, blk.size);
              r += svec_len(blk.size);
              break;
          }
        }
        if ((res + s).norm() * std::max(1.0, c_.norm()) <= opts_.tol) {
          best.status = SolveStatus::kDualInfeasible;
          best.x = xn;
          best.s = s;
          best.y = VectorXd::Zero(m_);
          best.iterations = iter + 1;
          return best;
        }
      }
    }
  }
  best.iterations = iter;
  best.status = SolveStatus::kMaxIter;
  if (best.x.size() == 0) {
    best.x = VectorXd::Zero(n_);
    best.y = VectorXd::Zero(m_);
    best.s = VectorXd::Zero(m_);
  }
  return best;
}

ConicSolution solve_conic(const ConicProgram& p, const SolveOptions& opts,
                          const ConicSolution* warm) {
  ConicSolver solver(p, opts);
  return solver.solve(warm);
}

}  // namespace edgeinfer::conic
