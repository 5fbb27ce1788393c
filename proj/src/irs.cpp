#include "edgeinfer/irs.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

#include "edgeinfer/complexprog.hpp"

namespace edgeinfer::irs {

using conic::ComplexProgramBuilder;
using conic::RExpr;
using scenario::cd;
using scenario::PhaseVector;

const char* to_string(PhaseMethod m) {
  switch (m) {
    case PhaseMethod::kDc: return "dc";
    case PhaseMethod::kSdr: return "sdr";
    case PhaseMethod::kRandom: return "random";
  }
  return "?";
}

namespace {

// Unit-modulus phases from a lifted-space vector: divide out the
// homogenizing entry's phase, then normalize every coordinate. A vanishing
// homogenizing entry degenerates to normalizing the coordinates directly.
PhaseVector extract_phases(const VectorXcd& u) {
  const int m = static_cast<int>(u.size());
  PhaseVector pv;
  pv.v = VectorXcd(m - 1);
  const cd ref = u(m - 1);
  const bool use_ref = std::abs(ref) > 1e-12;
  for (int j = 0; j + 1 < m; ++j) {
    const cd z = use_ref ? cd(u(j) * std::conj(ref)) : u(j);
    const double a = std::abs(z);
    pv.v(j) = a > 0.0 ? z / a : cd{1.0, 0.0};
  }
  return pv;
}

// Minimum constraint margin of the lifted data at unit-modulus phases.
double lifted_min_slack(const LiftedPhaseProblem& lp, const PhaseVector& pv) {
  const int m = lp.order;
  VectorXcd ext(m);
  ext.head(m - 1) = pv.v;
  ext(m - 1) = cd{1.0, 0.0};
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < lp.data.size(); ++k) {
    const double margin =
        (ext.dot(lp.data[k] * ext)).real() - lp.rhs(static_cast<int>(k));
    worst = std::min(worst, margin);
  }
  return worst;
}

struct ScaledLifted {
  std::vector<MatrixXcd> data;
  VectorXd rhs;
  double scale = 1.0;  // divisor applied to every constraint row
};

// One uniform divisor across the constraint rows keeps "uniform margin"
// meaning the same thing after scaling, while moving the coefficients from
// received-power magnitudes to order one for the solver.
ScaledLifted scale_lifted(const LiftedPhaseProblem& lp) {
  ScaledLifted s;
  double q = 0.0;
  for (const auto& Q : lp.data) q = std::max(q, Q.norm());
  s.scale = q > 0.0 ? q : 1.0;
  s.data.reserve(lp.data.size());
  for (const auto& Q : lp.data) s.data.push_back(Q / s.scale);
  s.rhs = lp.rhs / s.scale;
  return s;
}

struct RelaxedPoint {
  conic::SolveStatus status = conic::SolveStatus::kMaxIter;
  bool usable = false;  // iterate available (optimal or iteration-capped)
  MatrixXcd V;
  double slack = 0.0;            // in the scaled units
  conic::ConicSolution raw;      // for warm-starting the rank-one stage
};

// Maximize the uniform constraint margin over the relaxed lifted matrix:
//   max s  s.t.  Tr(Q_k V) >= rhs_k + s,  diag(V) = 1,  V PSD.
// An iteration-capped solve still returns its iterate: the extraction is
// re-evaluated directly, so an approximate matrix degrades quality
// gracefully instead of failing the update.
RelaxedPoint solve_uniform_slack(const ScaledLifted& sl, int m,
                                 const conic::SolveOptions& solver_opts) {
  ComplexProgramBuilder bld;
  const int hV = bld.add_hermitian_var(m);
  const int s_slot = bld.add_rvar();
  for (std::size_t k = 0; k < sl.data.size(); ++k) {
    RExpr e;
    bld.add_trace_term(e, sl.data[k], hV);
    e.add(s_slot, -1.0);
    e.constant = -sl.rhs(static_cast<int>(k));
    bld.add_nonneg(e);
  }
  for (int i = 0; i < m; ++i) {
    RExpr d;
    d.add(bld.herm_diag_slot(hV, i), 1.0);
    d.constant = -1.0;
    bld.add_zero(d);
  }
  bld.add_psd(hV);
  RExpr obj;
  obj.add(s_slot, -1.0);  // maximize the margin
  bld.set_objective(obj);

  const conic::ConicSolution sol = solve_conic(bld.embed_complex(), solver_opts);
  RelaxedPoint pt;
  pt.status = sol.status;
  pt.usable = sol.status == conic::SolveStatus::kOptimal ||
              sol.status == conic::SolveStatus::kMaxIter;
  if (pt.usable && sol.x.allFinite()) {
    pt.V = bld.hermitian_value(sol.x, hV);
    pt.slack = bld.rvar_value(sol.x, s_slot);
    pt.raw = sol;
  } else {
    pt.usable = false;
  }
  return pt;
}

// Nearest well-formed lifted matrix to an iterate: symmetric part, negative
// eigenvalues clamped, then a diagonal congruence pinning diag to one. Keeps
// the stated diag/PSD guarantees even for iteration-capped solves.
MatrixXcd normalize_lifted(const MatrixXcd& V) {
  const int m = static_cast<int>(V.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(0.5 * (V + V.adjoint()));
  MatrixXcd psd = MatrixXcd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    const double lam = std::max(es.eigenvalues()(i), 0.0);
    if (lam > 0.0)
      psd += lam * es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
  }
  VectorXd d(m);
  for (int i = 0; i < m; ++i) {
    const double di = psd(i, i).real();
    d(i) = di > 1e-12 ? 1.0 / std::sqrt(di) : 1.0;
  }
  return d.asDiagonal() * psd * d.asDiagonal();
}

struct Spectrum {
  VectorXd eigs;  // ascending
  VectorXcd top;  // unit top eigenvector
};

Spectrum top_of(const MatrixXcd& V) {
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(V);
  Spectrum sp;
  sp.eigs = es.eigenvalues();
  sp.top = es.eigenvectors().col(V.rows() - 1);
  return sp;
}

double rank_ratio_of(const Spectrum& sp) {
  const int m = static_cast<int>(sp.eigs.size());
  const double l1 = sp.eigs(m - 1);
  if (m < 2 || l1 <= 0.0) return 0.0;
  return std::max(sp.eigs(m - 2), 0.0) / l1;
}

PhaseResult finish_from_matrix(const LiftedPhaseProblem& lp, const MatrixXcd& V,
                               PhaseMethod method) {
  const MatrixXcd Vn = normalize_lifted(V);
  const Spectrum sp = top_of(Vn);
  PhaseResult r;
  r.method = method;
  r.phases = extract_phases(sp.top);
  r.slack = lifted_min_slack(lp, r.phases);
  r.rank_ratio = rank_ratio_of(sp);
  r.lifted = Vn;
  return r;
}

}  // namespace

LiftedPhaseProblem build_lifted(const scenario::EdgeScenario& sc,
                                const gsbf::BeamformingSolution& sol) {
  const int M = sc.irs.num_elements;
  if (M <= 0)
    throw std::invalid_argument("phase optimization needs reflection elements");
  const int N = sc.num_aps;
  const int K = sc.num_users;
  const int m = M + 1;

  // Reflected transmit mix per user j: what the surface sees of w_j.
  std::vector<VectorXcd> mix(K, VectorXcd::Zero(M));
  for (int j = 0; j < K; ++j)
    for (int n = 0; n < N; ++n) mix[j] += sc.irs.ap_to_irs[n] * sol.w[n][j];

  LiftedPhaseProblem lp;
  lp.order = m;
  lp.rhs = VectorXd(K);
  lp.data.reserve(K);
  for (int k = 0; k < K; ++k) {
    // h_k(v)^H w_j = base + dir^H v, so the received power from user j's
    // beam is the rank-one quadratic [dir; conj(base)] [..]^H in [v; t].
    std::vector<VectorXcd> link(K, VectorXcd(m));
    for (int j = 0; j < K; ++j) {
      cd base = 0.0;
      for (int n = 0; n < N; ++n) base += sc.h[n][k].dot(sol.w[n][j]);
      for (int mm = 0; mm < M; ++mm)
        link[j](mm) = sc.irs.irs_to_user[k](mm) * std::conj(mix[j](mm));
      link[j](m - 1) = std::conj(base);
    }
    MatrixXcd Q = link[k] * link[k].adjoint();
    for (int j = 0; j < K; ++j) {
      if (j == k) continue;
      Q -= sc.sinr_targets(k) * (link[j] * link[j].adjoint());
    }
    lp.data.push_back(0.5 * (Q + Q.adjoint().eval()));
    lp.rhs(k) = sc.sinr_targets(k) * sc.noise_power;
  }
  return lp;
}

double direct_min_slack(const scenario::EdgeScenario& sc,
                        const gsbf::BeamformingSolution& sol,
                        const PhaseVector& phases) {
  const auto h = scenario::compose_all_irs(sc, phases);
  const int N = sc.num_aps;
  const int K = sc.num_users;
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    double interference = 0.0;
    double signal = 0.0;
    for (int j = 0; j < K; ++j) {
      cd rx = 0.0;
      for (int n = 0; n < N; ++n) rx += h[n][k].dot(sol.w[n][j]);
      if (j == k)
        signal = std::norm(rx);
      else
        interference += std::norm(rx);
    }
    const double margin =
        signal - sc.sinr_targets(k) * (interference + sc.noise_power);
    worst = std::min(worst, margin);
  }
  return worst;
}

PhaseResult solve_phase_dc(const LiftedPhaseProblem& lp,
                           const PhaseOptions& opts) {
  const int m = lp.order;
  const ScaledLifted sl = scale_lifted(lp);
  const RelaxedPoint relaxed = solve_uniform_slack(sl, m, opts.solver);

  PhaseResult r;
  r.method = PhaseMethod::kDc;
  r.status = relaxed.status;
  if (!relaxed.usable) {
    r.phases.v = VectorXcd::Constant(m - 1, cd{1.0, 0.0});
    r.slack = lifted_min_slack(lp, r.phases);
    return r;
  }

  // Rank-one search at a locked margin slightly inside the best uniform
  // one, so the constraint set keeps an interior for the iteration.
  const double lock =
      relaxed.slack - opts.slack_backoff * std::abs(relaxed.slack) - 1e-12;
  auto build = [&](const VectorXcd& dir) {
    ComplexProgramBuilder bld;
    const int hV = bld.add_hermitian_var(m);
    for (std::size_t k = 0; k < sl.data.size(); ++k) {
      RExpr e;
      bld.add_trace_term(e, sl.data[k], hV);
      e.constant = -(sl.rhs(static_cast<int>(k)) + lock);
      bld.add_nonneg(e);
    }
    for (int i = 0; i < m; ++i) {
      RExpr d;
      d.add(bld.herm_diag_slot(hV, i), 1.0);
      d.constant = -1.0;
      bld.add_zero(d);
    }
    bld.add_psd(hV);
    const MatrixXcd trace_minus_dir =
        MatrixXcd::Identity(m, m) - dir * dir.adjoint();
    RExpr obj;
    bld.add_trace_term(obj, trace_minus_dir, hV);
    bld.set_objective(obj);
    return bld;
  };

  VectorXcd dir = top_of(relaxed.V).top;
  ComplexProgramBuilder decode = build(dir);
  conic::ConicSolver solver(decode.embed_complex(), opts.solver);

  MatrixXcd best_V = relaxed.V;
  double best_gap = std::numeric_limits<double>::infinity();
  bool any_solved = false;
  int iterations = 0;
  conic::ConicSolution prev;
  for (int it = 0; it < opts.max_dc_iterations; ++it) {
    const conic::ConicSolution sol =
        solver.solve(any_solved ? &prev : nullptr);
    if (sol.status != conic::SolveStatus::kOptimal) break;
    prev = sol;
    any_solved = true;
    ++iterations;
    const MatrixXcd V = decode.hermitian_value(sol.x, 0);
    const Spectrum sp = top_of(V);
    const double tr = V.trace().real();
    const double gap = tr - sp.eigs(m - 1);
    if (gap < best_gap) {
      best_gap = gap;
      best_V = V;
    }
    if (gap <= opts.rank1_gap_rel * std::max(tr, 1e-300)) break;
    dir = sp.top;
    solver.set_objective(build(dir).embed_complex().c);
  }

  r = finish_from_matrix(lp, best_V, PhaseMethod::kDc);
  r.status = any_solved ? conic::SolveStatus::kOptimal
                        : conic::SolveStatus::kMaxIter;
  r.feasible = any_solved;
  r.dc_iterations = iterations;
  return r;
}

PhaseResult solve_phase_sdr(const LiftedPhaseProblem& lp, Rng& rng,
                            const PhaseOptions& opts) {
  const int m = lp.order;
  const ScaledLifted sl = scale_lifted(lp);
  const RelaxedPoint relaxed = solve_uniform_slack(sl, m, opts.solver);

  PhaseResult r;
  r.method = PhaseMethod::kSdr;
  r.status = relaxed.status;
  if (relaxed.status != conic::SolveStatus::kOptimal) {
    r.phases.v = VectorXcd::Constant(m - 1, cd{1.0, 0.0});
    r.slack = lifted_min_slack(lp, r.phases);
    return r;
  }

  r = finish_from_matrix(lp, relaxed.V, PhaseMethod::kSdr);
  r.status = conic::SolveStatus::kOptimal;
  r.feasible = true;

  if (opts.num_randomizations > 0) {
    // Covariance factor with negative eigenvalues clamped to zero.
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(relaxed.V);
    MatrixXcd factor = es.eigenvectors();
    for (int i = 0; i < m; ++i)
      factor.col(i) *= std::sqrt(std::max(es.eigenvalues()(i), 0.0));
    for (int draw = 0; draw < opts.num_randomizations; ++draw) {
      VectorXcd g(m);
      for (int i = 0; i < m; ++i) g(i) = rng.cgauss();
      const PhaseVector cand = extract_phases(factor * g);
      const double slack = lifted_min_slack(lp, cand);
      if (slack > r.slack) {  // ties keep the earlier candidate
        r.slack = slack;
        r.phases = cand;
      }
    }
  }
  return r;
}

AlternatingResult alternating_optimize(const scenario::EdgeScenario& sc,
                                       const AlternatingOptions& opts,
                                       Rng& rng) {
  const int M = sc.irs.num_elements;
  AlternatingResult res;

  auto allocate_at = [&](const PhaseVector& v) {
    gsbf::BeamformingProblem prob{sc, opts.weights, opts.amp_efficiency};
    if (M > 0) prob.sc.h = scenario::compose_all_irs(sc, v);
    return gsbf::group_sparse_allocate(prob, opts.beamform);
  };

  if (M == 0) {
    res.solution = allocate_at({});
    res.feasible = res.solution.feasible;
    if (res.feasible) res.round_log.push_back(res.solution.total_power);
    return res;
  }

  // Round 1: random reflection phases, redrawn while the allocation is
  // infeasible, up to the restart budget.
  PhaseVector cur;
  gsbf::BeamformingSolution sol;
  const int budget = std::max(1, opts.num_restarts);
  for (int attempt = 0; attempt < budget; ++attempt) {
    cur.v = VectorXcd(M);
    for (int i = 0; i < M; ++i) cur.v(i) = std::polar(1.0, rng.phase());
    sol = allocate_at(cur);
    ++res.restarts_used;
    if (sol.feasible) break;
  }
  if (!sol.feasible) {
    res.solution = sol;
    res.phases = cur;
    return res;
  }
  res.round_log.push_back(sol.total_power);

  for (int round = 2; round <= opts.max_rounds; ++round) {
    if (opts.phase_method == PhaseMethod::kRandom) break;  // phases stay put
    const LiftedPhaseProblem lp = build_lifted(sc, sol);
    const PhaseResult pr = opts.phase_method == PhaseMethod::kDc
                               ? solve_phase_dc(lp, opts.phase)
                               : solve_phase_sdr(lp, rng, opts.phase);
    if (!pr.feasible) break;  // keep the phases we have
    if ((pr.phases.v - cur.v).squaredNorm() == 0.0) break;  // no movement
    const gsbf::BeamformingSolution cand = allocate_at(pr.phases);
    if (cand.feasible && sol.total_power - cand.total_power > opts.power_tol) {
      sol = cand;
      cur = pr.phases;
      res.round_log.push_back(sol.total_power);
    } else {
      res.round_log.push_back(sol.total_power);
      break;
    }
  }

  res.solution = sol;
  res.phases = cur;
  res.feasible = true;
  return res;
}

}  // namespace edgeinfer::irs
