#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <complex>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "edgeinfer/linalg.hpp"
#include "edgeinfer/rng.hpp"
#include "edgeinfer/scenario.hpp"
#include "edgeinfer/shuffle.hpp"
#include "support/als_oracle.hpp"
#include "support/delivery_sim.hpp"

using namespace edgeinfer;
using namespace edgeinfer::shuffle;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

namespace {

scenario::Placement disjoint_two_device() {
  scenario::Placement p;
  p.num_devices = 2;
  p.num_files = 2;
  p.files_per_device = 1;
  p.stores = {{0}, {1}};
  return p;
}

AffineRankProblem fig4_problem(int K, std::uint64_t seed, MessageSet* ms_out = nullptr,
                               scenario::InterferenceChannel* ch_out = nullptr) {
  const auto placement = scenario::gen_uniform_placement(K, 5, 2);
  const MessageSet ms = build_message_set(placement);
  Rng rng(seed);
  const auto ch = scenario::gen_iid_channel(K, rng);
  if (ms_out) *ms_out = ms;
  if (ch_out) *ch_out = ch;
  return compile_alignment_constraints(ms, ch);
}

MatrixXcd random_complex(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXcd M(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) M(i, j) = rng.cgauss();
  return M;
}

}  // namespace

TEST_CASE("message set construction matches placement arithmetic") {
  SUBCASE("cyclic five-device layout") {
    const auto p = scenario::gen_uniform_placement(5, 5, 2);
    const MessageSet ms = build_message_set(p);
    CHECK(ms.num_devices == 5);
    CHECK(ms.messages.size() == 15);  // each device misses 3 of 5 files
    CHECK(ms.num_columns == 30);      // every file is stored twice
    std::set<std::pair<int, int>> seen;
    int next_col = 0;
    for (const auto& m : ms.messages) {
      CHECK(m.transmitters.size() == 2);
      CHECK(m.columns.size() == m.transmitters.size());
      CHECK_FALSE(std::binary_search(p.stores[m.dest].begin(), p.stores[m.dest].end(),
                                     m.file));
      for (int t : m.transmitters)
        CHECK(std::binary_search(p.stores[t].begin(), p.stores[t].end(), m.file));
      for (int c : m.columns) CHECK(c == next_col++);
      seen.insert({m.dest, m.file});
    }
    CHECK(seen.size() == 15);
  }
  SUBCASE("full storage leaves nothing to shuffle") {
    const auto p = scenario::gen_uniform_placement(3, 3, 3);
    const MessageSet ms = build_message_set(p);
    CHECK(ms.messages.empty());
    CHECK(ms.num_columns == 0);
  }
  SUBCASE("two-device disjoint storage") {
    const MessageSet ms = build_message_set(disjoint_two_device());
    REQUIRE(ms.messages.size() == 2);
    CHECK(ms.messages[0].dest == 0);
    CHECK(ms.messages[0].file == 1);
    CHECK(ms.messages[0].transmitters == std::vector<int>{1});
    CHECK(ms.messages[1].dest == 1);
    CHECK(ms.messages[1].file == 0);
    CHECK(ms.messages[1].transmitters == std::vector<int>{0});
    CHECK(ms.num_columns == 2);
  }
  SUBCASE("uncovered file is rejected") {
    scenario::Placement p;
    p.num_devices = 2;
    p.num_files = 3;
    p.files_per_device = 1;
    p.stores = {{0}, {1}};  // file 2 stored nowhere
    CHECK_THROWS_AS(build_message_set(p), std::invalid_argument);
  }
  SUBCASE("malformed placements are rejected") {
    scenario::Placement p;
    p.num_devices = 2;
    p.num_files = 2;
    p.stores = {{0}};  // wrong length
    CHECK_THROWS_AS(build_message_set(p), std::invalid_argument);
    p.stores = {{0}, {5}};  // file index out of range
    CHECK_THROWS_AS(build_message_set(p), std::invalid_argument);
  }
}

TEST_CASE("alignment constraints follow the side-information rule") {
  SUBCASE("five-device counts by independent enumeration") {
    const auto placement = scenario::gen_uniform_placement(5, 5, 2);
    const MessageSet ms = build_message_set(placement);
    Rng rng(11);
    const auto ch = scenario::gen_iid_channel(5, rng);
    const AffineRankProblem p = compile_alignment_constraints(ms, ch);
    CHECK(p.rows == 5);
    CHECK(p.cols == 30);

    // expected count straight from the rule, without touching the compiler
    int expected = 0;
    for (const auto& m : ms.messages) {
      ++expected;  // desired at the destination
      for (int k = 0; k < 5; ++k) {
        if (k == m.dest) continue;
        if (!std::binary_search(placement.stores[k].begin(), placement.stores[k].end(),
                                m.file))
          ++expected;
      }
    }
    CHECK(expected == 45);  // 15 messages x (1 desired + 2 unknown interferers)
    CHECK(static_cast<int>(p.constraints.size()) == expected);

    int desired = 0;
    std::set<std::pair<int, int>> touched;  // (row, col) disjointness
    for (const auto& c : p.constraints) {
      const auto& m = ms.messages[c.message];
      if (c.kind == ConstraintKind::kDesired) {
        ++desired;
        CHECK(c.receiver == m.dest);
        CHECK(c.rhs == 1.0);
      } else {
        CHECK(c.receiver != m.dest);
        CHECK(c.rhs == 0.0);
        CHECK_FALSE(std::binary_search(placement.stores[c.receiver].begin(),
                                       placement.stores[c.receiver].end(), m.file));
      }
      REQUIRE(c.coeffs.size() == m.transmitters.size());
      for (std::size_t i = 0; i < c.coeffs.size(); ++i) {
        CHECK(c.coeffs[i].first == m.columns[i]);
        CHECK(c.coeffs[i].second == ch.coeffs(c.receiver, m.transmitters[i]));
        CHECK(touched.insert({c.receiver, c.coeffs[i].first}).second);
      }
    }
    CHECK(desired == 15);
    // free entries exist: 150 matrix slots, 90 constrained
    CHECK(static_cast<int>(touched.size()) == 90);
  }
  SUBCASE("two-device worked case has exactly the two desired equations") {
    const MessageSet ms = build_message_set(disjoint_two_device());
    Rng rng(3);
    const auto ch = scenario::gen_iid_channel(2, rng);
    const AffineRankProblem p = compile_alignment_constraints(ms, ch);
    REQUIRE(p.constraints.size() == 2);
    CHECK(p.constraints[0].receiver == 0);
    CHECK(p.constraints[0].kind == ConstraintKind::kDesired);
    REQUIRE(p.constraints[0].coeffs.size() == 1);
    CHECK(p.constraints[0].coeffs[0].first == 0);
    CHECK(p.constraints[0].coeffs[0].second == ch.coeffs(0, 1));
    CHECK(p.constraints[1].receiver == 1);
    REQUIRE(p.constraints[1].coeffs.size() == 1);
    CHECK(p.constraints[1].coeffs[0].first == 1);
    CHECK(p.constraints[1].coeffs[0].second == ch.coeffs(1, 0));
  }
  SUBCASE("empty message set compiles to zero constraints") {
    const auto p = scenario::gen_uniform_placement(3, 3, 3);
    const MessageSet ms = build_message_set(p);
    Rng rng(5);
    const auto ch = scenario::gen_iid_channel(3, rng);
    const AffineRankProblem prob = compile_alignment_constraints(ms, ch);
    CHECK(prob.constraints.empty());
    CHECK(prob.cols == 0);
  }
  SUBCASE("channel dimension mismatch is rejected") {
    const MessageSet ms = build_message_set(disjoint_two_device());
    Rng rng(5);
    const auto ch = scenario::gen_iid_channel(3, rng);
    CHECK_THROWS_AS(compile_alignment_constraints(ms, ch), std::invalid_argument);
  }
}

TEST_CASE("two-device disjoint storage solves at rank one") {
  const MessageSet ms = build_message_set(disjoint_two_device());
  Rng rng(21);
  const auto ch = scenario::gen_iid_channel(2, rng);
  const AffineRankProblem p = compile_alignment_constraints(ms, ch);
  const cd a = 1.0 / ch.coeffs(0, 1);
  const cd b = 1.0 / ch.coeffs(1, 0);

  // brute-force completion fact: the free off-diagonal entries admit the
  // rank-one completion u v^T with u = (1,1), v = (a, b)
  MatrixXcd rank1(2, 2);
  rank1 << a, b, a, b;
  CHECK(constraint_residual(p, rank1) <= 1e-12);
  CHECK(effective_rank(rank1) == 1);

  const RankSolution dc = solve_dc_rank(p);
  CHECK(dc.success);
  CHECK(dc.rank == 1);
  CHECK(dc.dof == doctest::Approx(1.0));
  CHECK(dc.residual <= 1e-8);
  CHECK(constraint_residual(p, dc.X) <= 1e-8);

  const RankSolution nuc = solve_nuclear(p);
  CHECK(nuc.success);
  CHECK(nuc.residual <= 1e-6);
  // the nuclear optimum value is |a| + |b|; the minimizing face is flat, so
  // only the objective value (not the rank) is pinned here
  CHECK(conic::nuclear_norm(nuc.X) ==
        doctest::Approx(std::abs(a) + std::abs(b)).epsilon(1e-4));
  CHECK(nuc.rank >= 1);
  CHECK(dc.rank <= nuc.rank);

  const TransceiverScheme ts = recover_transceivers(dc);
  CHECK(ts.r == 1);
  CHECK((ts.U.adjoint() * ts.V - dc.X).norm() <= 1e-8);
  Rng sym_rng(77);
  CHECK(testsupport::delivery_error(ms, ch, ts, sym_rng) <= 1e-6);
}

TEST_CASE("gram spectral path matches dense reference") {
  for (auto [rows, cols, seed] : {std::tuple<int, int, std::uint64_t>{3, 11, 1},
                                  {11, 3, 2},
                                  {6, 6, 3}}) {
    const MatrixXcd W = random_complex(rows, cols, seed);
    Eigen::JacobiSVD<MatrixXcd> svd(W);
    const VectorXd ref = svd.singularValues();
    const VectorXd got = detail::singular_values_gram(W);
    REQUIRE(got.size() == ref.size());
    for (int i = 0; i < ref.size(); ++i)
      CHECK(got(i) == doctest::Approx(ref(i)).epsilon(1e-9).scale(ref(0)));

    for (double tau : {0.1, 1.0, 3.0}) {
      CHECK((detail::svt_gram(W, tau) - conic::svt(W, tau)).norm() <= 1e-8 * ref(0));
    }
    for (int r = 1; r <= 2; ++r) {
      CHECK((detail::kyfan_subgradient_gram(W, r) - conic::kyfan_subgradient(W, r))
                .norm() <= 1e-7);
    }
  }
  CHECK_THROWS_AS(detail::svt_gram(MatrixXcd::Zero(2, 2), -1.0), std::invalid_argument);
}

TEST_CASE("effective rank counts the relative spectrum") {
  MatrixXcd D = MatrixXcd::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = 1e-9;
  CHECK(effective_rank(D) == 1);
  CHECK(effective_rank(MatrixXcd::Zero(4, 6)) == 0);
  const MatrixXcd A = random_complex(4, 2, 9);
  const MatrixXcd B = random_complex(2, 7, 10);
  CHECK(effective_rank(A * B) == 2);
}

TEST_CASE("dc rank never exceeds nuclear rank") {
  for (std::uint64_t seed : {101, 102, 103, 104}) {
    const AffineRankProblem p = fig4_problem(5, seed);
    const RankSolution dc = solve_dc_rank(p);
    const RankSolution nuc = solve_nuclear(p);
    REQUIRE(dc.success);
    REQUIRE(nuc.success);
    CHECK(dc.residual <= 1e-5);
    CHECK(nuc.residual <= 1e-5);
    CHECK(dc.rank >= 1);
    CHECK(dc.rank <= nuc.rank);
    CHECK(dc.dof == doctest::Approx(1.0 / dc.rank));
  }
}

TEST_CASE("certified rank is invariant under channel rescaling") {
  MessageSet ms;
  scenario::InterferenceChannel ch;
  const AffineRankProblem p = fig4_problem(5, 7, &ms, &ch);
  const cd c(0.8, -1.7);
  scenario::InterferenceChannel scaled = ch;
  scaled.coeffs *= c;
  const AffineRankProblem ps = compile_alignment_constraints(ms, scaled);

  const RankSolution dc1 = solve_dc_rank(p);
  const RankSolution dc2 = solve_dc_rank(ps);
  REQUIRE(dc1.success);
  REQUIRE(dc2.success);
  CHECK(dc1.rank == dc2.rank);
  // feasible sets map by X -> X / c: each solution, mapped back, satisfies
  // the other instance exactly
  CHECK(constraint_residual(p, c * dc2.X) <= 1e-6);
  CHECK(constraint_residual(ps, dc1.X / c) <= 1e-6);

  const RankSolution n1 = solve_nuclear(p);
  const RankSolution n2 = solve_nuclear(ps);
  REQUIRE(n1.success);
  REQUIRE(n2.success);
  CHECK(n1.rank == n2.rank);
}

TEST_CASE("free entries never affect feasibility") {
  const AffineRankProblem p = fig4_problem(5, 31);
  const RankSolution dc = solve_dc_rank(p);
  REQUIRE(dc.success);
  std::set<std::pair<int, int>> covered;
  for (const auto& c : p.constraints)
    for (const auto& [col, coef] : c.coeffs) covered.insert({c.receiver, col});
  const double before = constraint_residual(p, dc.X);
  MatrixXcd mutated = dc.X;
  int changed = 0;
  for (int i = 0; i < p.rows && changed < 5; ++i)
    for (int j = 0; j < p.cols && changed < 5; ++j)
      if (!covered.count({i, j})) {
        mutated(i, j) = cd(17.0, -3.0) * static_cast<double>(changed + 1);
        ++changed;
      }
  REQUIRE(changed == 5);
  CHECK(constraint_residual(p, mutated) == before);
}

TEST_CASE("factorization recovers and decodes") {
  MessageSet ms;
  scenario::InterferenceChannel ch;
  const AffineRankProblem p = fig4_problem(5, 13, &ms, &ch);
  const RankSolution dc = solve_dc_rank(p);
  REQUIRE(dc.success);
  REQUIRE(dc.rank >= 1);
  const TransceiverScheme ts = recover_transceivers(dc);
  CHECK(ts.r == dc.rank);
  CHECK(ts.U.rows() == dc.rank);
  CHECK(ts.U.cols() == 5);
  CHECK(ts.V.cols() == 30);
  CHECK((ts.U.adjoint() * ts.V - dc.X).norm() <= 1e-6);
  Rng sym_rng(99);
  for (int rep = 0; rep < 5; ++rep)
    CHECK(testsupport::delivery_error(ms, ch, ts, sym_rng) <= 1e-5);

  SUBCASE("rank-zero input is rejected") {
    RankSolution zero;
    zero.X = MatrixXcd::Zero(2, 2);
    CHECK_THROWS_AS(recover_transceivers(zero), std::invalid_argument);
  }
  SUBCASE("declared rank inconsistent with the spectrum is rejected") {
    RankSolution bad;
    bad.X = MatrixXcd::Identity(3, 3);  // three unit singular values
    bad.rank = 1;
    CHECK_THROWS_AS(recover_transceivers(bad), std::runtime_error);
  }
}

TEST_CASE("alternating least squares oracle agrees on toy ranks") {
  SUBCASE("two devices, disjoint storage") {
    const MessageSet ms = build_message_set(disjoint_two_device());
    Rng rng(41);
    const auto ch = scenario::gen_iid_channel(2, rng);
    const AffineRankProblem p = compile_alignment_constraints(ms, ch);
    const int oracle = testsupport::als_oracle_rank(ms, p, 2, 20, 60, 1234);
    const RankSolution dc = solve_dc_rank(p);
    REQUIRE(dc.success);
    CHECK(oracle == 1);
    CHECK(dc.rank == oracle);
  }
  SUBCASE("three devices, one file each") {
    const auto placement = scenario::gen_uniform_placement(3, 3, 1);
    const MessageSet ms = build_message_set(placement);
    Rng rng(42);
    const auto ch = scenario::gen_iid_channel(3, rng);
    const AffineRankProblem p = compile_alignment_constraints(ms, ch);
    const int oracle = testsupport::als_oracle_rank(ms, p, 3, 20, 80, 4321);
    const RankSolution dc = solve_dc_rank(p);
    REQUIRE(dc.success);
    REQUIRE(oracle >= 1);
    CHECK(dc.rank == oracle);
  }
  SUBCASE("three devices, two files each") {
    const auto placement = scenario::gen_uniform_placement(3, 3, 2);
    const MessageSet ms = build_message_set(placement);
    Rng rng(43);
    const auto ch = scenario::gen_iid_channel(3, rng);
    const AffineRankProblem p = compile_alignment_constraints(ms, ch);
    const int oracle = testsupport::als_oracle_rank(ms, p, 3, 20, 80, 999);
    const RankSolution dc = solve_dc_rank(p);
    REQUIRE(dc.success);
    CHECK(oracle == 1);  // only desired constraints remain; rank one suffices
    CHECK(dc.rank == oracle);
  }
}

TEST_CASE("dof curve deterministic across worker counts") {
  DofCurveOptions opts;
  opts.K_list = {5};
  opts.trials = 4;
  opts.seed = 2024;
  std::vector<DofTrialRecord> serial_recs, parallel_recs;
  const auto rows1 = evaluate_dof_curve(opts, &serial_recs, 1);
  const auto rows3 = evaluate_dof_curve(opts, &parallel_recs, 3);
  REQUIRE(rows1.size() == 1);
  REQUIRE(serial_recs.size() == 4);
  REQUIRE(parallel_recs.size() == 4);
  for (std::size_t i = 0; i < serial_recs.size(); ++i) {
    CHECK(serial_recs[i].ok_dc == parallel_recs[i].ok_dc);
    CHECK(serial_recs[i].rank_dc == parallel_recs[i].rank_dc);
    CHECK(serial_recs[i].rank_nuclear == parallel_recs[i].rank_nuclear);
    CHECK(serial_recs[i].dof_dc == parallel_recs[i].dof_dc);          // bitwise
    CHECK(serial_recs[i].dof_nuclear == parallel_recs[i].dof_nuclear);  // bitwise
  }
  CHECK(rows1[0].mean_dof_dc == rows3[0].mean_dof_dc);
  CHECK(rows1[0].mean_dof_nuclear == rows3[0].mean_dof_nuclear);

  // aggregation consistency against the raw records
  double sum_dc = 0.0;
  int ok_dc = 0;
  for (const auto& r : serial_recs)
    if (r.ok_dc) {
      sum_dc += r.dof_dc;
      ++ok_dc;
    }
  REQUIRE(ok_dc > 0);
  CHECK(rows1[0].mean_dof_dc == doctest::Approx(sum_dc / ok_dc));
  CHECK(rows1[0].fail_dc == opts.trials - ok_dc);
}

TEST_CASE("reflection-assisted trials reduce to the direct path with no elements") {
  DofCurveOptions direct;
  direct.K_list = {5};
  direct.trials = 3;
  direct.seed = 555;
  DofCurveOptions irs0 = direct;
  irs0.irs = true;
  irs0.irs_elements = 0;
  irs0.irs_candidates = 3;
  std::vector<DofTrialRecord> a, b;
  evaluate_dof_curve(direct, &a, 1);
  evaluate_dof_curve(irs0, &b, 1);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].dof_dc == b[i].dof_dc);            // bitwise
    CHECK(a[i].dof_nuclear == b[i].dof_nuclear);  // bitwise
    CHECK(a[i].rank_dc == b[i].rank_dc);
    CHECK(a[i].rank_nuclear == b[i].rank_nuclear);
  }

  DofCurveOptions irs;
  irs.K_list = {5};
  irs.trials = 2;
  irs.seed = 556;
  irs.irs = true;
  irs.irs_elements = 6;
  irs.irs_candidates = 2;
  std::vector<DofTrialRecord> c;
  const auto rows = evaluate_dof_curve(irs, &c, 1);
  REQUIRE(rows.size() == 1);
  for (const auto& r : c) CHECK(r.ok_dc);
}

TEST_CASE("empty and degenerate problems") {
  const auto placement = scenario::gen_uniform_placement(3, 3, 3);
  const MessageSet ms = build_message_set(placement);
  Rng rng(8);
  const auto ch = scenario::gen_iid_channel(3, rng);
  const AffineRankProblem p = compile_alignment_constraints(ms, ch);
  const RankSolution dc = solve_dc_rank(p);
  const RankSolution nuc = solve_nuclear(p);
  CHECK(dc.success);
  CHECK(dc.rank == 0);
  CHECK(dc.dof == 0.0);
  CHECK(nuc.success);
  CHECK(nuc.rank == 0);

  AffineRankProblem bad;
  bad.rows = 0;
  bad.cols = 3;
  CHECK_THROWS_AS(solve_dc_rank(bad), std::invalid_argument);
  CHECK_THROWS_AS(constraint_residual(fig4_problem(5, 1), MatrixXcd::Zero(2, 2)),
                  std::invalid_argument);

  AffineRankProblem zero_coeffs = fig4_problem(5, 2);
  for (auto& c : zero_coeffs.constraints)
    for (auto& [col, coef] : c.coeffs) coef = 0.0;
  CHECK_THROWS_AS(solve_nuclear(zero_coeffs), std::invalid_argument);
}
