#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "isacxt/conic.hpp"

using namespace isacxt;
using namespace isacxt::conic;

namespace {

VecD random_vec(int n, Rng& rng) {
  VecD v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.gaussian();
  return v;
}

// Random instance with a constructed primal-dual optimal pair; returns the
// known optimal objective.
struct KnownInstance {
  ConicProblem p;
  double objective;
  VecD x_star;
};

KnownInstance make_known_instance(Rng& rng, bool with_soc, bool with_psd) {
  const int n = 6 + static_cast<int>(rng.uniform(0, 5));
  std::vector<ConeBlock> cones;
  cones.push_back({ConeType::NonNeg, 3 + static_cast<int>(rng.uniform(0, 3)), 0});
  if (with_soc) cones.push_back({ConeType::Soc, 3 + static_cast<int>(rng.uniform(0, 3)), 0});
  if (with_psd) {
    const int side = 2 + static_cast<int>(rng.uniform(0, 2));
    cones.push_back({ConeType::Psd, svec_size(side), side});
  }
  int m = 0;
  for (auto& k : cones) m += k.size;

  MatD a(m, n);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = rng.gaussian();

  VecD s_star = VecD::Zero(m), y_star = VecD::Zero(m);
  int at = 0;
  for (const auto& k : cones) {
    if (k.type == ConeType::NonNeg) {
      for (int i = 0; i < k.size; ++i) {
        if (rng.uniform() < 0.5)
          s_star(at + i) = 0.2 + rng.uniform();
        else
          y_star(at + i) = 0.2 + rng.uniform();
      }
    } else if (k.type == ConeType::Soc) {
      // Complementary boundary pair s = (t, u), y = kappa (t, -u).
      VecD u = random_vec(k.size - 1, rng);
      const double t = u.norm();
      s_star(at) = t;
      s_star.segment(at + 1, k.size - 1) = u;
      const double kappa = 0.3 + rng.uniform();
      y_star(at) = kappa * t;
      y_star.segment(at + 1, k.size - 1) = -kappa * u;
    } else if (k.type == ConeType::Psd) {
      const int side = k.psd_side;
      MatD q(side, side);
      for (int i = 0; i < q.size(); ++i) q.data()[i] = rng.gaussian();
      Eigen::HouseholderQR<MatD> qr(q);
      MatD orth = qr.householderQ();
      VecD ls = VecD::Zero(side), ly = VecD::Zero(side);
      for (int i = 0; i < side; ++i) {
        if (i % 2 == 0)
          ls(i) = 0.3 + rng.uniform();
        else
          ly(i) = 0.3 + rng.uniform();
      }
      s_star.segment(at, k.size) = svec(orth * ls.asDiagonal() * orth.transpose());
      y_star.segment(at, k.size) = svec(orth * ly.asDiagonal() * orth.transpose());
    }
    at += k.size;
  }

  VecD x_star = random_vec(n, rng);
  VecD b = a * x_star + s_star;
  VecD c = -a.transpose() * y_star;

  KnownInstance inst;
  inst.p.add_variables("x", n);
  for (int i = 0; i < n; ++i) inst.p.set_objective(i, c(i));
  for (int i = 0; i < m; ++i) {
    int r = inst.p.add_row(b(i));
    for (int j = 0; j < n; ++j) inst.p.add_entry(r, j, a(i, j));
  }
  for (const auto& k : cones) inst.p.add_cone(k.type, k.size, k.psd_side);
  inst.objective = c.dot(x_star);
  inst.x_star = x_star;
  return inst;
}

}  // namespace

TEST_CASE("cone projection idempotence") {
  Rng rng(3);
  std::vector<std::vector<ConeBlock>> cone_sets = {
      {{ConeType::NonNeg, 7, 0}},
      {{ConeType::Soc, 5, 0}},
      {{ConeType::Psd, svec_size(4), 4}},
      {{ConeType::Zero, 3, 0}, {ConeType::NonNeg, 2, 0}, {ConeType::Soc, 4, 0},
       {ConeType::Psd, svec_size(3), 3}},
  };
  for (const auto& cones : cone_sets) {
    int m = 0;
    for (const auto& k : cones) m += k.size;
    for (int trial = 0; trial < 20; ++trial) {
      VecD v = random_vec(m, rng) * 3.0;
      VecD once = v;
      project_onto_cones(once, cones);
      VecD twice = once;
      project_onto_cones(twice, cones);
      CHECK((twice - once).norm() <= 1e-12 * std::max(1.0, once.norm()));
    }
  }
}

TEST_CASE("svec trace identity") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    MatD a(4, 4), b(4, 4);
    for (int i = 0; i < 16; ++i) {
      a.data()[i] = rng.gaussian();
      b.data()[i] = rng.gaussian();
    }
    a = (a + a.transpose()).eval();
    b = (b + b.transpose()).eval();
    CHECK(svec(a).dot(svec(b)) == doctest::Approx((a * b).trace()).epsilon(1e-12));
    CHECK((smat(svec(a)) - a).norm() <= 1e-14 * a.norm());
  }
}

TEST_CASE("lp: min x subject to x >= 1") {
  ConicProblem p;
  p.add_variables("x", 1);
  p.set_objective(0, 1.0);
  int r = p.add_row(-1.0);  // s = -1 + x >= 0
  p.add_entry(r, 0, -1.0);
  p.add_cone(ConeType::NonNeg, 1);
  ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("soc: min t subject to ||(3,4)|| <= t") {
  ConicProblem p;
  p.add_variables("t", 1);
  p.set_objective(0, 1.0);
  int r0 = p.add_row(0.0);
  p.add_entry(r0, 0, -1.0);  // s0 = t
  p.add_row(3.0);
  p.add_row(4.0);
  p.add_cone(ConeType::Soc, 3);
  ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("sdp: min Tr X with fixed diagonal") {
  // Variables (x11, x21, x22); X >= 0; x11 = 1, x22 = 2.
  ConicProblem p;
  p.add_variables("x", 3);
  p.set_objective(0, 1.0);
  p.set_objective(2, 1.0);
  int r1 = p.add_row(1.0);
  p.add_entry(r1, 0, 1.0);
  int r2 = p.add_row(2.0);
  p.add_entry(r2, 2, 1.0);
  p.add_cone(ConeType::Zero, 2);
  const double r2f = std::sqrt(2.0);
  int s11 = p.add_row(0.0);
  p.add_entry(s11, 0, -1.0);
  int s21 = p.add_row(0.0);
  p.add_entry(s21, 1, -r2f);
  int s22 = p.add_row(0.0);
  p.add_entry(s22, 2, -1.0);
  p.add_cone(ConeType::Psd, 3, 2);
  ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(sol.x(1) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(sol.x(2) == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("randomized instances against constructed optima") {
  Rng rng(11);
  int count = 0;
  for (int trial = 0; trial < 25; ++trial) {
    KnownInstance inst = make_known_instance(rng, trial % 2 == 0, trial % 3 != 2);
    ConicSolution sol = solve(inst.p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(std::abs(sol.objective - inst.objective) <= 1e-5 * std::max(1.0, std::abs(inst.objective)));
    CHECK(sol.primal_res <= 1e-6);
    CHECK(sol.dual_res <= 1e-6);
    ++count;
  }
  CHECK(count == 25);
}

TEST_CASE("weak duality at the returned iterate") {
  Rng rng(13);
  KnownInstance inst = make_known_instance(rng, true, true);
  ConicSolution sol = solve(inst.p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  const VecD b = Eigen::Map<const VecD>(inst.p.b.data(), inst.p.n_rows());
  const double dual_obj = -b.dot(sol.y);
  CHECK(sol.objective >= dual_obj - 1e-5 * std::max(1.0, std::abs(sol.objective)));
}

TEST_CASE("solution invariance under row scaling") {
  Rng rng(17);
  KnownInstance inst = make_known_instance(rng, true, true);
  ConicSolution base = solve(inst.p);
  REQUIRE(base.status == SolveStatus::Optimal);

  // Scale nonneg rows individually, SOC/PSD blocks uniformly, by powers of 2.
  ConicProblem scaled = inst.p;
  VecD row_scale = VecD::Ones(scaled.n_rows());
  int at = 0;
  int block_idx = 0;
  for (const auto& k : scaled.cones) {
    if (k.type == ConeType::NonNeg) {
      for (int i = 0; i < k.size; ++i)
        row_scale(at + i) = std::pow(2.0, static_cast<int>(rng.uniform(-3, 4)));
    } else {
      const double f = std::pow(2.0, static_cast<int>(rng.uniform(-3, 4)));
      row_scale.segment(at, k.size).setConstant(f);
    }
    at += k.size;
    ++block_idx;
  }
  for (auto& t : scaled.entries)
    t = Eigen::Triplet<double>(t.row(), t.col(), t.value() * row_scale(t.row()));
  for (int i = 0; i < scaled.n_rows(); ++i) scaled.b[i] *= row_scale(i);

  ConicSolution re = solve(scaled);
  REQUIRE(re.status == SolveStatus::Optimal);
  CHECK(std::abs(re.objective - base.objective) <=
        1e-6 * std::max(1.0, std::abs(base.objective)));
}

TEST_CASE("deterministic resolve") {
  Rng rng(19);
  KnownInstance inst = make_known_instance(rng, true, true);
  ConicSolution a = solve(inst.p);
  ConicSolution b = solve(inst.p);
  REQUIRE(a.status == SolveStatus::Optimal);
  CHECK((a.x - b.x).norm() == 0.0);
  CHECK(a.objective == b.objective);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("infeasible and unbounded detection") {
  SUBCASE("x >= 1 and x <= 0 is infeasible") {
    ConicProblem p;
    p.add_variables("x", 1);
    p.set_objective(0, 1.0);
    int r1 = p.add_row(-1.0);
    p.add_entry(r1, 0, -1.0);  // x - 1 >= 0
    int r2 = p.add_row(0.0);
    p.add_entry(r2, 0, 1.0);  // -x >= 0
    p.add_cone(ConeType::NonNeg, 2);
    ConicSolution sol = solve(p);
    CHECK(sol.status == SolveStatus::Infeasible);
  }

  SUBCASE("min x with x <= 0 is unbounded") {
    ConicProblem p;
    p.add_variables("x", 1);
    p.set_objective(0, 1.0);
    int r = p.add_row(0.0);
    p.add_entry(r, 0, 1.0);  // s = -x >= 0
    p.add_cone(ConeType::NonNeg, 1);
    ConicSolution sol = solve(p);
    CHECK(sol.status == SolveStatus::Unbounded);
  }
}

TEST_CASE("hermitian embedding") {
  SUBCASE("identity and the known two-by-two spectrum") {
    CHECK((hermitian_embed(MatC::Identity(3, 3)) - MatD::Identity(6, 6)).norm() == 0.0);

    MatC h(2, 2);
    h << Cplx{0, 0}, Cplx{0, 1}, Cplx{0, -1}, Cplx{0, 0};
    MatD e = hermitian_embed(h);
    Eigen::SelfAdjointEigenSolver<MatD> es(e, Eigen::EigenvaluesOnly);
    VecD lam = es.eigenvalues();
    CHECK(lam(0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(lam(1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(lam(2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lam(3) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("embedding of a PSD matrix is PSD; round trip is exact") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
      MatC w(4, 4);
      for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.cgaussian();
      MatC h = w * w.adjoint();
      MatD e = hermitian_embed(h);
      Eigen::SelfAdjointEigenSolver<MatD> es(e, Eigen::EigenvaluesOnly);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, h.norm()));
      CHECK((hermitian_extract(e) - h).norm() <= 1e-14 * h.norm());
      CHECK(e.trace() == doctest::Approx(2.0 * h.trace().real()).epsilon(1e-12));
    }
  }

  SUBCASE("non-Hermitian input throws") {
    MatC bad(2, 2);
    bad << Cplx{1, 0}, Cplx{2, 3}, Cplx{0, 0}, Cplx{1, 0};
    CHECK_THROWS_AS(hermitian_embed(bad), std::invalid_argument);
  }
}

TEST_CASE("problem dump and read round trip") {
  Rng rng(29);
  KnownInstance inst = make_known_instance(rng, true, true);
  std::stringstream ss;
  dump_problem(inst.p, ss);
  ConicProblem back = read_problem(ss);
  CHECK(back.n_vars == inst.p.n_vars);
  CHECK(back.b == inst.p.b);
  CHECK(back.c == inst.p.c);
  REQUIRE(back.cones.size() == inst.p.cones.size());
  REQUIRE(back.entries.size() == inst.p.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    CHECK(back.entries[i].row() == inst.p.entries[i].row());
    CHECK(back.entries[i].col() == inst.p.entries[i].col());
    CHECK(back.entries[i].value() == inst.p.entries[i].value());
  }
  ConicSolution s1 = solve(inst.p);
  ConicSolution s2 = solve(back);
  CHECK(s1.objective == doctest::Approx(s2.objective).epsilon(1e-12));
}

TEST_CASE("dimension mismatch is an argument error") {
  ConicProblem p;
  p.add_variables("x", 2);
  p.add_row(1.0);
  p.add_cone(ConeType::NonNeg, 2);  // cones claim 2 rows, only 1 exists
  CHECK_THROWS_AS(solve(p), std::invalid_argument);
}
