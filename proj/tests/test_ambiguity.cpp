#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "isacxt/ambiguity.hpp"

using namespace isacxt;
using namespace isacxt::ambiguity;
using model::ArrayGeometry;
using model::GeometricParams;
using model::ScattererGrid;

namespace {

ArrayGeometry geom16() {
  ArrayGeometry g;
  g.n_tx_x = 2;
  g.n_tx_y = 2;
  g.n_rx_x = 4;
  g.n_rx_y = 4;
  g.carrier_hz = 28e9;
  g.subcarrier_spacing_hz = 480e3;
  g.n_subcarriers = 16;
  g.n_symbols = 8;
  return g;
}

GeometricParams target25() {
  GeometricParams p;
  p.theta0 = 0.4;
  p.delta_theta = 0.3;
  p.phi0 = 0.7;
  p.delta_phi = 0.1;
  p.d0 = 25.0;
  p.delta_d = 10.0;
  return p;
}

fisher::CovarianceSet random_cov(const ArrayGeometry& g, Rng& rng, double power) {
  fisher::CovarianceSet cov;
  for (int n = 0; n < g.n_subcarriers; ++n) {
    MatC w(g.n_tx(), g.n_tx());
    for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.cgaussian();
    cov.rn.push_back(w * w.adjoint());
  }
  const double tot = cov.total_power();
  for (auto& r : cov.rn) r *= power / tot;
  return cov;
}

// Direct double-sum evaluation with elementwise loops (no linear algebra).
double oracle_chi(const fisher::CovarianceSet& cov, const ScattererGrid& grid,
                  const ArrayGeometry& g, double d_ref, double d_hat, int layer) {
  Cplx total{0.0, 0.0};
  for (int n = 0; n < g.n_subcarriers; ++n) {
    double gsum = 0.0;
    for (int t = 0; t < grid.total(); ++t) {
      if (layer >= 0 && t % grid.t_d != layer) continue;
      VecC a = model::steering_vector(model::Side::Transmit, grid.pts[t].theta, grid.pts[t].phi,
                                      n, g);
      Cplx quad{0.0, 0.0};
      for (int i = 0; i < a.size(); ++i)
        for (int j = 0; j < a.size(); ++j) quad += std::conj(a(i)) * cov.rn[n](i, j) * a(j);
      gsum += quad.real();
    }
    const double psi = 4.0 * kPi * n * g.subcarrier_spacing_hz * (d_ref - d_hat) / kSpeedOfLight;
    total += Cplx{std::cos(psi), -std::sin(psi)} * gsum;
  }
  return std::norm(total);
}

}  // namespace

TEST_CASE("psm range ambiguity") {
  ArrayGeometry g = geom16();
  ScattererGrid grid = model::grid_from_geometry(target25(), {3, 2, 2});
  Rng rng(5);
  fisher::CovarianceSet cov = random_cov(g, rng, 1.0);

  SUBCASE("zero phase at the true range") {
    double direct = 0.0;
    for (int n = 0; n < g.n_subcarriers; ++n)
      for (int t = 0; t < grid.total(); ++t) {
        VecC a = model::steering_vector(model::Side::Transmit, grid.pts[t].theta,
                                        grid.pts[t].phi, n, g);
        direct += (a.adjoint() * cov.rn[n] * a)(0).real();
      }
    CHECK(range_ambiguity_psm(cov, grid, g, 25.0, 25.0) ==
          doctest::Approx(direct * direct).epsilon(1e-12));
  }

  SUBCASE("narrowband ambiguity is periodic with c/(2 df)") {
    ArrayGeometry nb = g;
    nb.narrowband = true;
    ScattererGrid nbgrid = model::grid_from_geometry(target25(), {3, 2, 2});
    const double period = kSpeedOfLight / (2.0 * nb.subcarrier_spacing_hz);
    const double at_d0 = range_ambiguity_psm(cov, nbgrid, nb, 25.0, 25.0);
    const double shifted = range_ambiguity_psm(cov, nbgrid, nb, 25.0, 25.0 + period);
    CHECK(shifted == doctest::Approx(at_d0).epsilon(1e-9));
  }

  SUBCASE("matches the double-sum oracle at random hypotheses") {
    Rng r2(9);
    for (int k = 0; k < 8; ++k) {
      const double d_hat = r2.uniform(5.0, 60.0);
      const double got = range_ambiguity_psm(cov, grid, g, 25.0, d_hat);
      const double want = oracle_chi(cov, grid, g, 25.0, d_hat, -1);
      CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, want));
    }
  }

  SUBCASE("chi is nonnegative") {
    Rng r3(13);
    for (int k = 0; k < 10; ++k)
      CHECK(range_ambiguity_psm(cov, grid, g, 25.0, r3.uniform(1.0, 300.0)) >= 0.0);
  }
}

TEST_CASE("normalized sidelobe ratio") {
  ArrayGeometry g = geom16();
  GeometricParams pt = target25();

  SUBCASE("full coherent gain on a single scatterer gives ratio 1") {
    ScattererGrid one = model::grid_from_geometry(pt, {1, 1, 1});
    const double p = 2.5;
    fisher::CovarianceSet cov;
    for (int n = 0; n < g.n_subcarriers; ++n) {
      VecC a = model::steering_vector(model::Side::Transmit, pt.theta0, pt.phi0, n, g);
      cov.rn.push_back((p / g.n_subcarriers) * (a * a.adjoint()) / static_cast<double>(g.n_tx()));
    }
    CHECK(normalized_sidelobe(cov, one, g, p, pt.d0, pt.d0) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("zero covariance gives zero ratio; definition consistency") {
    ScattererGrid grid = model::grid_from_geometry(pt, {3, 2, 2});
    fisher::CovarianceSet zero;
    for (int n = 0; n < g.n_subcarriers; ++n) zero.rn.push_back(MatC::Zero(g.n_tx(), g.n_tx()));
    CHECK(normalized_sidelobe(zero, grid, g, 1.0, 25.0, 27.0) == 0.0);

    Rng rng(17);
    fisher::CovarianceSet cov = random_cov(g, rng, 1.7);
    const double d_hat = 29.3;
    const double main = g.n_tx() * 1.7 * grid.total();
    const double want = range_ambiguity_psm(cov, grid, g, 25.0, d_hat) / (main * main);
    CHECK(normalized_sidelobe(cov, grid, g, 1.7, 25.0, d_hat) ==
          doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("scale invariance under joint R and P scaling") {
    ScattererGrid grid = model::grid_from_geometry(pt, {3, 2, 2});
    Rng rng(19);
    fisher::CovarianceSet cov = random_cov(g, rng, 1.0);
    fisher::CovarianceSet cov2 = cov;
    for (auto& r : cov2.rn) r *= 4.0;
    const double r1 = normalized_sidelobe(cov, grid, g, 1.0, 25.0, 31.0);
    const double r2 = normalized_sidelobe(cov2, grid, g, 4.0, 25.0, 31.0);
    CHECK(r1 == doctest::Approx(r2).epsilon(1e-12));
  }
}

TEST_CASE("dsm range ambiguity") {
  ArrayGeometry g = geom16();
  GeometricParams pt = target25();
  Rng rng(23);
  fisher::CovarianceSet cov = random_cov(g, rng, 1.0);

  SUBCASE("T_d = 1 reduces to the PSM ambiguity") {
    ScattererGrid grid = model::grid_from_geometry(pt, {3, 2, 1});
    for (double d_hat : {12.0, 25.0, 38.5}) {
      CHECK(range_ambiguity_dsm(cov, grid, g, 0, d_hat) ==
            doctest::Approx(range_ambiguity_psm(cov, grid, g, pt.d0, d_hat)).epsilon(1e-12));
      CHECK(normalized_sidelobe_dsm(cov, grid, g, 1.0, 0, d_hat) ==
            doctest::Approx(normalized_sidelobe(cov, grid, g, 1.0, pt.d0, d_hat)).epsilon(1e-12));
    }
  }

  SUBCASE("layer-restricted oracle agreement") {
    ScattererGrid grid = model::grid_from_geometry(pt, {3, 2, 3});
    Rng r2(29);
    for (int layer = 0; layer < grid.t_d; ++layer) {
      const double d_r = grid.pts[layer].d;
      // zero phase at the layer range
      CHECK(range_ambiguity_dsm(cov, grid, g, layer, d_r) ==
            doctest::Approx(oracle_chi(cov, grid, g, d_r, d_r, layer)).epsilon(1e-12));
      for (int k = 0; k < 4; ++k) {
        const double d_hat = r2.uniform(5.0, 60.0);
        const double got = range_ambiguity_dsm(cov, grid, g, layer, d_hat);
        const double want = oracle_chi(cov, grid, g, d_r, d_hat, layer);
        CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, want));
      }
    }
  }

  SUBCASE("bad layer index throws") {
    ScattererGrid grid = model::grid_from_geometry(pt, {3, 2, 2});
    CHECK_THROWS_AS(range_ambiguity_dsm(cov, grid, g, 2, 20.0), std::invalid_argument);
    CHECK_THROWS_AS(range_ambiguity_dsm(cov, grid, g, -1, 20.0), std::invalid_argument);
  }
}

TEST_CASE("sidelobe set construction") {
  model::SidelobePolicy policy;
  policy.epsilon = 1e-2;
  policy.points_per_side = 5;
  policy.spacing_cells = 1.0;

  SUBCASE("default ten points around 25 m") {
    const double dd = 2.441;
    SidelobeSet set = build_sidelobe_set(25.0, dd, policy);
    REQUIRE(set.ranges.size() == 10);
    for (int m = 1; m <= 5; ++m) {
      bool has_lo = false, has_hi = false;
      for (double d : set.ranges) {
        if (std::abs(d - (25.0 - m * dd)) < 1e-12) has_lo = true;
        if (std::abs(d - (25.0 + m * dd)) < 1e-12) has_hi = true;
      }
      CHECK(has_lo);
      CHECK(has_hi);
    }
    for (double d : set.ranges) CHECK(std::abs(d - 25.0) >= dd * (1.0 - 1e-9));
  }

  SUBCASE("zero count gives the unconstrained design") {
    model::SidelobePolicy none = policy;
    none.points_per_side = 0;
    CHECK(build_sidelobe_set(25.0, 2.441, none).ranges.empty());
  }

  SUBCASE("dsm variant produces one set per layer excluding its center") {
    GeometricParams pt = target25();
    ScattererGrid grid = model::grid_from_geometry(pt, {2, 2, 3});
    auto sets = build_sidelobe_sets_dsm(grid, 2.441, policy);
    REQUIRE(sets.size() == 3);
    for (int r = 0; r < 3; ++r) {
      CHECK(sets[r].layer == r);
      const double center = grid.pts[r].d;
      CHECK(sets[r].d_ref == doctest::Approx(center));
      for (double d : sets[r].ranges) CHECK(std::abs(d - center) >= 2.441 * (1.0 - 1e-9));
    }
  }

  SUBCASE("nonpositive spacing throws") {
    model::SidelobePolicy bad = policy;
    bad.spacing_cells = 0.0;
    CHECK_THROWS_AS(build_sidelobe_set(25.0, 2.441, bad), std::invalid_argument);
  }
}
