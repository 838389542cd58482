#include "isacxt/ambiguity.hpp"

#include <cmath>
#include <stdexcept>

namespace isacxt::ambiguity {

namespace {

// Scatterers of range layer r share the grid's r index.
bool in_layer(const ScattererGrid& grid, int t, int layer) {
  return t % grid.t_d == layer;
}

}  // namespace

Cplx ambiguity_inner_sum(const CovarianceSet& cov, const ScattererGrid& grid,
                         const ArrayGeometry& geom, double d_ref, double d_hat, int layer) {
  if (static_cast<int>(cov.rn.size()) != geom.n_subcarriers)
    throw std::invalid_argument("covariance count mismatch");
  Cplx total{0.0, 0.0};
  for (int n = 0; n < geom.n_subcarriers; ++n) {
    double g = 0.0;
    for (int t = 0; t < grid.total(); ++t) {
      if (layer >= 0 && !in_layer(grid, t, layer)) continue;
      const VecC a =
          model::steering_vector(model::Side::Transmit, grid.pts[t].theta, grid.pts[t].phi, n, geom);
      g += (a.adjoint() * cov.rn[n] * a)(0).real();
    }
    const double psi =
        4.0 * kPi * n * geom.subcarrier_spacing_hz * (d_ref - d_hat) / kSpeedOfLight;
    total += std::polar(1.0, -psi) * g;
  }
  return total;
}

double range_ambiguity_psm(const CovarianceSet& cov, const ScattererGrid& grid,
                           const ArrayGeometry& geom, double d0, double d_hat) {
  if (!(d_hat > 0)) throw std::invalid_argument("hypothesized range must be positive");
  return std::norm(ambiguity_inner_sum(cov, grid, geom, d0, d_hat));
}

double normalized_sidelobe(const CovarianceSet& cov, const ScattererGrid& grid,
                           const ArrayGeometry& geom, double total_power, double d0,
                           double d_hat) {
  if (!(total_power > 0)) throw std::invalid_argument("total power must be positive");
  const double main = geom.n_tx() * total_power * grid.total();
  return range_ambiguity_psm(cov, grid, geom, d0, d_hat) / (main * main);
}

double range_ambiguity_dsm(const CovarianceSet& cov, const ScattererGrid& grid,
                           const ArrayGeometry& geom, int layer, double d_hat) {
  if (layer < 0 || layer >= grid.t_d) throw std::invalid_argument("range layer out of range");
  if (!(d_hat > 0)) throw std::invalid_argument("hypothesized range must be positive");
  const double d_r = grid.pts[layer].d;  // index (0,0,layer)
  return std::norm(ambiguity_inner_sum(cov, grid, geom, d_r, d_hat, layer));
}

double normalized_sidelobe_dsm(const CovarianceSet& cov, const ScattererGrid& grid,
                               const ArrayGeometry& geom, double total_power, int layer,
                               double d_hat) {
  const double main = geom.n_tx() * total_power * grid.t_theta * grid.t_phi;
  return range_ambiguity_dsm(cov, grid, geom, layer, d_hat) / (main * main);
}

SidelobeSet build_sidelobe_set(double d_ref, double range_resolution,
                               const SidelobePolicy& policy) {
  if (!(policy.spacing_cells > 0)) throw std::invalid_argument("sidelobe spacing must be positive");
  if (policy.points_per_side < 0) throw std::invalid_argument("sidelobe count must be >= 0");
  const double spacing = policy.spacing_cells * range_resolution;
  SidelobeSet set;
  set.epsilon = policy.epsilon;
  set.d_ref = d_ref;
  for (int m = 1; m <= policy.points_per_side; ++m) {
    const double lo = d_ref - m * spacing;
    const double hi = d_ref + m * spacing;
    // Points inside one resolution cell of the protected range (or at
    // nonpositive range) are skipped rather than constrained.
    if (lo > 0 && std::abs(lo - d_ref) >= range_resolution * (1.0 - 1e-9))
      set.ranges.push_back(lo);
    if (std::abs(hi - d_ref) >= range_resolution * (1.0 - 1e-9)) set.ranges.push_back(hi);
  }
  return set;
}

std::vector<SidelobeSet> build_sidelobe_sets_dsm(const ScattererGrid& grid,
                                                 double range_resolution,
                                                 const SidelobePolicy& policy) {
  std::vector<SidelobeSet> sets;
  sets.reserve(grid.t_d);
  for (int r = 0; r < grid.t_d; ++r) {
    SidelobeSet s = build_sidelobe_set(grid.pts[r].d, range_resolution, policy);
    s.layer = r;
    sets.push_back(std::move(s));
  }
  return sets;
}

}  // namespace isacxt::ambiguity
