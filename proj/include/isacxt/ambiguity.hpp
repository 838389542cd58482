#pragma once

#include <vector>

#include "isacxt/common.hpp"
#include "isacxt/fisher.hpp"
#include "isacxt/model.hpp"

namespace isacxt::ambiguity {

using fisher::CovarianceSet;
using model::ArrayGeometry;
using model::ScattererGrid;
using model::SidelobePolicy;

/// Hypothesized ranges protected by sidelobe constraints. PSM carries one
/// global set; DSM one set per range layer.
struct SidelobeSet {
  std::vector<double> ranges;
  double epsilon = 1e-2;
  int layer = -1;       // DSM layer index, -1 for the PSM global set
  double d_ref = 0.0;   // protected range the set excludes
};

/// chi_{d0}(d_hat) up to the sigma_alpha^4 N_r^2 factor:
/// |sum_n e^{-j psi_n} sum_t a_{t,n}^H R_n a_{t,n}|^2.
double range_ambiguity_psm(const CovarianceSet& cov, const ScattererGrid& grid,
                           const ArrayGeometry& geom, double d0, double d_hat);

/// Ambiguity normalized by the ideal mainlobe N_t^2 P^2 T^2 (the
/// sigma_alpha^4 N_r^2 factors cancel and are never computed).
double normalized_sidelobe(const CovarianceSet& cov, const ScattererGrid& grid,
                           const ArrayGeometry& geom, double total_power, double d0,
                           double d_hat);

/// DSM per-layer ambiguity restricted to the scatterers of range layer r.
double range_ambiguity_dsm(const CovarianceSet& cov, const ScattererGrid& grid,
                           const ArrayGeometry& geom, int layer, double d_hat);

double normalized_sidelobe_dsm(const CovarianceSet& cov, const ScattererGrid& grid,
                               const ArrayGeometry& geom, double total_power, int layer,
                               double d_hat);

/// Points at d_ref +/- m * spacing for m = 1..count, mainlobe excluded.
SidelobeSet build_sidelobe_set(double d_ref, double range_resolution,
                               const SidelobePolicy& policy);

/// One set per DSM range layer, each excluding its own layer center.
std::vector<SidelobeSet> build_sidelobe_sets_dsm(const ScattererGrid& grid,
                                                 double range_resolution,
                                                 const SidelobePolicy& policy);

/// Complex inner sum z = sum_n e^{-j psi_n} sum_t a^H R_n a for the PSM set
/// (or one DSM layer when layer >= 0); the constraint bound is |z|.
Cplx ambiguity_inner_sum(const CovarianceSet& cov, const ScattererGrid& grid,
                         const ArrayGeometry& geom, double d_ref, double d_hat, int layer = -1);

}  // namespace isacxt::ambiguity
