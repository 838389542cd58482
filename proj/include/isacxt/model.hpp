#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "isacxt/common.hpp"

namespace isacxt::model {

/// Dual-URA monostatic front end plus the OFDM numerology.
struct ArrayGeometry {
  int n_tx_x = 1;
  int n_tx_y = 1;
  int n_rx_x = 1;
  int n_rx_y = 1;
  double carrier_hz = 28e9;
  double subcarrier_spacing_hz = 480e3;
  int n_subcarriers = 1;
  int n_symbols = 1;
  bool narrowband = false;  // forces chi_n = 1 (test/diagnostic lever)

  int n_tx() const { return n_tx_x * n_tx_y; }
  int n_rx() const { return n_rx_x * n_rx_y; }

  /// Wideband factor chi_n = 1 + n*df/fc; chi_0 == 1 exactly.
  double chi(int n) const {
    if (narrowband) return 1.0;
    return 1.0 + static_cast<double>(n) * subcarrier_spacing_hz / carrier_hz;
  }

  void validate() const;
};

/// Six geometric parameters: center and extent in azimuth, elevation, range.
/// Vector ordering is [theta0, d_theta, phi0, d_phi, d0, d_d].
struct GeometricParams {
  double theta0 = 0.0;
  double delta_theta = 0.0;
  double phi0 = 0.0;
  double delta_phi = 0.0;
  double d0 = 1.0;
  double delta_d = 0.0;

  Eigen::Matrix<double, 6, 1> as_vector() const;
  static GeometricParams from_vector(const Eigen::Matrix<double, 6, 1>& v);
  void validate() const;
};

enum class Side { Transmit, Receive };

/// One scatterer of the discretized target.
struct Scatterer {
  double theta = 0.0, phi = 0.0, d = 0.0;  // coordinates
  double u = 0.0, v = 0.0, w = 0.0;        // normalized offsets in [-1/2, 1/2]
};

/// Uniform scatterer grid over the target extent. Linear index order is
/// t = p*T_phi*T_d + q*T_d + r (0-based p, q, r).
struct ScattererGrid {
  int t_theta = 1;
  int t_phi = 1;
  int t_d = 1;
  std::vector<Scatterer> pts;

  int total() const { return t_theta * t_phi * t_d; }
  int linear_index(int p, int q, int r) const { return (p * t_phi + q) * t_d + r; }

  /// Parameters identifiable from this grid: extents on axes with a single
  /// layer are dropped (their offsets are identically zero).
  std::array<bool, 6> active_mask() const {
    return {true, t_theta > 1, true, t_phi > 1, true, t_d > 1};
  }
};

/// Gaussian prior variance for the complex scattering coefficients.
struct RcsPrior {
  double variance = 1.0;
  void validate() const;
};

struct GridPolicy {
  bool explicit_sizes = false;
  int t_theta = 1, t_phi = 1, t_d = 1;  // used when explicit_sizes
};

/// Rician downlink channel generator parameters (artifact plumbing; the
/// drawing rules are configurable because the literature leaves them open).
struct UserModel {
  int count = 0;
  double distance_m = 50.0;
  double path_loss_exponent = 3.0;
  double rician_factor = 10.0;  // linear
  bool pure_los = false;        // kappa -> infinity limit
  double sector_theta_min = -kPi / 3, sector_theta_max = kPi / 3;
  double sector_phi_min = kPi / 4, sector_phi_max = kPi / 3;
};

struct SidelobePolicy {
  double epsilon = 1e-2;  // normalized ratio threshold
  int points_per_side = 5;
  double spacing_cells = 1.0;  // in units of the range resolution
};

/// Full experiment description. Immutable after construction.
struct Scenario {
  ArrayGeometry geom;
  GeometricParams target;
  GridPolicy grid_policy;
  RcsPrior prior;
  UserModel users;
  // SINR targets, linear scale, N x K (empty when K = 0).
  Eigen::ArrayXXd sinr_target;
  double total_power = 1.0;
  double noise_comm = 1e-9;     // sigma_c^2
  double noise_sensing = 1.0;   // sigma_s^2
  SidelobePolicy sidelobe;
  std::uint64_t seed = 1;
  // Realized channels h[n][k], each of length N_t.
  std::vector<std::vector<VecC>> channels;

  int n_users() const { return users.count; }
  ScattererGrid make_grid() const;
  void validate() const;
};

/// Steering vector a_x (x) kron a_y at subcarrier n; unit-modulus entries,
/// leading entry exactly 1.
VecC steering_vector(Side side, double theta, double phi, int n, const ArrayGeometry& geom);

/// (delta_theta, delta_phi, delta_d) resolution cells from the array geometry
/// and signal bandwidth. Throws for phi0 at a pole of either angular formula.
std::array<double, 3> resolution_cells(const ArrayGeometry& geom, double phi0);

/// T_x = max(1, ceil(extent/resolution) + 1) per axis.
std::array<int, 3> grid_sizes(const std::array<double, 3>& extents,
                              const std::array<double, 3>& resolutions);

ScattererGrid grid_from_geometry(const GeometricParams& params, const std::array<int, 3>& sizes);

/// Delay phase f_{t,n} = exp(-j 4 pi n df d / c).
Cplx delay_phase(double d, int n, const ArrayGeometry& geom);

/// Single-scatterer response V_{t,n} = f_{t,n} b_{t,n} a_{t,n}^H.
MatC scatterer_response(const Scatterer& s, int n, const ArrayGeometry& geom);
MatC scatterer_response(double theta, double phi, double d, int n, const ArrayGeometry& geom);

/// Target response matrix G_n = sum_t alpha_t f_{t,n} b_{t,n} a_{t,n}^H.
MatC target_response(const ScattererGrid& grid, const VecC& alpha, int n,
                     const ArrayGeometry& geom);

/// Draws h_{n,k} for every subcarrier and user; deterministic given rng state.
std::vector<std::vector<VecC>> generate_user_channels(const ArrayGeometry& geom,
                                                      const UserModel& users, Rng& rng);

/// Back-solves sigma_alpha^2 from a requested sensing SNR
/// (snr = P * L * N_r * N_t * sigma_alpha^2 / sigma_s^2).
double rcs_variance_for_snr(double snr_linear, double total_power, const ArrayGeometry& geom,
                            double noise_sensing);
double sensing_snr(const Scenario& s);

}  // namespace isacxt::model
