#include "isacxt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace isacxt::model {

void ArrayGeometry::validate() const {
  if (n_tx_x < 1 || n_tx_y < 1 || n_rx_x < 1 || n_rx_y < 1)
    throw std::invalid_argument("antenna counts must be >= 1");
  if (carrier_hz <= 0 || subcarrier_spacing_hz <= 0)
    throw std::invalid_argument("carrier and subcarrier spacing must be positive");
  if (n_subcarriers < 1 || n_symbols < 1)
    throw std::invalid_argument("N and L must be >= 1");
}

Eigen::Matrix<double, 6, 1> GeometricParams::as_vector() const {
  Eigen::Matrix<double, 6, 1> v;
  v << theta0, delta_theta, phi0, delta_phi, d0, delta_d;
  return v;
}

GeometricParams GeometricParams::from_vector(const Eigen::Matrix<double, 6, 1>& v) {
  return {v(0), v(1), v(2), v(3), v(4), v(5)};
}

void GeometricParams::validate() const {
  if (delta_theta < 0 || delta_phi < 0 || delta_d < 0)
    throw std::invalid_argument("extents must be nonnegative");
  if (d0 <= delta_d / 2) throw std::invalid_argument("d0 must exceed delta_d/2");
}

void RcsPrior::validate() const {
  if (!(variance > 0) || !std::isfinite(variance))
    throw std::invalid_argument("RCS prior variance must be finite and positive");
}

VecC steering_vector(Side side, double theta, double phi, int n, const ArrayGeometry& geom) {
  if (n < 0 || n >= geom.n_subcarriers) throw std::invalid_argument("subcarrier index out of range");
  const int nx = (side == Side::Transmit) ? geom.n_tx_x : geom.n_rx_x;
  const int ny = (side == Side::Transmit) ? geom.n_tx_y : geom.n_rx_y;
  const double chi = geom.chi(n);
  const double px = kPi * chi * std::sin(phi) * std::cos(theta);
  const double py = kPi * chi * std::sin(phi) * std::sin(theta);
  VecC a(nx * ny);
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy)
      a(ix * ny + iy) = std::polar(1.0, -(ix * px + iy * py));
  return a;
}

std::array<double, 3> resolution_cells(const ArrayGeometry& geom, double phi0) {
  const double s = std::sin(phi0);
  const double c = std::cos(phi0);
  if (std::abs(s) < 1e-12 || std::abs(c) < 1e-12)
    throw std::domain_error("resolution_cells: phi0 at a pole of the angular resolution formulas");
  const double dtheta = 2.0 / (geom.n_tx_x * geom.n_rx_x * s);
  const double dphi = 2.0 / (geom.n_tx_y * geom.n_rx_y * c);
  const double dd = kSpeedOfLight / (2.0 * geom.n_subcarriers * geom.subcarrier_spacing_hz);
  return {std::abs(dtheta), std::abs(dphi), dd};
}

std::array<int, 3> grid_sizes(const std::array<double, 3>& extents,
                              const std::array<double, 3>& resolutions) {
  std::array<int, 3> out{};
  for (int i = 0; i < 3; ++i) {
    if (!(resolutions[i] > 0)) throw std::invalid_argument("resolutions must be positive");
    if (extents[i] < 0) throw std::invalid_argument("extents must be nonnegative");
    out[i] = std::max(1, static_cast<int>(std::ceil(extents[i] / resolutions[i])) + 1);
  }
  return out;
}

namespace {
double offset(int idx, int count) {
  // Degenerate axis keeps a single layer at the center.
  if (count <= 1) return 0.0;
  return static_cast<double>(idx) / (count - 1) - 0.5;
}
}  // namespace

ScattererGrid grid_from_geometry(const GeometricParams& params, const std::array<int, 3>& sizes) {
  for (int s : sizes)
    if (s < 1) throw std::invalid_argument("grid sizes must be >= 1");
  ScattererGrid g;
  g.t_theta = sizes[0];
  g.t_phi = sizes[1];
  g.t_d = sizes[2];
  g.pts.resize(g.total());
  for (int p = 0; p < g.t_theta; ++p)
    for (int q = 0; q < g.t_phi; ++q)
      for (int r = 0; r < g.t_d; ++r) {
        Scatterer& s = g.pts[g.linear_index(p, q, r)];
        s.u = offset(p, g.t_theta);
        s.v = offset(q, g.t_phi);
        s.w = offset(r, g.t_d);
        s.theta = params.theta0 + params.delta_theta * s.u;
        s.phi = params.phi0 + params.delta_phi * s.v;
        s.d = params.d0 + params.delta_d * s.w;
      }
  return g;
}

Cplx delay_phase(double d, int n, const ArrayGeometry& geom) {
  const double tau = 2.0 * d / kSpeedOfLight;
  return std::polar(1.0, -2.0 * kPi * n * geom.subcarrier_spacing_hz * tau);
}

MatC scatterer_response(double theta, double phi, double d, int n, const ArrayGeometry& geom) {
  const VecC a = steering_vector(Side::Transmit, theta, phi, n, geom);
  const VecC b = steering_vector(Side::Receive, theta, phi, n, geom);
  return delay_phase(d, n, geom) * (b * a.adjoint());
}

MatC scatterer_response(const Scatterer& s, int n, const ArrayGeometry& geom) {
  return scatterer_response(s.theta, s.phi, s.d, n, geom);
}

MatC target_response(const ScattererGrid& grid, const VecC& alpha, int n,
                     const ArrayGeometry& geom) {
  if (alpha.size() != grid.total())
    throw std::invalid_argument("alpha length must equal the scatterer count");
  MatC g = MatC::Zero(geom.n_rx(), geom.n_tx());
  for (int t = 0; t < grid.total(); ++t) {
    if (alpha(t) == Cplx{0.0, 0.0}) continue;
    g.noalias() += alpha(t) * scatterer_response(grid.pts[t], n, geom);
  }
  return g;
}

std::vector<std::vector<VecC>> generate_user_channels(const ArrayGeometry& geom,
                                                      const UserModel& users, Rng& rng) {
  if (users.count < 1) throw std::invalid_argument("generate_user_channels requires K >= 1");
  const int nt = geom.n_tx();
  const double gain = std::pow(users.distance_m, -users.path_loss_exponent);
  const double amp = std::sqrt(gain);
  double los_w = 1.0, nlos_w = 0.0;
  if (!users.pure_los) {
    const double k = users.rician_factor;
    los_w = std::sqrt(k / (1.0 + k));
    nlos_w = std::sqrt(1.0 / (1.0 + k));
  }
  std::vector<std::vector<VecC>> h(geom.n_subcarriers, std::vector<VecC>(users.count));
  // One direction per user, shared across subcarriers (the LOS path is the
  // same physical ray; only chi_n varies).
  std::vector<std::array<double, 2>> dirs(users.count);
  for (int k = 0; k < users.count; ++k) {
    dirs[k][0] = rng.uniform(users.sector_theta_min, users.sector_theta_max);
    dirs[k][1] = rng.uniform(users.sector_phi_min, users.sector_phi_max);
  }
  for (int n = 0; n < geom.n_subcarriers; ++n) {
    for (int k = 0; k < users.count; ++k) {
      VecC los = steering_vector(Side::Transmit, dirs[k][0], dirs[k][1], n, geom);
      VecC v(nt);
      for (int i = 0; i < nt; ++i) {
        Cplx scat = (nlos_w > 0.0) ? rng.cgaussian() : Cplx{0.0, 0.0};
        v(i) = amp * (los_w * los(i) + nlos_w * scat);
      }
      h[n][k] = std::move(v);
    }
  }
  return h;
}

double rcs_variance_for_snr(double snr_linear, double total_power, const ArrayGeometry& geom,
                            double noise_sensing) {
  const double denom = total_power * geom.n_symbols * geom.n_rx() * geom.n_tx();
  return snr_linear * noise_sensing / denom;
}

double sensing_snr(const Scenario& s) {
  return s.total_power * s.geom.n_symbols * s.geom.n_rx() * s.geom.n_tx() * s.prior.variance /
         s.noise_sensing;
}

ScattererGrid Scenario::make_grid() const {
  if (grid_policy.explicit_sizes)
    return grid_from_geometry(target, {grid_policy.t_theta, grid_policy.t_phi, grid_policy.t_d});
  const auto res = resolution_cells(geom, target.phi0);
  const auto sizes = grid_sizes({target.delta_theta, target.delta_phi, target.delta_d}, res);
  return grid_from_geometry(target, sizes);
}

void Scenario::validate() const {
  geom.validate();
  target.validate();
  prior.validate();
  if (users.count < 0) throw std::invalid_argument("K must be >= 0");
  if (!(total_power > 0)) throw std::invalid_argument("total power must be positive");
  if (!(noise_comm > 0) || !(noise_sensing >= 0))
    throw std::invalid_argument("noise powers must be positive");
  if (!(sidelobe.epsilon > 0)) throw std::invalid_argument("sidelobe threshold must be positive");
  if (users.count > 0) {
    if (static_cast<int>(channels.size()) != geom.n_subcarriers)
      throw std::invalid_argument("channels not generated for every subcarrier");
    if ((sinr_target <= 0.0).any()) throw std::invalid_argument("SINR targets must be positive");
  }
}

}  // namespace isacxt::model
