#include "isacxt/fisher.hpp"

#include <cmath>
#include <stdexcept>

namespace isacxt::fisher {

WeightMatrix WeightMatrix::from_resolutions(const std::array<double, 3>& res) {
  WeightMatrix w;
  const double lt = 1.0 / res[0], lp = 1.0 / res[1], ld = 1.0 / res[2];
  w.lambda_sq << lt * lt, lt * lt, lp * lp, lp * lp, ld * ld, ld * ld;
  return w;
}

double CovarianceSet::total_power() const {
  double p = 0.0;
  for (const auto& r : rn) p += r.trace().real();
  return p;
}

void CovarianceSet::validate(double tol) const {
  auto check = [&](const MatC& r) {
    if (r.rows() != r.cols()) throw std::invalid_argument("covariance not square");
    const double scale = std::max(1.0, r.norm());
    if ((r - r.adjoint()).norm() > tol * scale)
      throw std::invalid_argument("covariance not Hermitian");
    Eigen::SelfAdjointEigenSolver<MatC> es(r, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol * scale)
      throw std::invalid_argument("covariance not PSD");
  };
  for (const auto& r : rn) check(r);
  for (const auto& per_n : rnk)
    for (const auto& r : per_n) check(r);
}

SteeringDerivs steering_derivatives(Side side, double theta, double phi, int n,
                                    const ArrayGeometry& geom) {
  const int nx = (side == Side::Transmit) ? geom.n_tx_x : geom.n_rx_x;
  const int ny = (side == Side::Transmit) ? geom.n_tx_y : geom.n_rx_y;
  const double chi = geom.chi(n);
  const double st = std::sin(theta), ct = std::cos(theta);
  const double sp = std::sin(phi), cp = std::cos(phi);
  const VecC a = model::steering_vector(side, theta, phi, n, geom);

  // da/dtheta = j pi chi sin(phi) (sin(theta) Dx ax (x) ay - ax (x) cos(theta) Dy ay)
  // da/dphi   = -j pi chi cos(phi) (cos(theta) Dx ax (x) ay + ax (x) sin(theta) Dy ay)
  SteeringDerivs out;
  out.d_theta.resize(nx * ny);
  out.d_phi.resize(nx * ny);
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy) {
      const Cplx base = a(ix * ny + iy);
      out.d_theta(ix * ny + iy) = kJ * kPi * chi * sp * (st * ix - ct * iy) * base;
      out.d_phi(ix * ny + iy) = -kJ * kPi * chi * cp * (ct * ix + st * iy) * base;
    }
  return out;
}

std::array<MatC, 3> scatterer_derivatives(double theta, double phi, double d, int n,
                                          const ArrayGeometry& geom) {
  const VecC a = model::steering_vector(Side::Transmit, theta, phi, n, geom);
  const VecC b = model::steering_vector(Side::Receive, theta, phi, n, geom);
  const SteeringDerivs da = steering_derivatives(Side::Transmit, theta, phi, n, geom);
  const SteeringDerivs db = steering_derivatives(Side::Receive, theta, phi, n, geom);
  const Cplx f = model::delay_phase(d, n, geom);
  // df/dd = -j 4 pi n df / c * f
  const Cplx fd = -kJ * 4.0 * kPi * static_cast<double>(n) * geom.subcarrier_spacing_hz /
                  kSpeedOfLight * f;

  std::array<MatC, 3> out;
  out[0] = f * (db.d_theta * a.adjoint() + b * da.d_theta.adjoint());
  out[1] = f * (db.d_phi * a.adjoint() + b * da.d_phi.adjoint());
  out[2] = fd * (b * a.adjoint());
  return out;
}

std::array<MatC, 6> psm_v_derivatives(const ScattererGrid& grid, int t, int n,
                                      const ArrayGeometry& geom) {
  if (t < 0 || t >= grid.total()) throw std::invalid_argument("scatterer index out of range");
  const Scatterer& s = grid.pts[t];
  const auto center = scatterer_derivatives(s.theta, s.phi, s.d, n, geom);
  std::array<MatC, 6> out;
  out[0] = center[0];
  out[1] = s.u * center[0];
  out[2] = center[1];
  out[3] = s.v * center[1];
  out[4] = center[2];
  out[5] = s.w * center[2];
  return out;
}

MatD PsmFimCoefficients::evaluate(const std::vector<MatC>& rn) const {
  if (static_cast<int>(rn.size()) != n_subcarriers)
    throw std::invalid_argument("covariance count mismatch");
  MatD f = MatD::Zero(6, 6);
  for (int n = 0; n < n_subcarriers; ++n)
    for (int i = 0; i < 6; ++i)
      for (int j = i; j < 6; ++j) {
        const double v = (rn[n] * c[n][pack(i, j)]).trace().real();
        f(i, j) += v;
        if (i != j) f(j, i) += v;
      }
  return f;
}

PsmFimCoefficients psm_fim_coefficients(const ScattererGrid& grid, const RcsPrior& prior,
                                        const ArrayGeometry& geom, double sigma_s2) {
  PsmFimCoefficients out;
  out.n_subcarriers = geom.n_subcarriers;
  out.n_tx = geom.n_tx();
  out.active = grid.active_mask();
  out.c.resize(geom.n_subcarriers);
  const double scale = 2.0 * geom.n_symbols * prior.variance / sigma_s2;
  for (int n = 0; n < geom.n_subcarriers; ++n) {
    for (auto& m : out.c[n]) m = MatC::Zero(geom.n_tx(), geom.n_tx());
    for (int t = 0; t < grid.total(); ++t) {
      const auto dv = psm_v_derivatives(grid, t, n, geom);
      for (int i = 0; i < 6; ++i)
        for (int j = i; j < 6; ++j)
          out.c[n][PsmFimCoefficients::pack(i, j)].noalias() += scale * (dv[i].adjoint() * dv[j]);
    }
  }
  return out;
}

namespace {

void apply_mask(MatD& f, const std::array<bool, 6>& active) {
  for (int i = 0; i < 6; ++i)
    if (!active[i]) {
      f.row(i).setZero();
      f.col(i).setZero();
    }
}

bool reduced_inverse(const MatD& f, const std::array<bool, 6>& active, MatD& inv_full) {
  std::vector<int> idx;
  for (int i = 0; i < 6; ++i)
    if (active[i]) idx.push_back(i);
  const int m = static_cast<int>(idx.size());
  MatD fa(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) fa(i, j) = f(idx[i], idx[j]);
  Eigen::SelfAdjointEigenSolver<MatD> es(fa);
  const double emax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(emax > 0) || es.eigenvalues().minCoeff() <= 1e-13 * emax) return false;
  MatD fa_inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                es.eigenvectors().transpose();
  inv_full = MatD::Constant(6, 6, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) inv_full(i, j) = 0.0;
  for (int i = 0; i < 6; ++i)
    if (!active[i]) inv_full(i, i) = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) inv_full(idx[i], idx[j]) = fa_inv(i, j);
  return true;
}

}  // namespace

FimBlocks psm_geometric_fim(const CovarianceSet& cov, const ScattererGrid& grid,
                            const RcsPrior& prior, const ArrayGeometry& geom, double sigma_s2) {
  const auto coef = psm_fim_coefficients(grid, prior, geom, sigma_s2);
  FimBlocks out;
  out.model = FimModel::Psm;
  out.active = grid.active_mask();
  out.f_gg = coef.evaluate(cov.rn);
  apply_mask(out.f_gg, out.active);
  MatD dummy;
  out.singular = !reduced_inverse(out.f_gg, out.active, dummy);
  return out;
}

double weighted_crb(const FimBlocks& fim, const WeightMatrix& w) {
  MatD inv;
  if (!reduced_inverse(fim.f_gg, fim.active, inv)) return kInfiniteBound;
  double total = 0.0;
  for (int i = 0; i < 6; ++i)
    if (fim.active[i]) total += w.lambda_sq(i) * inv(i, i);
  return total;
}

MatD crb_matrix(const FimBlocks& fim, bool* singular) {
  MatD inv;
  const bool ok = reduced_inverse(fim.f_gg, fim.active, inv);
  if (singular) *singular = !ok;
  if (!ok) return MatD::Constant(6, 6, std::numeric_limits<double>::quiet_NaN());
  return inv;
}

MatD DsmFimCoefficients::evaluate(const std::vector<MatC>& rn) const {
  if (static_cast<int>(rn.size()) != n_subcarriers)
    throw std::invalid_argument("covariance count mismatch");
  const int t3 = 3 * t_count;
  MatD f = MatD::Zero(t3, t3);
  for (int n = 0; n < n_subcarriers; ++n)
    for (int t = 0; t < t_count; ++t)
      for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
          const double v = (rn[n] * c[n][t][pack3(a, b)]).trace().real();
          f(a * t_count + t, b * t_count + t) += v;
          if (a != b) f(b * t_count + t, a * t_count + t) += v;
        }
  return f;
}

DsmFimCoefficients dsm_fim_coefficients(const std::vector<Scatterer>& coords,
                                        const RcsPrior& prior, const ArrayGeometry& geom,
                                        double sigma_s2) {
  DsmFimCoefficients out;
  out.n_subcarriers = geom.n_subcarriers;
  out.t_count = static_cast<int>(coords.size());
  out.n_tx = geom.n_tx();
  out.c.resize(geom.n_subcarriers);
  const double scale = 2.0 * geom.n_symbols * prior.variance / sigma_s2;
  for (int n = 0; n < geom.n_subcarriers; ++n) {
    out.c[n].resize(coords.size());
    for (std::size_t t = 0; t < coords.size(); ++t) {
      const auto dv =
          scatterer_derivatives(coords[t].theta, coords[t].phi, coords[t].d, n, geom);
      for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b)
          out.c[n][t][DsmFimCoefficients::pack3(a, b)] = scale * (dv[a].adjoint() * dv[b]);
    }
  }
  return out;
}

DsmFim dsm_fim(const CovarianceSet& cov, const std::vector<Scatterer>& coords,
               const RcsPrior& prior, const ArrayGeometry& geom, double sigma_s2) {
  const auto coef = dsm_fim_coefficients(coords, prior, geom, sigma_s2);
  DsmFim out;
  out.t_count = coef.t_count;
  out.f = coef.evaluate(cov.rn);
  Eigen::SelfAdjointEigenSolver<MatD> es(out.f, Eigen::EigenvaluesOnly);
  const double emax = es.eigenvalues().cwiseAbs().maxCoeff();
  out.singular = !(emax > 0) || es.eigenvalues().minCoeff() <= 1e-13 * emax;
  return out;
}

MatD jacobian_dsm(const ScattererGrid& grid) {
  const int t = grid.total();
  MatD j = MatD::Zero(3 * t, 6);
  for (int i = 0; i < t; ++i) {
    const Scatterer& s = grid.pts[i];
    j(i, 0) = 1.0;
    j(i, 1) = s.u;
    j(t + i, 2) = 1.0;
    j(t + i, 3) = s.v;
    j(2 * t + i, 4) = 1.0;
    j(2 * t + i, 5) = s.w;
  }
  return j;
}

UcmFim::UcmFim(const CovarianceSet& cov, const ArrayGeometry& geom, double sigma_s2)
    : l_(geom.n_symbols), sigma_s2_(sigma_s2), n_rx_(geom.n_rx()) {
  scale_ = (sigma_s2 > 0) ? geom.n_symbols / sigma_s2 : std::numeric_limits<double>::infinity();
  rn_t_.reserve(cov.rn.size());
  rn_t_inv_.reserve(cov.rn.size());
  for (const auto& r : cov.rn) {
    rn_t_.push_back(r.transpose());
    Eigen::FullPivLU<MatC> lu(r.transpose());
    if (lu.isInvertible()) {
      rn_t_inv_.push_back(lu.inverse());
    } else {
      rank_deficient_ = true;
      rn_t_inv_.push_back(MatC());
    }
  }
}

MatC UcmFim::apply_block(const MatC& v, int n) const { return scale_ * (v * rn_t_[n]); }

MatC UcmFim::apply_block_scaled(const MatC& v, int n) const { return l_ * (v * rn_t_[n]); }

MatC UcmFim::inverse_apply_block(const MatC& v, int n) const {
  if (rn_t_inv_[n].size() == 0)
    throw std::runtime_error("UcmFim: rank-deficient covariance at subcarrier " +
                             std::to_string(n));
  return (sigma_s2_ / l_) * (v * rn_t_inv_[n]);
}

double UcmFim::crb_trace() const {
  double total = 0.0;
  for (const auto& inv : rn_t_inv_) {
    if (inv.size() == 0) return kInfiniteBound;
    total += inv.trace().real();
  }
  return sigma_s2_ * n_rx_ / l_ * total;
}

MatD ucm_mapped_full_fim(const CovarianceSet& cov, const ScattererGrid& grid,
                         const RcsPrior& prior, const ArrayGeometry& geom, double sigma_s2,
                         bool include_prior) {
  const int t = grid.total();
  MatD f = MatD::Zero(6 + 2 * t, 6 + 2 * t);
  const double scale = geom.n_symbols / sigma_s2;

  // Geometric block, scatterer by scatterer.
  for (int n = 0; n < geom.n_subcarriers; ++n) {
    const MatC rt = cov.rn[n].transpose();
    for (int k = 0; k < t; ++k) {
      const auto dv = psm_v_derivatives(grid, k, n, geom);
      for (int i = 0; i < 6; ++i)
        for (int j = i; j < 6; ++j) {
          const double v =
              2.0 * prior.variance * scale * (dv[i].adjoint() * dv[j] * rt).trace().real();
          f(i, j) += v;
          if (i != j) f(j, i) += v;
        }
    }
  }

  // RCS block from the Gram of the scatterer responses under F_G.
  MatC gram = MatC::Zero(t, t);
  for (int n = 0; n < geom.n_subcarriers; ++n) {
    const MatC rt = cov.rn[n].transpose();
    std::vector<MatC> v(t);
    for (int k = 0; k < t; ++k) v[k] = model::scatterer_response(grid.pts[k], n, geom);
    for (int a = 0; a < t; ++a)
      for (int b2 = 0; b2 < t; ++b2) gram(a, b2) += scale * (v[a].adjoint() * v[b2] * rt).trace();
  }
  f.block(6, 6, t, t) = 2.0 * gram.real();
  f.block(6 + t, 6 + t, t, t) = 2.0 * gram.real();
  f.block(6, 6 + t, t, t) = -2.0 * gram.imag();
  f.block(6 + t, 6, t, t) = 2.0 * gram.imag();
  if (include_prior)
    f.block(6, 6, 2 * t, 2 * t) += (2.0 / prior.variance) * MatD::Identity(2 * t, 2 * t);
  return f;
}

MappedCrbs mapped_geometric_fims(const CovarianceSet& cov, const ScattererGrid& grid,
                                 const RcsPrior& prior, const ArrayGeometry& geom,
                                 double sigma_s2) {
  MappedCrbs out;
  out.psm = psm_geometric_fim(cov, grid, prior, geom, sigma_s2);

  // DSM mapped through the coordinate Jacobian.
  const DsmFim fd = dsm_fim(cov, grid.pts, prior, geom, sigma_s2);
  const MatD j = jacobian_dsm(grid);
  out.dsm_mapped.model = FimModel::DsmMapped;
  out.dsm_mapped.active = grid.active_mask();
  out.dsm_mapped.f_gg = j.transpose() * fd.f * j;
  apply_mask(out.dsm_mapped.f_gg, out.dsm_mapped.active);
  {
    MatD dummy;
    out.dsm_mapped.singular = !reduced_inverse(out.dsm_mapped.f_gg, out.dsm_mapped.active, dummy);
  }

  // UCM mapped: E_alpha{2 Re{J_G^H F_G J_G}} geometric block, built scatterer
  // by scatterer so the N*Nt*Nr-dimensional operand never materializes.
  out.ucm_mapped.model = FimModel::UcmMapped;
  out.ucm_mapped.active = grid.active_mask();
  MatD fu = MatD::Zero(6, 6);
  const double scale = 2.0 * prior.variance * geom.n_symbols / sigma_s2;
  for (int n = 0; n < geom.n_subcarriers; ++n) {
    const MatC rt = cov.rn[n].transpose();
    for (int t = 0; t < grid.total(); ++t) {
      const auto dv = psm_v_derivatives(grid, t, n, geom);
      for (int i = 0; i < 6; ++i)
        for (int j2 = i; j2 < 6; ++j2) {
          const double v = scale * (dv[i].adjoint() * dv[j2] * rt).trace().real();
          fu(i, j2) += v;
          if (i != j2) fu(j2, i) += v;
        }
    }
  }
  out.ucm_mapped.f_gg = fu;
  apply_mask(out.ucm_mapped.f_gg, out.ucm_mapped.active);
  {
    MatD dummy;
    out.ucm_mapped.singular = !reduced_inverse(out.ucm_mapped.f_gg, out.ucm_mapped.active, dummy);
  }
  return out;
}

}  // namespace isacxt::fisher
