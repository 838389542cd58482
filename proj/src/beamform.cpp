#include "isacxt/beamform.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace isacxt::beamform {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

const char* model_name(Model m) {
  switch (m) {
    case Model::Psm: return "psm";
    case Model::Ucm: return "ucm";
    case Model::Dsm: return "dsm";
  }
  return "?";
}

Model model_from_name(const std::string& name) {
  if (name == "psm") return Model::Psm;
  if (name == "ucm") return Model::Ucm;
  if (name == "dsm") return Model::Dsm;
  throw std::invalid_argument("unknown model: " + name);
}

int HermitianVarMap::re_index(int i, int j) const {
  const int pair = i * n - i * (i + 1) / 2 + (j - i - 1);
  return offset + n + 2 * pair;
}

int HermitianVarMap::im_index(int i, int j) const { return re_index(i, j) + 1; }

void HermitianVarMap::add_re_trace(conic::ConicProblem& p, int row, const MatC& c,
                                   double scale) const {
  for (int i = 0; i < n; ++i) p.add_entry(row, diag_index(i), scale * c(i, i).real());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      p.add_entry(row, re_index(i, j), scale * (c(j, i).real() + c(i, j).real()));
      p.add_entry(row, im_index(i, j), scale * (c(i, j).imag() - c(j, i).imag()));
    }
}

MatC HermitianVarMap::extract(const VecD& x) const {
  MatC h(n, n);
  for (int i = 0; i < n; ++i) h(i, i) = x(diag_index(i));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const Cplx v{x(re_index(i, j)), x(im_index(i, j))};
      h(i, j) = v;
      h(j, i) = std::conj(v);
    }
  return h;
}

int SymVarMap::index(int i, int j) const {
  // packed by column j, rows i <= j
  return offset + j * (j + 1) / 2 + i;
}

MatD SymVarMap::extract(const VecD& x) const {
  MatD s(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      s(i, j) = x(index(i, j));
      s(j, i) = s(i, j);
    }
  return s;
}

namespace {

// One Hermitian variable placed on a diagonal sub-block of a larger
// Hermitian expression.
struct HermTerm {
  const HermitianVarMap* var;
  double coef;
  int at;  // top-left index of the sub-block
};

// Emits svec(embed(H(x))) as one PSD cone block for the affine Hermitian
// expression H(x) = sum_k coef_k placed(var_k) + constant.
void add_embedded_psd_block(conic::ConicProblem& p, int side, const std::vector<HermTerm>& terms,
                            const MatC& constant) {
  // Parameter coefficients of Re/Im of entry (a, b) of one Hermitian var.
  auto add_entry_coeffs = [&](int row, const HermTerm& t, int a, int b, bool imag_part,
                              double scale) {
    const int i = a - t.at, j = b - t.at;
    if (i < 0 || i >= t.var->n || j < 0 || j >= t.var->n) return;
    if (!imag_part) {
      if (i == j)
        p.add_entry(row, t.var->diag_index(i), scale * t.coef);
      else if (i < j)
        p.add_entry(row, t.var->re_index(i, j), scale * t.coef);
      else
        p.add_entry(row, t.var->re_index(j, i), scale * t.coef);
    } else {
      if (i < j)
        p.add_entry(row, t.var->im_index(i, j), scale * t.coef);
      else if (i > j)
        p.add_entry(row, t.var->im_index(j, i), -scale * t.coef);
    }
  };

  for (int bj = 0; bj < 2 * side; ++bj)
    for (int bi = 0; bi <= bj; ++bi) {
      const double sc = (bi == bj) ? 1.0 : kSqrt2;
      double bval = 0.0;
      int a = 0, b = 0;
      bool imag_part = false;
      double sign = 1.0;
      if (bi < side && bj < side) {
        a = bi;
        b = bj;
        bval = constant(a, b).real();
      } else if (bi < side) {
        a = bi;
        b = bj - side;
        imag_part = true;
        sign = -1.0;
        bval = -constant(a, b).imag();
      } else {
        a = bi - side;
        b = bj - side;
        bval = constant(a, b).real();
      }
      const int row = p.add_row(sc * bval);
      for (const auto& t : terms) add_entry_coeffs(row, t, a, b, imag_part, -sc * sign);
    }
  p.add_cone(conic::ConeType::Psd, conic::svec_size(2 * side), 2 * side);
}

// Normalizes each cone block (and each separable row) to unit max magnitude.
// Uniform positive scaling of a cone block preserves the feasible set while
// leveling the mixed physical units before the solver's own equilibration.
void scale_blocks(conic::ConicProblem& p) {
  const int m = p.n_rows();
  VecD row_max = VecD::Zero(m);
  for (const auto& t : p.entries)
    row_max(t.row()) = std::max(row_max(t.row()), std::abs(t.value()));
  for (int i = 0; i < m; ++i) row_max(i) = std::max(row_max(i), std::abs(p.b[i]));

  VecD scale = VecD::Ones(m);
  int at = 0;
  for (const auto& k : p.cones) {
    if (k.type == conic::ConeType::NonNeg || k.type == conic::ConeType::Zero) {
      for (int i = 0; i < k.size; ++i) {
        const double v = row_max(at + i);
        scale(at + i) = (v > 1e-12) ? 1.0 / v : 1.0;
      }
    } else {
      const double v = row_max.segment(at, k.size).maxCoeff();
      scale.segment(at, k.size).setConstant((v > 1e-12) ? 1.0 / v : 1.0);
    }
    at += k.size;
  }
  for (auto& t : p.entries)
    t = Eigen::Triplet<double>(t.row(), t.col(), t.value() * scale(t.row()));
  for (int i = 0; i < m; ++i) p.b[i] *= scale(i);
}

struct CommonVars {
  std::vector<HermitianVarMap> rn;
  std::vector<std::vector<HermitianVarMap>> rnk;
  bool with_users = false;
};

CommonVars add_covariance_variables(conic::ConicProblem& p, const Scenario& sc,
                                    const BuildOptions& opt) {
  CommonVars v;
  const int nt = sc.geom.n_tx();
  const int nsub = sc.geom.n_subcarriers;
  v.with_users = !opt.radar_only && sc.n_users() > 0;
  for (int n = 0; n < nsub; ++n) {
    const int off = p.add_variables("R_" + std::to_string(n), nt * nt);
    v.rn.push_back({off, nt});
  }
  if (v.with_users) {
    v.rnk.resize(nsub);
    for (int n = 0; n < nsub; ++n)
      for (int k = 0; k < sc.n_users(); ++k) {
        const int off =
            p.add_variables("R_" + std::to_string(n) + "_" + std::to_string(k), nt * nt);
        v.rnk[n].push_back({off, nt});
      }
  }
  return v;
}

// Power and per-user SINR rows (one nonnegative cone).
void add_power_and_sinr(conic::ConicProblem& p, const Scenario& sc, const CommonVars& v) {
  const int nt = sc.geom.n_tx();
  int rows = 0;
  {
    const int row = p.add_row(sc.total_power);
    for (const auto& r : v.rn)
      for (int i = 0; i < nt; ++i) p.add_entry(row, r.diag_index(i), 1.0);
    ++rows;
  }
  if (v.with_users) {
    for (int n = 0; n < sc.geom.n_subcarriers; ++n)
      for (int k = 0; k < sc.n_users(); ++k) {
        const double gamma = sc.sinr_target(n, k);
        const MatC hh = sc.channels[n][k] * sc.channels[n][k].adjoint();
        const int row = p.add_row(-sc.noise_comm);
        v.rnk[n][k].add_re_trace(p, row, hh, -(1.0 + 1.0 / gamma));
        v.rn[n].add_re_trace(p, row, hh, 1.0);
        ++rows;
      }
  }
  p.add_cone(conic::ConeType::NonNeg, rows);
}

// |sum_n Tr{R_n M_n}| <= rhs as a 3-dimensional second-order cone.
void add_modulus_constraint(conic::ConicProblem& p, const std::vector<HermitianVarMap>& rn,
                            const std::vector<MatC>& m_n, double rhs) {
  const int r0 = p.add_row(rhs);
  (void)r0;
  const int r_re = p.add_row(0.0);
  const int r_im = p.add_row(0.0);
  for (std::size_t n = 0; n < rn.size(); ++n) {
    rn[n].add_re_trace(p, r_re, m_n[n], -1.0);
    rn[n].add_re_trace(p, r_im, kJ * m_n[n], 1.0);  // Im Tr{RC} = -Re Tr{R (jC)}
  }
  p.add_cone(conic::ConeType::Soc, 3);
}

void add_psd_hermitian_var(conic::ConicProblem& p, const HermitianVarMap& v) {
  add_embedded_psd_block(p, v.n, {{&v, 1.0, 0}}, MatC::Zero(v.n, v.n));
}

void add_dominance_blocks(conic::ConicProblem& p, const Scenario& sc, const CommonVars& v) {
  if (!v.with_users) return;
  const int nt = sc.geom.n_tx();
  for (int n = 0; n < sc.geom.n_subcarriers; ++n) {
    std::vector<HermTerm> terms{{&v.rn[n], 1.0, 0}};
    for (int k = 0; k < sc.n_users(); ++k) terms.push_back({&v.rnk[n][k], -1.0, 0});
    add_embedded_psd_block(p, nt, terms, MatC::Zero(nt, nt));
  }
}

std::vector<MatC> ambiguity_coefficients(const Scenario& sc, const ScattererGrid& grid,
                                         double d_ref, double d_hat, int layer) {
  std::vector<MatC> m_n(sc.geom.n_subcarriers);
  const int nt = sc.geom.n_tx();
  for (int n = 0; n < sc.geom.n_subcarriers; ++n) {
    MatC sum = MatC::Zero(nt, nt);
    for (int t = 0; t < grid.total(); ++t) {
      if (layer >= 0 && t % grid.t_d != layer) continue;
      const VecC a = model::steering_vector(model::Side::Transmit, grid.pts[t].theta,
                                            grid.pts[t].phi, n, sc.geom);
      sum += a * a.adjoint();
    }
    const double psi =
        4.0 * kPi * n * sc.geom.subcarrier_spacing_hz * (d_ref - d_hat) / kSpeedOfLight;
    m_n[n] = std::polar(1.0, -psi) * sum;
  }
  return m_n;
}

}  // namespace

BuiltProblem build_psm_problem(const Scenario& sc, const ScattererGrid& grid,
                               const SidelobeSet& sidelobes, const WeightMatrix& weights,
                               const BuildOptions& opt) {
  const auto active = grid.active_mask();
  std::vector<int> act;
  for (int i = 0; i < 6; ++i)
    if (active[i]) act.push_back(i);
  const int m = static_cast<int>(act.size());

  const auto coef =
      fisher::psm_fim_coefficients(grid, sc.prior, sc.geom, sc.noise_sensing);

  // Balance the Schur block: [[S F S, S Lambda^1/2], [., Q']] has optimal
  // Tr{Q'} equal to the weighted CRB for any diagonal S > 0 (diagonal
  // factors commute through the Schur complement). S normalizes each FIM
  // coordinate to unit magnitude at a uniform-power reference covariance so
  // the PSD slack is not spread across many decades.
  VecD lam(m), s(m), d(m);
  {
    std::vector<MatC> uniform(sc.geom.n_subcarriers,
                              sc.total_power / (sc.geom.n_subcarriers * sc.geom.n_tx()) *
                                  MatC::Identity(sc.geom.n_tx(), sc.geom.n_tx()));
    const MatD f_ref = coef.evaluate(uniform);
    for (int i = 0; i < m; ++i) {
      lam(i) = std::sqrt(weights.lambda_sq(act[i]));
      s(i) = 1.0 / std::sqrt(std::max(f_ref(act[i], act[i]), 1e-300));
      d(i) = s(i) * lam(i);
    }
  }

  BuiltProblem bp;
  bp.model = Model::Psm;
  conic::ConicProblem& p = bp.problem;

  SymVarMap q{p.add_variables("Q", m * (m + 1) / 2), m};
  for (int i = 0; i < m; ++i) p.set_objective(q.index(i, i), 1.0 / f0);

  CommonVars vars = add_covariance_variables(p, sc, opt);
  bp.rn = vars.rn;
  bp.rnk = vars.rnk;
  bp.n_users = vars.with_users ? sc.n_users() : 0;

  add_power_and_sinr(p, sc, vars);

  if (!opt.no_sidelobes)
    for (double d_hat : sidelobes.ranges) {
      const auto m_n = ambiguity_coefficients(sc, grid, sidelobes.d_ref, d_hat, -1);
      const double rhs =
          sc.geom.n_tx() * sc.total_power * grid.total() * std::sqrt(sidelobes.epsilon);
      add_modulus_constraint(p, vars.rn, m_n, rhs);
    }

  // Schur block [[S F S / f0, D], [D, Q']] >= 0, real symmetric of side 2m.
  for (int bj = 0; bj < 2 * m; ++bj)
    for (int bi = 0; bi <= bj; ++bi) {
      const double sc2 = (bi == bj) ? 1.0 : kSqrt2;
      if (bi < m && bj < m) {
        const int row = p.add_row(0.0);
        const int i6 = act[bi], j6 = act[bj];
        const int pk = fisher::PsmFimCoefficients::pack(std::min(i6, j6), std::max(i6, j6));
        for (int n = 0; n < sc.geom.n_subcarriers; ++n)
          vars.rn[n].add_re_trace(p, row, coef.c[n][pk], -sc2 * s(bi) * s(bj) / f0);
      } else if (bi < m) {
        const double val = (bj - m == bi) ? d(bi) : 0.0;
        p.add_row(sc2 * val);
      } else {
        const int row = p.add_row(0.0);
        p.add_entry(row, q.index(bi - m, bj - m), -sc2);
      }
    }
  p.add_cone(conic::ConeType::Psd, conic::svec_size(2 * m), 2 * m);

  for (const auto& r : vars.rn) add_psd_hermitian_var(p, r);
  for (const auto& per_n : vars.rnk)
    for (const auto& r : per_n) add_psd_hermitian_var(p, r);
  add_dominance_blocks(p, sc, vars);

  scale_blocks(p);
  return bp;
}

BuiltProblem build_ucm_problem(const Scenario& sc, const BuildOptions& opt) {
  const int nt = sc.geom.n_tx();
  BuiltProblem bp;
  bp.model = Model::Ucm;
  conic::ConicProblem& p = bp.problem;

  // Typical covariance magnitude; balances R against Q' = g R^-1 inside the
  // epigraph blocks, with the true objective recovered through the cost.
  const double g = sc.total_power / (sc.geom.n_subcarriers * nt);

  std::vector<HermitianVarMap> qn;
  for (int n = 0; n < sc.geom.n_subcarriers; ++n) {
    const int off = p.add_variables("Q_" + std::to_string(n), nt * nt);
    qn.push_back({off, nt});
    for (int i = 0; i < nt; ++i) p.set_objective(qn[n].diag_index(i), 1.0 / g);
  }

  CommonVars vars = add_covariance_variables(p, sc, opt);
  bp.rn = vars.rn;
  bp.rnk = vars.rnk;
  bp.n_users = vars.with_users ? sc.n_users() : 0;

  add_power_and_sinr(p, sc, vars);

  // Epigraph Schur blocks [[R_n / g, I], [I, Q'_n]] >= 0; no ambiguity
  // constraints exist in this model.
  for (int n = 0; n < sc.geom.n_subcarriers; ++n) {
    MatC constant = MatC::Zero(2 * nt, 2 * nt);
    constant.topRightCorner(nt, nt) = MatC::Identity(nt, nt);
    constant.bottomLeftCorner(nt, nt) = MatC::Identity(nt, nt);
    add_embedded_psd_block(p, 2 * nt, {{&vars.rn[n], 1.0 / g, 0}, {&qn[n], 1.0, nt}}, constant);
  }

  for (const auto& r : vars.rn) add_psd_hermitian_var(p, r);
  for (const auto& per_n : vars.rnk)
    for (const auto& r : per_n) add_psd_hermitian_var(p, r);
  add_dominance_blocks(p, sc, vars);

  scale_blocks(p);
  return bp;
}

BuiltProblem build_dsm_problem(const Scenario& sc, const ScattererGrid& grid,
                               const std::vector<SidelobeSet>& layer_sidelobes,
                               const WeightMatrix& weights, const BuildOptions& opt) {
  const int t = grid.total();
  const int m3 = 3 * t;
  const auto coef =
      fisher::dsm_fim_coefficients(grid.pts, sc.prior, sc.geom, sc.noise_sensing);

  // Per-coordinate weights mirror the PSM center weights per scatterer.
  VecD lam(m3), s(m3), d(m3);
  const double axis_lam[3] = {std::sqrt(weights.lambda_sq(0)), std::sqrt(weights.lambda_sq(2)),
                              std::sqrt(weights.lambda_sq(4))};
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < t; ++i) {
      lam(a * t + i) = axis_lam[a];
      s(a * t + i) = (axis_lam[a] > 0) ? 1.0 / axis_lam[a] : 1.0;
      d(a * t + i) = s(a * t + i) * axis_lam[a];
    }
  double f0 = 0.0;
  {
    std::vector<MatC> uniform(sc.geom.n_subcarriers,
                              sc.total_power / (sc.geom.n_subcarriers * sc.geom.n_tx()) *
                                  MatC::Identity(sc.geom.n_tx(), sc.geom.n_tx()));
    const MatD f_ref = coef.evaluate(uniform);
    for (int i = 0; i < m3; ++i) f0 += s(i) * s(i) * f_ref(i, i);
    f0 = std::max(f0 / m3, 1e-300);
  }

  BuiltProblem bp;
  bp.model = Model::Dsm;
  conic::ConicProblem& p = bp.problem;

  SymVarMap q{p.add_variables("Q", m3 * (m3 + 1) / 2), m3};
  for (int i = 0; i < m3; ++i) p.set_objective(q.index(i, i), 1.0 / f0);

  CommonVars vars = add_covariance_variables(p, sc, opt);
  bp.rn = vars.rn;
  bp.rnk = vars.rnk;
  bp.n_users = vars.with_users ? sc.n_users() : 0;

  add_power_and_sinr(p, sc, vars);

  if (!opt.no_sidelobes)
    for (const auto& set : layer_sidelobes)
      for (double d_hat : set.ranges) {
        const auto m_n = ambiguity_coefficients(sc, grid, set.d_ref, d_hat, set.layer);
        const double rhs = sc.geom.n_tx() * sc.total_power * grid.t_theta * grid.t_phi *
                           std::sqrt(set.epsilon);
        add_modulus_constraint(p, vars.rn, m_n, rhs);
      }

  // Schur block of side 2*3T; off-scatterer F entries are structurally zero.
  for (int bj = 0; bj < 2 * m3; ++bj)
    for (int bi = 0; bi <= bj; ++bi) {
      const double sc2 = (bi == bj) ? 1.0 : kSqrt2;
      if (bi < m3 && bj < m3) {
        const int ti = bi % t, tj = bj % t;
        if (ti != tj) {
          p.add_row(0.0);
          continue;
        }
        const int row = p.add_row(0.0);
        const int a = bi / t, b2 = bj / t;
        const int pk = fisher::DsmFimCoefficients::pack3(std::min(a, b2), std::max(a, b2));
        for (int n = 0; n < sc.geom.n_subcarriers; ++n)
          vars.rn[n].add_re_trace(p, row, coef.c[n][ti][pk], -sc2 * s(bi) * s(bj) / f0);
      } else if (bi < m3) {
        const double val = (bj - m3 == bi) ? d(bi) : 0.0;
        p.add_row(sc2 * val);
      } else {
        const int row = p.add_row(0.0);
        p.add_entry(row, q.index(bi - m3, bj - m3), -sc2);
      }
    }
  p.add_cone(conic::ConeType::Psd, conic::svec_size(2 * m3), 2 * m3);

  for (const auto& r : vars.rn) add_psd_hermitian_var(p, r);
  for (const auto& per_n : vars.rnk)
    for (const auto& r : per_n) add_psd_hermitian_var(p, r);
  add_dominance_blocks(p, sc, vars);

  scale_blocks(p);
  return bp;
}

CovarianceSet extract_covariances(const BuiltProblem& bp, const VecD& x) {
  CovarianceSet cov;
  for (const auto& r : bp.rn) cov.rn.push_back(r.extract(x));
  for (const auto& per_n : bp.rnk) {
    std::vector<MatC> row;
    for (const auto& r : per_n) row.push_back(r.extract(x));
    cov.rnk.push_back(std::move(row));
  }
  return cov;
}

BeamformerSolution recover_solution(const CovarianceSet& raw, const Scenario& sc) {
  BeamformerSolution sol;
  sol.cov.rn = raw.rn;
  const int nsub = sc.geom.n_subcarriers;
  const int k_users = raw.rnk.empty() ? 0 : static_cast<int>(raw.rnk[0].size());
  sol.w.resize(nsub);
  sol.w_sensing.resize(nsub);
  sol.cov.rnk.resize(raw.rnk.size());

  for (int n = 0; n < nsub; ++n) {
    MatC residual = raw.rn[n];
    for (int k = 0; k < k_users; ++k) {
      const VecC& h = sc.channels[n][k];
      const MatC& rk = raw.rnk[n][k];
      const double denom = (h.adjoint() * rk * h)(0).real();
      const double scale = h.squaredNorm() * std::max(rk.trace().real(), 0.0);
      if (!(denom > 1e-12 * std::max(scale, 1e-300)))
        throw std::runtime_error("recover_solution: degenerate user at (n=" + std::to_string(n) +
                                 ", k=" + std::to_string(k) + "): h^H R h vanishes");
      VecC w = rk * h / std::sqrt(denom);
      sol.w[n].push_back(w);
      sol.cov.rnk[n].push_back(w * w.adjoint());
      residual -= sol.cov.rnk[n].back();
    }
    // Sensing factor from the clamped eigendecomposition of the residual.
    Eigen::SelfAdjointEigenSolver<MatC> es(0.5 * (residual + residual.adjoint()));
    const VecD lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i)
      if (lam(i) < 0) sol.clamp_magnitude = std::max(sol.clamp_magnitude, -lam(i));
    VecD clamped = lam.cwiseMax(0.0);
    sol.w_sensing[n] = es.eigenvectors() * clamped.cwiseSqrt().asDiagonal();
  }
  return sol;
}

namespace {

double layer_sidelobe_ratio(const BeamformerSolution& sol, const Scenario& sc,
                            const ScattererGrid& grid, const SidelobeSet& set, double d_hat,
                            Model model) {
  if (model == Model::Dsm && set.layer >= 0)
    return ambiguity::normalized_sidelobe_dsm(sol.cov, grid, sc.geom, sc.total_power, set.layer,
                                              d_hat);
  return ambiguity::normalized_sidelobe(sol.cov, grid, sc.geom, sc.total_power, set.d_ref, d_hat);
}

}  // namespace

ConstraintReport verify_solution(const BeamformerSolution& sol, const Scenario& sc,
                                 const ScattererGrid& grid,
                                 const std::vector<SidelobeSet>& sidelobes,
                                 const WeightMatrix& weights, Model model) {
  ConstraintReport rep;
  const int nsub = sc.geom.n_subcarriers;
  const int k_users = sol.w.empty() ? 0 : static_cast<int>(sol.w[0].size());

  rep.power_budget = sc.total_power;
  rep.total_power = 0.0;
  for (int n = 0; n < nsub; ++n) {
    for (int k = 0; k < k_users; ++k) rep.total_power += sol.w[n][k].squaredNorm();
    rep.total_power += sol.w_sensing[n].squaredNorm();
  }
  rep.power_ok = rep.total_power <= sc.total_power * (1.0 + 1e-6);

  if (k_users > 0) {
    rep.sinr_db.resize(nsub, k_users);
    rep.sinr_target_db.resize(nsub, k_users);
    rep.min_sinr_margin_db = std::numeric_limits<double>::infinity();
    for (int n = 0; n < nsub; ++n)
      for (int k = 0; k < k_users; ++k) {
        const VecC& h = sc.channels[n][k];
        const double sig = std::norm((h.adjoint() * sol.w[n][k])(0));
        double interf = sc.noise_comm;
        for (int j = 0; j < k_users; ++j)
          if (j != k) interf += std::norm((h.adjoint() * sol.w[n][j])(0));
        interf += (sol.w_sensing[n].adjoint() * h).squaredNorm();
        const double sinr = sig / interf;
        rep.sinr_db(n, k) = linear_to_db(sinr);
        rep.sinr_target_db(n, k) = linear_to_db(sc.sinr_target(n, k));
        rep.min_sinr_margin_db =
            std::min(rep.min_sinr_margin_db, rep.sinr_db(n, k) - rep.sinr_target_db(n, k));
      }
    rep.sinr_ok = rep.min_sinr_margin_db >= -0.01;
  }

  for (const auto& set : sidelobes)
    for (double d_hat : set.ranges) {
      SidelobePointReport pt;
      pt.range = d_hat;
      pt.layer = set.layer;
      pt.epsilon = set.epsilon;
      pt.ratio = layer_sidelobe_ratio(sol, sc, grid, set, d_hat, model);
      if (pt.ratio > set.epsilon * (1.0 + 1e-3)) rep.sidelobe_ok = false;
      rep.sidelobes.push_back(pt);
    }

  switch (model) {
    case Model::Psm: {
      fisher::FimBlocks f =
          fisher::psm_geometric_fim(sol.cov, grid, sc.prior, sc.geom, sc.noise_sensing);
      rep.weighted_crb = fisher::weighted_crb(f, weights);
      break;
    }
    case Model::Dsm: {
      fisher::DsmFim f =
          fisher::dsm_fim(sol.cov, grid.pts, sc.prior, sc.geom, sc.noise_sensing);
      if (f.singular) {
        rep.weighted_crb = fisher::kInfiniteBound;
      } else {
        const int t = f.t_count;
        VecD lam_sq(3 * t);
        for (int a = 0; a < 3; ++a)
          lam_sq.segment(a * t, t).setConstant(weights.lambda_sq(2 * a));
        rep.weighted_crb = (f.f.inverse() * lam_sq.asDiagonal()).trace();
      }
      break;
    }
    case Model::Ucm: {
      double total = 0.0;
      bool ok = true;
      for (const auto& r : sol.cov.rn) {
        Eigen::FullPivLU<MatC> lu(r);
        if (!lu.isInvertible()) {
          ok = false;
          break;
        }
        total += lu.inverse().trace().real();
      }
      rep.weighted_crb = ok ? total : fisher::kInfiniteBound;
      break;
    }
  }
  return rep;
}

conic::SolverSettings default_solver_settings() {
  conic::SolverSettings s;
  s.tol = 5e-8;
  s.tol_abs = 1e-10;
  s.max_iter = 50000;
  return s;
}

WeightMatrix default_weights(const Scenario& sc) {
  return WeightMatrix::from_resolutions(model::resolution_cells(sc.geom, sc.target.phi0));
}

namespace {

// Minimum-power SINR-only subproblem, used as the infeasibility diagnostic.
double min_power_for_sinr(const Scenario& sc) {
  if (sc.n_users() == 0) return 0.0;
  conic::ConicProblem p;
  const int nt = sc.geom.n_tx();
  std::vector<HermitianVarMap> rnk;
  for (int n = 0; n < sc.geom.n_subcarriers; ++n)
    for (int k = 0; k < sc.n_users(); ++k) {
      const int off = p.add_variables("", nt * nt);
      rnk.push_back({off, nt});
      for (int i = 0; i < nt; ++i) p.set_objective(off + i, 1.0);
    }
  int rows = 0;
  for (int n = 0; n < sc.geom.n_subcarriers; ++n)
    for (int k = 0; k < sc.n_users(); ++k) {
      const double gamma = sc.sinr_target(n, k);
      const MatC hh = sc.channels[n][k] * sc.channels[n][k].adjoint();
      const int row = p.add_row(-sc.noise_comm);
      // Worst case: all other covariances zero, only own interference-free
      // link: (1 + 1/gamma) h'Rk h - h'Rk h >= sigma  <=>  h'Rk h >= gamma sigma.
      rnk[n * sc.n_users() + k].add_re_trace(p, row, hh, -1.0 / gamma);
      ++rows;
    }
  p.add_cone(conic::ConeType::NonNeg, rows);
  for (const auto& r : rnk) add_psd_hermitian_var(p, r);
  scale_blocks(p);
  conic::ConicSolution sol = conic::solve(p, default_solver_settings());
  return (sol.status == conic::SolveStatus::Optimal) ? sol.objective
                                                     : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

DesignResult design_beamformer(const Scenario& sc, Model model, const BuildOptions& opt,
                               const conic::SolverSettings& settings) {
  DesignResult out;
  const ScattererGrid grid = sc.make_grid();
  out.weights = default_weights(sc);
  const auto res = model::resolution_cells(sc.geom, sc.target.phi0);

  if (model == Model::Dsm)
    out.sidelobes = ambiguity::build_sidelobe_sets_dsm(grid, res[2], sc.sidelobe);
  else if (model == Model::Psm)
    out.sidelobes = {ambiguity::build_sidelobe_set(sc.target.d0, res[2], sc.sidelobe)};
  if (opt.no_sidelobes || model == Model::Ucm) out.sidelobes.clear();

  double t0 = now_seconds();
  BuiltProblem bp;
  switch (model) {
    case Model::Psm:
      bp = build_psm_problem(sc, grid,
                             out.sidelobes.empty() ? SidelobeSet{} : out.sidelobes[0],
                             out.weights, opt);
      break;
    case Model::Ucm:
      bp = build_ucm_problem(sc, opt);
      break;
    case Model::Dsm:
      bp = build_dsm_problem(sc, grid, out.sidelobes, out.weights, opt);
      break;
  }
  out.build_seconds = now_seconds() - t0;

  t0 = now_seconds();
  conic::ConicSolution csol = conic::solve(bp.problem, settings);
  out.solve_seconds = now_seconds() - t0;

  if (csol.status == conic::SolveStatus::Infeasible) {
    const double need = min_power_for_sinr(sc);
    throw std::runtime_error(
        "beamforming problem infeasible; the SINR-only subproblem needs at least " +
        format_double(need) + " W against a budget of " + format_double(sc.total_power) + " W");
  }
  if (csol.status == conic::SolveStatus::Unbounded)
    throw std::runtime_error("beamforming problem unbounded (malformed scenario)");

  CovarianceSet cov = extract_covariances(bp, csol.x);
  out.solution = recover_solution(cov, sc);
  out.solution.objective = csol.objective;
  out.solution.status = csol.status;
  out.solution.solver_iterations = csol.iterations;
  out.report = verify_solution(out.solution, sc, grid, out.sidelobes, out.weights, model);
  return out;
}

double beampattern_value(const CovarianceSet& cov, const model::ArrayGeometry& geom,
                         double theta, double phi) {
  double total = 0.0;
  for (int n = 0; n < static_cast<int>(cov.rn.size()); ++n) {
    const VecC a = model::steering_vector(model::Side::Transmit, theta, phi, n, geom);
    total += (a.adjoint() * cov.rn[n] * a)(0).real();
  }
  return total;
}

}  // namespace isacxt::beamform
