#include "isacxt/conic.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace isacxt::conic {

int ConicProblem::add_variables(const std::string& name, int count) {
  const int offset = n_vars;
  n_vars += count;
  c.resize(n_vars, 0.0);
  if (!name.empty()) names[name] = {offset, count};
  return offset;
}

int ConicProblem::add_row(double rhs) {
  b.push_back(rhs);
  return static_cast<int>(b.size()) - 1;
}

void ConicProblem::add_entry(int row, int col, double value) {
  if (value == 0.0) return;
  entries.emplace_back(row, col, value);
}

void ConicProblem::add_cone(ConeType type, int size, int psd_side) {
  if (type == ConeType::Psd && size != svec_size(psd_side))
    throw std::invalid_argument("PSD cone size must equal side*(side+1)/2");
  if (size <= 0) throw std::invalid_argument("cone size must be positive");
  cones.push_back({type, size, psd_side});
}

void ConicProblem::validate() const {
  int cone_dim = 0;
  for (const auto& k : cones) {
    if (k.type == ConeType::Soc && k.size < 1)
      throw std::invalid_argument("second-order cone needs dimension >= 1");
    cone_dim += k.size;
  }
  if (cone_dim != n_rows())
    throw std::invalid_argument("cone dimensions do not sum to the row count");
  if (static_cast<int>(c.size()) != n_vars) throw std::invalid_argument("objective size mismatch");
  for (double v : c)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite objective");
  for (double v : b)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite right-hand side");
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= n_rows() || t.col() < 0 || t.col() >= n_vars)
      throw std::invalid_argument("matrix entry out of range");
    if (!std::isfinite(t.value())) throw std::invalid_argument("non-finite matrix entry");
  }
}

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIter: return "max-iter";
  }
  return "unknown";
}

VecD svec(const MatD& s) {
  const int n = static_cast<int>(s.rows());
  VecD v(svec_size(n));
  const double r2 = std::sqrt(2.0);
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) v(k++) = (i == j) ? s(i, j) : r2 * 0.5 * (s(i, j) + s(j, i));
  return v;
}

MatD smat(const VecD& v) {
  const int m = static_cast<int>(v.size());
  const int n = static_cast<int>((std::sqrt(8.0 * m + 1.0) - 1.0) / 2.0 + 0.5);
  if (svec_size(n) != m) throw std::invalid_argument("svec length is not triangular");
  MatD s(n, n);
  const double inv_r2 = 1.0 / std::sqrt(2.0);
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      const double val = (i == j) ? v(k) : v(k) * inv_r2;
      s(i, j) = val;
      s(j, i) = val;
      ++k;
    }
  return s;
}

MatD hermitian_embed(const MatC& h, double herm_tol) {
  const int n = static_cast<int>(h.rows());
  if (h.cols() != n) throw std::invalid_argument("hermitian_embed: matrix not square");
  if ((h - h.adjoint()).norm() > herm_tol * std::max(1.0, h.norm()))
    throw std::invalid_argument("hermitian_embed: input not Hermitian");
  MatD s(2 * n, 2 * n);
  const MatD re = h.real();
  const MatD im = h.imag();
  s.topLeftCorner(n, n) = re;
  s.bottomRightCorner(n, n) = re;
  s.topRightCorner(n, n) = -im;
  s.bottomLeftCorner(n, n) = im;
  return s;
}

MatC hermitian_extract(const MatD& s) {
  const int two_n = static_cast<int>(s.rows());
  if (s.cols() != two_n || two_n % 2 != 0)
    throw std::invalid_argument("hermitian_extract: bad dimensions");
  const int n = two_n / 2;
  // Average the redundant copies so extract(embed(H)) == H exactly and
  // nearly-structured inputs land on the closest Hermitian matrix.
  MatD re = 0.5 * (s.topLeftCorner(n, n) + s.bottomRightCorner(n, n));
  MatD im = 0.5 * (s.bottomLeftCorner(n, n) - s.topRightCorner(n, n));
  MatC h(n, n);
  h.real() = 0.5 * (re + re.transpose());
  h.imag() = 0.5 * (im - im.transpose());
  return h;
}

void project_onto_cones(VecD& v, const std::vector<ConeBlock>& cones) {
  int at = 0;
  for (const auto& k : cones) {
    auto seg = v.segment(at, k.size);
    switch (k.type) {
      case ConeType::Zero:
        seg.setZero();
        break;
      case ConeType::NonNeg:
        seg = seg.cwiseMax(0.0);
        break;
      case ConeType::Soc: {
        if (k.size == 1) {
          seg(0) = std::max(seg(0), 0.0);
          break;
        }
        const double t = seg(0);
        const double nu = seg.tail(k.size - 1).norm();
        if (nu <= t) break;
        if (nu <= -t) {
          seg.setZero();
          break;
        }
        const double beta = 0.5 * (t + nu);
        seg(0) = beta;
        seg.tail(k.size - 1) *= beta / nu;
        break;
      }
      case ConeType::Psd: {
        MatD s = smat(seg);
        Eigen::SelfAdjointEigenSolver<MatD> es(s);
        VecD lam = es.eigenvalues().cwiseMax(0.0);
        MatD proj = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
        seg = svec(proj);
        break;
      }
    }
    at += k.size;
  }
}

namespace {

// Distance (inf-norm) from v to the dual cone K*. The nonnegative, SOC and
// PSD blocks are self-dual; the dual of a zero block is free.
double dual_cone_distance(const VecD& v, const std::vector<ConeBlock>& cones) {
  VecD proj = v;
  int at = 0;
  for (const auto& k : cones) {
    if (k.type != ConeType::Zero) {
      VecD seg = v.segment(at, k.size);
      std::vector<ConeBlock> one{k};
      project_onto_cones(seg, one);
      proj.segment(at, k.size) = seg;
    }
    at += k.size;
  }
  return (v - proj).lpNorm<Eigen::Infinity>();
}

// Distance from v to the primal cone K.
double cone_distance(const VecD& v, const std::vector<ConeBlock>& cones) {
  VecD proj = v;
  project_onto_cones(proj, cones);
  return (v - proj).lpNorm<Eigen::Infinity>();
}

struct Scaling {
  VecD d_row, d_col;
};

// Ruiz equilibration with uniform factors across SOC/PSD blocks so that the
// scaled slack stays in the same cone.
Scaling equilibrate(Eigen::SparseMatrix<double>& a, VecD& b, VecD& c,
                    const std::vector<ConeBlock>& cones, int iters) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  Scaling sc;
  sc.d_row = VecD::Ones(m);
  sc.d_col = VecD::Ones(n);
  for (int it = 0; it < iters; ++it) {
    VecD rnorm = VecD::Zero(m), cnorm = VecD::Zero(n);
    for (int j = 0; j < a.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator itr(a, j); itr; ++itr) {
        const double av = std::abs(itr.value());
        rnorm(itr.row()) = std::max(rnorm(itr.row()), av);
        cnorm(itr.col()) = std::max(cnorm(itr.col()), av);
      }
    // Uniform row factor per SOC/PSD block.
    int at = 0;
    for (const auto& k : cones) {
      if (k.type == ConeType::Soc || k.type == ConeType::Psd) {
        const double blk = rnorm.segment(at, k.size).maxCoeff();
        rnorm.segment(at, k.size).setConstant(blk);
      }
      at += k.size;
    }
    auto to_factor = [](double v) {
      if (v < 1e-10 || !std::isfinite(v)) return 1.0;
      return 1.0 / std::sqrt(v);
    };
    VecD fr = rnorm.unaryExpr(to_factor);
    VecD fc = cnorm.unaryExpr(to_factor);
    for (int j = 0; j < a.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator itr(a, j); itr; ++itr)
        itr.valueRef() *= fr(itr.row()) * fc(itr.col());
    sc.d_row = sc.d_row.cwiseProduct(fr);
    sc.d_col = sc.d_col.cwiseProduct(fc);
  }
  b = sc.d_row.cwiseProduct(b);
  c = sc.d_col.cwiseProduct(c);
  return sc;
}

}  // namespace

namespace {

// Projection onto the dual cone product (free for Zero blocks, self-dual
// otherwise), in place.
void project_onto_dual_cones(VecD& v, const std::vector<ConeBlock>& cones) {
  int at = 0;
  for (const auto& k : cones) {
    if (k.type != ConeType::Zero) {
      VecD seg = v.segment(at, k.size);
      std::vector<ConeBlock> one{k};
      project_onto_cones(seg, one);
      v.segment(at, k.size) = seg;
    }
    at += k.size;
  }
}

}  // namespace

// Operator splitting on the homogeneous self-dual embedding: alternate a
// projection onto the affine set {(u, v) : v = Q u} with a projection onto
// the cone product, with over-relaxation. One quasi-definite factorization
// serves every iteration.
ConicSolution solve(const ConicProblem& problem, const SolverSettings& settings) {
  problem.validate();
  const int n = problem.n_vars;
  const int m = problem.n_rows();

  Eigen::SparseMatrix<double> a_orig(m, n);
  a_orig.setFromTriplets(problem.entries.begin(), problem.entries.end());
  VecD b_orig = Eigen::Map<const VecD>(problem.b.data(), m);
  VecD c_orig = Eigen::Map<const VecD>(problem.c.data(), n);

  Eigen::SparseMatrix<double> a = a_orig;
  VecD b = b_orig, c = c_orig;
  Scaling sc;
  sc.d_row = VecD::Ones(m);
  sc.d_col = VecD::Ones(n);
  if (settings.scaling && m > 0 && n > 0)
    sc = equilibrate(a, b, c, problem.cones, settings.ruiz_iters);

  // Balance the homogeneous embedding: bring b and c to comparable norms,
  // biased by the primal weight.
  double scale_b = 1.0, scale_c = 1.0;
  if (settings.scaling) {
    const double bn = b.lpNorm<Eigen::Infinity>();
    const double cn = c.lpNorm<Eigen::Infinity>();
    scale_b = (bn > 1e-10) ? 1.0 / bn : 1.0;
    scale_c = (cn > 1e-10) ? 1.0 / cn : 1.0;
  }
  scale_b *= settings.primal_weight;
  b *= scale_b;
  c *= scale_c;

  using Sparse = Eigen::SparseMatrix<double>;
  Eigen::SimplicialLDLT<Sparse> ldlt;
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(a.nonZeros() * 2 + n + m);
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, 1.0);
    for (int j = 0; j < a.outerSize(); ++j)
      for (Sparse::InnerIterator it(a, j); it; ++it) {
        trips.emplace_back(n + it.row(), it.col(), it.value());
        trips.emplace_back(it.col(), n + it.row(), it.value());
      }
    for (int i = 0; i < m; ++i) trips.emplace_back(n + i, n + i, -1.0);
    Sparse kkt(n + m, n + m);
    kkt.setFromTriplets(trips.begin(), trips.end());
    ldlt.compute(kkt);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("conic solve: KKT factorization failed");
  }

  // Cached solve of M (p_x, p_y) = (c, b) with M = [[I, A'], [-A, I]].
  auto m_solve = [&](const VecD& wx, const VecD& wy, VecD& zx, VecD& zy) {
    VecD rhs(n + m);
    rhs.head(n) = wx;
    rhs.tail(m) = -wy;
    VecD sol = ldlt.solve(rhs);
    zx = sol.head(n);
    zy = a * zx + wy;
  };
  VecD p_x, p_y;
  double p_denom = 1.0;
  auto refresh_p = [&]() {
    m_solve(c, b, p_x, p_y);
    p_denom = 1.0 + c.dot(p_x) + b.dot(p_y);
  };
  refresh_p();

  // u = (x, y, tau), v = (0, s-block, kappa).
  VecD ux = VecD::Zero(n), uy = VecD::Zero(m);
  double utau = 1.0;
  VecD vy = VecD::Zero(m);
  double vkappa = 1.0;

  ConicSolution out;
  out.status = SolveStatus::MaxIter;
  int rebalance_count = 0;

  // Candidate extraction to the original data scale.
  auto unscale = [&](VecD& xu, VecD& su, VecD& yu, double tau) {
    xu = sc.d_col.cwiseProduct(ux) / (tau * scale_b);
    su = (vy.cwiseQuotient(sc.d_row)) / (tau * scale_b);
    yu = sc.d_row.cwiseProduct(uy) / (tau * scale_c);
  };

  // One splitting step on the packed state z = (ux, uy, utau, vy, vkappa).
  // Plain iteration; the state stays packed so the rebalancing transform can
  // act on it directly.
  const int zdim = n + 2 * m + 2;
  VecD zx(n), zy(m), tx(n), ty(m), seg(m);
  auto dr_step = [&](const VecD& z, VecD& znext) {
    const auto z_ux = z.segment(0, n);
    const auto z_uy = z.segment(n, m);
    const double z_utau = z(n + m);
    const auto z_vy = z.segment(n + m + 1, m);
    const double z_vkappa = z(zdim - 1);

    // Affine projection: ut = (I + Q)^{-1} (u + v); v_x is always zero.
    m_solve(z_ux, z_uy + z_vy, zx, zy);
    double ttau = (z_utau + z_vkappa + c.dot(zx) + b.dot(zy)) / p_denom;
    tx = zx - ttau * p_x;
    ty = zy - ttau * p_y;

    // Over-relaxation.
    tx = settings.alpha * tx + (1.0 - settings.alpha) * z_ux;
    ty = settings.alpha * ty + (1.0 - settings.alpha) * z_uy;
    ttau = settings.alpha * ttau + (1.0 - settings.alpha) * z_utau;

    // Cone projection of (ut - v); x-block is free.
    seg = ty - z_vy;
    project_onto_dual_cones(seg, problem.cones);
    const double new_tau = std::max(ttau - z_vkappa, 0.0);

    znext.segment(0, n) = tx;
    znext.segment(n, m) = seg;
    znext(n + m) = new_tau;
    znext.segment(n + m + 1, m) = z_vy - ty + seg;  // Moreau complement
    znext(zdim - 1) = z_vkappa - ttau + new_tau;
  };

  VecD z(zdim), t_of_z(zdim);
  z.setZero();
  z(n + m) = utau;
  z(zdim - 1) = vkappa;

  auto unpack = [&](const VecD& zz) {
    ux = zz.segment(0, n);
    uy = zz.segment(n, m);
    utau = zz(n + m);
    vy = zz.segment(n + m + 1, m);
    vkappa = zz(zdim - 1);
  };

  int iter = 0;
  for (; iter < settings.max_iter; ++iter) {
    dr_step(z, t_of_z);
    z = t_of_z;

    unpack(z);

    if ((iter + 1) % settings.check_every != 0) continue;

    if (utau > 1e-12) {
      VecD xu, su, yu;
      unscale(xu, su, yu, utau);
      const VecD ax = a_orig * xu;
      const VecD aty = a_orig.transpose() * yu;
      const double rp = (ax + su - b_orig).lpNorm<Eigen::Infinity>();
      const double rd = (c_orig + aty).lpNorm<Eigen::Infinity>();
      const double pobj = c_orig.dot(xu);
      const double dobj = -b_orig.dot(yu);
      const double gap = std::abs(pobj - dobj);
      const double denom_p = std::max({ax.lpNorm<Eigen::Infinity>(), su.lpNorm<Eigen::Infinity>(),
                                       b_orig.lpNorm<Eigen::Infinity>(), 1.0});
      const double denom_d = std::max(
          {aty.lpNorm<Eigen::Infinity>(), c_orig.lpNorm<Eigen::Infinity>(), 1.0});
      const double denom_g = std::max({std::abs(pobj), std::abs(dobj), 1.0});
      if (rp <= settings.tol_abs + settings.tol * denom_p &&
          rd <= settings.tol_abs + settings.tol * denom_d &&
          gap <= settings.tol_abs + settings.tol * denom_g) {
        out.status = SolveStatus::Optimal;
        ++iter;
        break;
      }

      // Rebalance the embedding when the residuals drift apart. Scaling b by
      // a positive factor keeps the problem identical; the current candidate
      // survives through the matching update of (u, v).
      if (settings.adaptive_weight && rebalance_count < 40) {
        const double ratio = (rp / denom_p) / std::max(rd / denom_d, 1e-16);
        if (ratio > 100.0 || ratio < 0.01) {
          const double factor = std::clamp(std::sqrt(ratio), 1e-2, 1e2);
          b *= factor;
          scale_b *= factor;
          ux *= factor;
          vy *= factor;
          refresh_p();
          ++rebalance_count;
          z.segment(0, n) = ux;
          z.segment(n + m + 1, m) = vy;
        }
      }
    }

    // Infeasibility certificates carried by the homogeneous iterate. The
    // candidate rays are normalized in norm so residual tests cannot be
    // passed by a vanishing direction.
    {
      VecD e = sc.d_row.cwiseProduct(uy);
      const double en = e.lpNorm<Eigen::Infinity>();
      if (en > 1e-12) {
        e /= en;
        const double bty = b_orig.dot(e);
        const double bscale = std::max(b_orig.lpNorm<Eigen::Infinity>(), 1e-12);
        if (bty < -1e-7 * bscale &&
            (a_orig.transpose() * e).lpNorm<Eigen::Infinity>() <=
                settings.infeas_tol * (-bty) / bscale * 1e3 &&
            dual_cone_distance(e, problem.cones) <= settings.infeas_tol * 1e3) {
          out.status = SolveStatus::Infeasible;
          out.message = "primal infeasibility certificate found";
          out.y = e / (-bty);
          ++iter;
          break;
        }
      }
    }
    {
      VecD e = sc.d_col.cwiseProduct(ux);
      const double en = e.lpNorm<Eigen::Infinity>();
      if (en > 1e-12) {
        e /= en;
        const double cte = c_orig.dot(e);
        const double cscale = std::max(c_orig.lpNorm<Eigen::Infinity>(), 1e-12);
        if (cte < -1e-7 * cscale &&
            cone_distance(-(a_orig * e), problem.cones) <=
                settings.infeas_tol * (-cte) / cscale * 1e3) {
          out.status = SolveStatus::Unbounded;
          out.message = "dual infeasibility certificate found";
          out.x = e / (-cte);
          ++iter;
          break;
        }
      }
    }
  }

  if (out.status == SolveStatus::Infeasible || out.status == SolveStatus::Unbounded) {
    out.iterations = iter;
    return out;
  }

  const double tau = std::max(utau, 1e-300);
  VecD xu, su, yu;
  unscale(xu, su, yu, tau);
  out.x = xu;
  out.s = su;
  out.y = yu;
  out.objective = c_orig.dot(xu);
  const VecD ax = a_orig * xu;
  const VecD aty = a_orig.transpose() * yu;
  const double pobj = out.objective;
  const double dobj = -b_orig.dot(yu);
  out.primal_res = (ax + su - b_orig).lpNorm<Eigen::Infinity>() /
                   std::max({ax.lpNorm<Eigen::Infinity>(), su.lpNorm<Eigen::Infinity>(),
                             b_orig.lpNorm<Eigen::Infinity>(), 1.0});
  out.dual_res = (c_orig + aty).lpNorm<Eigen::Infinity>() /
                 std::max({aty.lpNorm<Eigen::Infinity>(), c_orig.lpNorm<Eigen::Infinity>(), 1.0});
  out.gap_res = std::abs(pobj - dobj) / std::max({std::abs(pobj), std::abs(dobj), 1.0});
  out.iterations = iter;
  if (out.status == SolveStatus::MaxIter)
    out.message = "iteration limit reached before every residual met tolerance";
  return out;
}

void dump_problem(const ConicProblem& p, std::ostream& os) {
  os << "isacxt-conic 1\n";
  os << p.n_vars << ' ' << p.n_rows() << ' ' << p.entries.size() << ' ' << p.cones.size() << '\n';
  for (int i = 0; i < p.n_vars; ++i) os << format_double(p.c[i]) << '\n';
  for (int i = 0; i < p.n_rows(); ++i) os << format_double(p.b[i]) << '\n';
  for (const auto& k : p.cones) {
    switch (k.type) {
      case ConeType::Zero: os << "zero " << k.size << '\n'; break;
      case ConeType::NonNeg: os << "nonneg " << k.size << '\n'; break;
      case ConeType::Soc: os << "soc " << k.size << '\n'; break;
      case ConeType::Psd: os << "psd " << k.size << ' ' << k.psd_side << '\n'; break;
    }
  }
  for (const auto& t : p.entries)
    os << t.row() << ' ' << t.col() << ' ' << format_double(t.value()) << '\n';
}

ConicProblem read_problem(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "isacxt-conic" || version != 1)
    throw std::runtime_error("unrecognized conic problem header");
  int n = 0, m = 0;
  std::size_t nnz = 0, ncones = 0;
  is >> n >> m >> nnz >> ncones;
  ConicProblem p;
  p.add_variables("", n);
  for (int i = 0; i < n; ++i) is >> p.c[i];
  p.b.resize(m);
  for (int i = 0; i < m; ++i) is >> p.b[i];
  for (std::size_t i = 0; i < ncones; ++i) {
    std::string kind;
    int size = 0;
    is >> kind >> size;
    if (kind == "zero") p.add_cone(ConeType::Zero, size);
    else if (kind == "nonneg") p.add_cone(ConeType::NonNeg, size);
    else if (kind == "soc") p.add_cone(ConeType::Soc, size);
    else if (kind == "psd") {
      int side = 0;
      is >> side;
      p.add_cone(ConeType::Psd, size, side);
    } else {
      throw std::runtime_error("unknown cone kind: " + kind);
    }
  }
  for (std::size_t i = 0; i < nnz; ++i) {
    int r = 0, c2 = 0;
    double v = 0.0;
    is >> r >> c2 >> v;
    p.add_entry(r, c2, v);
  }
  if (!is) throw std::runtime_error("truncated conic problem stream");
  p.validate();
  return p;
}

}  // namespace isacxt::conic
