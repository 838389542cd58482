#pragma once

#include <array>
#include <limits>
#include <vector>

#include "isacxt/common.hpp"
#include "isacxt/model.hpp"

namespace isacxt::fisher {

using model::ArrayGeometry;
using model::GeometricParams;
using model::RcsPrior;
using model::Scatterer;
using model::ScattererGrid;
using model::Side;

/// Diagonal weighting lambda_i^2 for the weighted-trace CRB criterion.
struct WeightMatrix {
  Eigen::Array<double, 6, 1> lambda_sq = Eigen::Array<double, 6, 1>::Ones();

  static WeightMatrix identity() { return {}; }
  /// Default weighting: each parameter weighted by the inverse of its
  /// resolution cell; extents share their axis resolution.
  static WeightMatrix from_resolutions(const std::array<double, 3>& res);
};

enum class FimModel { Psm, DsmMapped, UcmMapped };

/// Geometric FIM in the six-parameter space. Inactive rows/cols are zero.
struct FimBlocks {
  MatD f_gg = MatD::Zero(6, 6);
  FimModel model = FimModel::Psm;
  std::array<bool, 6> active{true, true, true, true, true, true};
  bool singular = false;  // condition flag (never an exception)
};

/// Per-subcarrier transmit covariances plus optional per-user covariances.
struct CovarianceSet {
  std::vector<MatC> rn;
  std::vector<std::vector<MatC>> rnk;

  double total_power() const;
  /// Hermitian/PSD checks with eigenvalue tolerance; throws on violation.
  void validate(double tol = 1e-8) const;
};

struct SteeringDerivs {
  VecC d_theta, d_phi;
};

/// Closed-form steering derivatives with index matrices D_x, D_y.
SteeringDerivs steering_derivatives(Side side, double theta, double phi, int n,
                                    const ArrayGeometry& geom);

/// Derivatives of V_{t,n} w.r.t. the scatterer's own (theta, phi, d).
std::array<MatC, 3> scatterer_derivatives(double theta, double phi, double d, int n,
                                          const ArrayGeometry& geom);

/// Derivatives of V_{t,n} w.r.t. the six geometric parameters; extent
/// derivatives are offset-scaled center derivatives.
std::array<MatC, 6> psm_v_derivatives(const ScattererGrid& grid, int t, int n,
                                      const ArrayGeometry& geom);

/// Precomputed C_{i,j,n} matrices; the FIM is affine in {R_n} through them.
struct PsmFimCoefficients {
  int n_subcarriers = 0;
  int n_tx = 0;
  std::array<bool, 6> active{};
  // c[n][pack(i,j)] for i <= j, each N_t x N_t.
  std::vector<std::array<MatC, 21>> c;

  static int pack(int i, int j) { return i * 6 - i * (i + 1) / 2 + j; }  // i <= j
  MatD evaluate(const std::vector<MatC>& rn) const;
};

PsmFimCoefficients psm_fim_coefficients(const ScattererGrid& grid, const RcsPrior& prior,
                                        const ArrayGeometry& geom, double sigma_s2);

FimBlocks psm_geometric_fim(const CovarianceSet& cov, const ScattererGrid& grid,
                            const RcsPrior& prior, const ArrayGeometry& geom, double sigma_s2);

/// Tr{Lambda F^-1} over the active parameters; infinite sentinel when the
/// reduced FIM is singular.
double weighted_crb(const FimBlocks& fim, const WeightMatrix& w);

/// CRB matrix on the active set; inactive diagonal entries are NaN ("n/a").
MatD crb_matrix(const FimBlocks& fim, bool* singular = nullptr);

/// DSM geometric FIM, 3T x 3T, ordered [theta_1..theta_T, phi_1..phi_T,
/// d_1..d_T]. Entries coupling different scatterers are exactly zero.
struct DsmFim {
  int t_count = 0;
  MatD f;
  bool singular = false;
};

/// C^DSM coefficient matrices: per (n, t) the 3x3-sym packed block over
/// the scatterer's own coordinates.
struct DsmFimCoefficients {
  int n_subcarriers = 0;
  int t_count = 0;
  int n_tx = 0;
  // c[n][t][pack3(a,b)] with a <= b over (theta, phi, d).
  std::vector<std::vector<std::array<MatC, 6>>> c;

  static int pack3(int a, int b) { return a * 3 - a * (a + 1) / 2 + b; }  // a <= b
  MatD evaluate(const std::vector<MatC>& rn) const;
};

DsmFimCoefficients dsm_fim_coefficients(const std::vector<Scatterer>& coords,
                                        const RcsPrior& prior, const ArrayGeometry& geom,
                                        double sigma_s2);

DsmFim dsm_fim(const CovarianceSet& cov, const std::vector<Scatterer>& coords,
               const RcsPrior& prior, const ArrayGeometry& geom, double sigma_s2);

/// J_geo (3T x 6): the sparse Jacobian of scatterer coordinates w.r.t. the
/// geometric parameters; identical to the structure matrix U used by the
/// estimators. Columns of degenerate extents are all-zero.
MatD jacobian_dsm(const ScattererGrid& grid);

/// UCM Fisher information in factored form; the full N*Nt*Nr square matrix
/// is never materialized.
class UcmFim {
 public:
  UcmFim(const CovarianceSet& cov, const ArrayGeometry& geom, double sigma_s2);

  /// (F_G v) restricted to subcarrier block n, acting on matrix-shaped
  /// input: V -> (L / sigma_s^2) * V * R_n^T.
  MatC apply_block(const MatC& v, int n) const;
  /// Inverse action; throws if R_n was rank deficient.
  MatC inverse_apply_block(const MatC& v, int n) const;
  /// Same action scaled by sigma_s^2 (finite for sigma_s^2 = 0): V -> L V R_n^T.
  MatC apply_block_scaled(const MatC& v, int n) const;

  /// Tr{C_G} = (sigma_s^2 N_r / L) sum_n Tr{R_n^-1}.
  double crb_trace() const;
  bool rank_deficient() const { return rank_deficient_; }
  int n_subcarriers() const { return static_cast<int>(rn_t_.size()); }

 private:
  std::vector<MatC> rn_t_;      // R_n^T
  std::vector<MatC> rn_t_inv_;  // (R_n^T)^-1 when invertible
  double scale_ = 1.0;          // L / sigma_s^2
  double l_ = 1.0;
  double sigma_s2_ = 1.0;
  int n_rx_ = 1;
  bool rank_deficient_ = false;
};

/// Full (6 + 2T)-dimensional UCM FIM mapped into the PSM parameter space,
/// E_alpha{2 Re{J_G^H F_G J_G}} (+ prior on the RCS block when requested).
/// Cross blocks vanish in expectation so the result is block diagonal.
MatD ucm_mapped_full_fim(const CovarianceSet& cov, const ScattererGrid& grid,
                         const RcsPrior& prior, const ArrayGeometry& geom, double sigma_s2,
                         bool include_prior = true);

struct MappedCrbs {
  FimBlocks psm;
  FimBlocks dsm_mapped;
  FimBlocks ucm_mapped;
};

/// The three geometric FIMs in the common six-parameter space, evaluated for
/// one covariance set. Expectation over the RCS prior is applied
/// analytically (cross blocks vanish).
MappedCrbs mapped_geometric_fims(const CovarianceSet& cov, const ScattererGrid& grid,
                                 const RcsPrior& prior, const ArrayGeometry& geom,
                                 double sigma_s2);

inline constexpr double kInfiniteBound = std::numeric_limits<double>::infinity();

}  // namespace isacxt::fisher
