#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "isacxt/common.hpp"

namespace isacxt::conic {

enum class ConeType { Zero, NonNeg, Soc, Psd };

struct ConeBlock {
  ConeType type = ConeType::Zero;
  int size = 0;      // rows occupied in the slack vector
  int psd_side = 0;  // matrix side for Psd blocks (size = side*(side+1)/2)
};

/// Cone program over a packed real variable vector:
///   minimize c'x  subject to  A x + s = b,  s in K,
/// with K an ordered product of zero, nonnegative, second-order and PSD
/// cones. PSD slices are symmetric-packed with sqrt(2) off-diagonal scaling
/// so vector inner products equal matrix traces.
struct ConicProblem {
  int n_vars = 0;
  std::vector<double> c;
  std::vector<Eigen::Triplet<double>> entries;
  std::vector<double> b;
  std::vector<ConeBlock> cones;
  std::map<std::string, std::pair<int, int>> names;  // name -> (offset, count)

  int n_rows() const { return static_cast<int>(b.size()); }

  int add_variables(const std::string& name, int count);
  void set_objective(int var, double coef) { c.at(var) = coef; }
  /// Appends one row with right-hand side `rhs`; coefficients via add_entry.
  int add_row(double rhs);
  void add_entry(int row, int col, double value);
  /// Declares the cone of the most recently appended rows.
  void add_cone(ConeType type, int size, int psd_side = 0);

  /// Throws on dimension mismatch or non-finite data.
  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

struct SolverSettings {
  double tol = 1e-7;      // relative tolerance on primal/dual/gap
  double tol_abs = 1e-9;  // absolute floor
  int max_iter = 50000;
  double alpha = 1.5;     // over-relaxation
  int check_every = 25;
  bool scaling = true;
  int ruiz_iters = 10;
  double infeas_tol = 1e-9;
  // Relative weight of primal feasibility in the embedding; rebalanced
  // adaptively from the residual ratio when adaptive_weight is set.
  double primal_weight = 1.0;
  bool adaptive_weight = true;
};

struct ConicSolution {
  VecD x, s, y;
  double objective = 0.0;
  // Residuals recomputed from the returned iterates on the original data.
  double primal_res = 0.0, dual_res = 0.0, gap_res = 0.0;
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
  std::string message;
};

ConicSolution solve(const ConicProblem& problem, const SolverSettings& settings = {});

const char* status_name(SolveStatus s);

/// Projects v onto the cone product in place (used by the solver and as a
/// public testing surface for the projection contracts).
void project_onto_cones(VecD& v, const std::vector<ConeBlock>& cones);

/// Symmetric packing with sqrt(2) off-diagonal scaling: <svec A, svec B> =
/// Tr{A B}. Ordering: for column j, rows i <= j.
VecD svec(const MatD& s);
MatD smat(const VecD& v);
inline int svec_size(int side) { return side * (side + 1) / 2; }

/// Real embedding [[Re H, -Im H], [Im H, Re H]] of a complex Hermitian
/// matrix; it is PSD iff H is, and its trace is 2 Tr{H} (compensated by
/// hermitian_extract).
MatD hermitian_embed(const MatC& h, double herm_tol = 1e-9);
MatC hermitian_extract(const MatD& s);

void dump_problem(const ConicProblem& p, std::ostream& os);
ConicProblem read_problem(std::istream& is);

}  // namespace isacxt::conic
