#pragma once

#include <optional>
#include <string>
#include <vector>

#include "isacxt/ambiguity.hpp"
#include "isacxt/conic.hpp"
#include "isacxt/fisher.hpp"
#include "isacxt/model.hpp"

namespace isacxt::beamform {

using ambiguity::SidelobeSet;
using fisher::CovarianceSet;
using fisher::WeightMatrix;
using model::Scenario;
using model::ScattererGrid;

enum class Model { Psm, Ucm, Dsm };

const char* model_name(Model m);
Model model_from_name(const std::string& name);

/// Packed-real parameterization of one Hermitian matrix variable inside a
/// conic problem: n real diagonal entries followed by (re, im) pairs of the
/// strict upper triangle.
struct HermitianVarMap {
  int offset = 0;
  int n = 0;

  int param_count() const { return n * n; }
  int diag_index(int i) const { return offset + i; }
  int re_index(int i, int j) const;  // i < j
  int im_index(int i, int j) const;  // i < j
  /// Adds scale * d(Re Tr{R C})/dx coefficients of this variable to a row.
  void add_re_trace(conic::ConicProblem& p, int row, const MatC& c, double scale) const;
  MatC extract(const VecD& x) const;
};

/// Real symmetric matrix variable, packed upper triangle.
struct SymVarMap {
  int offset = 0;
  int n = 0;
  int param_count() const { return n * (n + 1) / 2; }
  int index(int i, int j) const;  // i <= j
  MatD extract(const VecD& x) const;
};

/// Conic problem plus the metadata needed to extract covariances.
struct BuiltProblem {
  conic::ConicProblem problem;
  Model model = Model::Psm;
  std::vector<HermitianVarMap> rn;
  std::vector<std::vector<HermitianVarMap>> rnk;
  int n_users = 0;
};

struct BuildOptions {
  bool radar_only = false;   // drop users and SINR constraints
  bool no_sidelobes = false; // drop ambiguity constraints
};

BuiltProblem build_psm_problem(const Scenario& sc, const ScattererGrid& grid,
                               const SidelobeSet& sidelobes, const WeightMatrix& weights,
                               const BuildOptions& opt = {});

BuiltProblem build_ucm_problem(const Scenario& sc, const BuildOptions& opt = {});

BuiltProblem build_dsm_problem(const Scenario& sc, const ScattererGrid& grid,
                               const std::vector<SidelobeSet>& layer_sidelobes,
                               const WeightMatrix& weights, const BuildOptions& opt = {});

/// Covariances read back from a solved problem (Hermitian by construction).
CovarianceSet extract_covariances(const BuiltProblem& bp, const VecD& x);

struct SidelobePointReport {
  double range = 0.0;
  int layer = -1;  // -1 for the PSM global set
  double ratio = 0.0;
  double epsilon = 0.0;
};

struct ConstraintReport {
  Eigen::ArrayXXd sinr_db;         // N x K achieved (empty when radar-only)
  Eigen::ArrayXXd sinr_target_db;  // N x K
  double min_sinr_margin_db = 0.0;
  double total_power = 0.0;
  double power_budget = 0.0;
  std::vector<SidelobePointReport> sidelobes;
  double weighted_crb = 0.0;
  bool sinr_ok = true;
  bool power_ok = true;
  bool sidelobe_ok = true;
};

struct BeamformerSolution {
  CovarianceSet cov;                       // R_n*, R_{n,k}*
  std::vector<std::vector<VecC>> w;        // per (n, k) rank-one beamformers
  std::vector<MatC> w_sensing;             // W_{s,n} factors
  double objective = 0.0;                  // relaxed problem objective
  conic::SolveStatus status = conic::SolveStatus::MaxIter;
  int solver_iterations = 0;
  double clamp_magnitude = 0.0;            // largest eigenvalue clamped during factorization
};

/// Rank-one per-user recovery plus the sensing factor, from the relaxed
/// covariances. Throws a degenerate-user error naming (n, k) when
/// h^H R h vanishes.
BeamformerSolution recover_solution(const CovarianceSet& raw, const Scenario& sc);

/// Evaluates per-user SINR (all other columns treated as interference),
/// total power, sidelobe ratios at every constrained point, and the weighted
/// CRB. Failures are reported, never thrown.
ConstraintReport verify_solution(const BeamformerSolution& sol, const Scenario& sc,
                                 const ScattererGrid& grid,
                                 const std::vector<SidelobeSet>& sidelobes,
                                 const WeightMatrix& weights, Model model);

struct DesignResult {
  BeamformerSolution solution;
  ConstraintReport report;
  double build_seconds = 0.0;
  double solve_seconds = 0.0;
  std::vector<SidelobeSet> sidelobes;
  WeightMatrix weights;
};

conic::SolverSettings default_solver_settings();

/// Builds, solves and verifies the model's design in one call. On solver
/// infeasibility the thrown diagnostic includes the minimum power needed by
/// the SINR-only subproblem.
DesignResult design_beamformer(const Scenario& sc, Model model, const BuildOptions& opt = {},
                               const conic::SolverSettings& settings = default_solver_settings());

/// Default PSM weighting from the scenario resolutions; the DSM weighting
/// mirrors it per scatterer inside the DSM builder.
WeightMatrix default_weights(const Scenario& sc);

/// Transmit beampattern sum_n a^H(theta, phi, n) R_n a(theta, phi, n).
double beampattern_value(const CovarianceSet& cov, const model::ArrayGeometry& geom,
                         double theta, double phi);

}  // namespace isacxt::beamform
