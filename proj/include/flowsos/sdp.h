#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace flowsos {

/// One entry of a symmetric coefficient matrix: the matrix has @p value at
/// (row, col) and (col, row) of block @p block. Only row >= col is stored.
struct SdpEntry {
  int block{0};
  int row{0};
  int col{0};
  double value{0.0};
};

/// <A_i, X> + sum_k g_k u_k = rhs.
struct SdpConstraint {
  std::vector<SdpEntry> entries;
  std::vector<std::pair<int, double>> free_terms;
  double rhs{0.0};
};

/// Block-diagonal SDP in equality form:
///
///   minimize   <C, X> + c^T u
///   subject to <A_i, X> + (G u)_i = b_i,   X = diag(X_1, ..., X_K) >= 0,
///
/// with u free. Blocks of size 1 act as nonnegative scalars.
struct SdpProblem {
  std::vector<int> block_sizes;
  int num_free{0};
  std::vector<SdpConstraint> constraints;
  std::vector<SdpEntry> objective;
  std::vector<std::pair<int, double>> free_objective;

  int num_constraints() const { return static_cast<int>(constraints.size()); }
  /// @throws std::invalid_argument on out-of-range indices or row < col.
  void Validate() const;
};

struct SolverOptions {
  int max_iters{200};
  double tol_gap{1e-8};
  double tol_feas{1e-8};
  bool verbose{false};
  /// Stops with kPrimalTargetReached at an iterate with relative primal
  /// infeasibility <= tol_feas and primal objective <= primal_target.
  double primal_target{-std::numeric_limits<double>::infinity()};
  /// Stops with kDualTargetReached at an iterate with relative dual
  /// infeasibility <= tol_feas and dual objective >= dual_target, which
  /// bounds the optimal value from below.
  double dual_target{std::numeric_limits<double>::infinity()};
};

/// Primal and dual iterate of the interior point method.
struct SdpSolution {
  std::vector<Eigen::MatrixXd> x;
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  std::vector<Eigen::MatrixXd> z;
};

enum class SdpStatus {
  kOptimal,
  kMaxIterations,
  kNumericalFailure,
  kPrimalInfeasible,
  kDualInfeasible,
  kPrimalTargetReached,
  kDualTargetReached,
};

std::string ToString(SdpStatus status);

struct SdpResult {
  SdpStatus status{SdpStatus::kNumericalFailure};
  SdpSolution solution;
  double primal_objective{0.0};
  double dual_objective{0.0};
  double rel_primal_infeasibility{0.0};
  double rel_dual_infeasibility{0.0};
  double rel_gap{0.0};
  int iterations{0};
  /// Relative duality gap per iteration.
  std::vector<double> gap_history;
};

/// Solves the SDP with a primal-dual interior point method using
/// Nesterov-Todd scaling and Mehrotra predictor-corrector steps, after
/// removing dependent equality rows and free columns.
/// @throws std::invalid_argument if the problem is malformed.
SdpResult SolveSdp(const SdpProblem& prob, const SolverOptions& opts = {});

/// kEarlyStop: a solver target settled the sign of the slack (see Solve).
enum class SlackStatus { kBounded, kUnbounded, kFailed, kEarlyStop };

struct SlackResult {
  SlackStatus status{SlackStatus::kFailed};
  /// max t such that a solution with every block >= t I exists.
  double t{0.0};
  /// Upper bound on t from the dual objective; +infinity when the final
  /// dual iterate is not feasible within tol_feas.
  double t_upper{std::numeric_limits<double>::infinity()};
  /// X = X' + t I and u of the final iterate.
  std::vector<Eigen::MatrixXd> x;
  Eigen::VectorXd u;
  int iterations{0};
  SdpStatus solver_status{SdpStatus::kNumericalFailure};
};

/// Maximizes t subject to the equalities with every block >= t I. The
/// objective of @p prob is ignored.
SlackResult MaximizeSlack(const SdpProblem& prob, const SolverOptions& opts = {});

enum class FeasibilityStatus { kFeasible, kInfeasible, kIndeterminate };

std::string ToString(FeasibilityStatus status);

struct SolveOutcome {
  FeasibilityStatus status{FeasibilityStatus::kIndeterminate};
  std::vector<Eigen::MatrixXd> x;
  Eigen::VectorXd u;
  /// Achieved slack t*; +infinity when the slack is unbounded.
  double slack{0.0};
  bool slack_unbounded{false};
  int iterations{0};
  /// Independently recomputed equality residual (max abs) and minimum
  /// eigenvalue over all blocks.
  double max_residual{0.0};
  /// Max over rows of |residual| / (1 + |rhs| + sum of |terms|).
  double max_relative_residual{0.0};
  double min_eigenvalue{0.0};
};

/// Feasibility test by slack maximization: Feasible if every block has
/// minimum eigenvalue >= -tol_feas and the relative equality residual is at
/// most tol_feas;
/// Infeasible if the optimal slack, or its dual bound, is below -tol_feas;
/// otherwise Indeterminate. The solve stops early once a primal-feasible
/// slack or a dual bound passes +-1e3 tol_feas, which avoids the degenerate
/// optimal face when the slack is capped by fixed coefficients.
SolveOutcome Solve(const SdpProblem& prob, const SolverOptions& opts = {});

/// Max absolute equality residual of (x, u), computed from the raw data.
double MaxEqualityResidual(const SdpProblem& prob,
                           const std::vector<Eigen::MatrixXd>& x,
                           const Eigen::VectorXd& u);

/// Max over rows of |residual| / (1 + |rhs| + sum of |terms|), the backward
/// error of (x, u).
double MaxRelativeEqualityResidual(const SdpProblem& prob,
                                   const std::vector<Eigen::MatrixXd>& x,
                                   const Eigen::VectorXd& u);

/// Smallest eigenvalue over all blocks of x.
double MinBlockEigenvalue(const std::vector<Eigen::MatrixXd>& x);

/// Writes the problem in sparse SDPA format (.dat-s). Layout is documented
/// in README.md; free variables are split as u = u+ - u- in a trailing
/// diagonal block.
void WriteSdpa(const SdpProblem& prob, std::ostream& out);
void WriteSdpaFile(const SdpProblem& prob, const std::string& path);

}  // namespace flowsos
