#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsos/model.h"
#include "flowsos/poly.h"
#include "flowsos/sdp.h"
#include "flowsos/sos.h"
#include "flowsos/sos_program.h"

namespace flowsos {

/// Bounds on the unresolved modes u_s with q^2 = |u_s|^2 / 2:
///   Gamma(u_s) <= kappa_s |u_s|^2,
///   |Theta_a + Theta_b + Theta_c|^2 <= c1 q^2 + c2 q^2 |a|^2 + c3 q^4,
///   |chi|^2 <= d q^2 |a|^2 (chi = 0 for an eigenfunction basis).
struct TailBounds {
  double kappa_s{-1.0};
  double c1{0.0};
  double c2{0.0};
  double c3{0.0};
  double d{0.0};
  bool chi_zero{true};
  /// Free-form note on where the constants come from.
  std::string provenance;

  /// @throws std::invalid_argument unless kappa_s < 0 and c1, c2, c3, d are
  /// finite and nonnegative.
  void Validate() const;
};

/// Tail-bounds file text (format tag "tail-v1").
std::string TailBoundsToJson(const TailBounds& bounds);
/// @throws std::runtime_error on malformed input, std::invalid_argument if
/// the bounds are invalid.
TailBounds TailBoundsFromJson(const std::string& text);
TailBounds LoadTailBounds(const std::string& path);
void SaveTailBounds(const TailBounds& bounds, const std::string& path);

/// V(a, s) = V_a(a) + prod_i (E_{theta_i}(a) + s) with s = q^2, or a fixed V.
struct RobustTemplate {
  /// Variable term, mask and shifts; the energy product uses the shifts.
  LyapunovTemplate base;
  /// A fixed V over (a, s) in n + 1 variables, used instead of the template.
  std::optional<MultiPoly> fixed_v;
  /// Uses VModifiedTemplate(sys, epsilon, Re) at the compiled Re instead of
  /// the template.
  std::optional<double> vmodified_epsilon;

  /// @throws std::invalid_argument on an invalid base template, a fixed V
  /// of the wrong size, both a fixed V and an epsilon, or a negative epsilon.
  void Validate(int n) const;
  /// Formula such as "a^T P a + (E0 + q^2)*(E2 + q^2)".
  std::string Describe() const;
};

/// V = E0 + q^2.
RobustTemplate EnergyRobustTemplate();

/// g, h and p of the sufficient condition g < -|h| sqrt(p), over (a, q) in
/// n + 1 variables (q last):
///   g = dV/da . f + dV/ds 2 kappa_s q^2,
///   h = (dV/da - dV/ds a^T, dV/ds)^T (the last entry dropped when chi = 0),
///   p = c1 q^2 + c2 q^2 |a|^2 + c3 q^4 + d q^2 |a|^2 (d term dropped when
///   chi = 0).
template <typename T>
struct RobustPolynomials {
  Polynomial<T> g;
  std::vector<Polynomial<T>> h;
  Polynomial<T> p;
};

/// @p v is V over (a, s).
/// @throws std::invalid_argument if bounds are invalid, v has the wrong
/// number of variables, re <= 0, or dV/ds is negative at a sampled point.
RobustPolynomials<double> BuildGhp(const QuadraticSystem& sys, const TailBounds& bounds,
                                   const MultiPoly& v, double re);
/// Decision-variable version; dV/ds >= 0 is left to the compiled program.
RobustPolynomials<AffineExpr> BuildGhp(const QuadraticSystem& sys, const TailBounds& bounds,
                                       const ParamPoly& v, double re);

template <typename T>
using PolyMatrix = std::vector<std::vector<Polynomial<T>>>;

/// H = [[g p, h^T p], [h p, g I]], of size (1 + h.size()).
PolyMatrix<double> BuildH(const RobustPolynomials<double>& ghp);
PolyMatrix<AffineExpr> BuildH(const RobustPolynomials<AffineExpr>& ghp);

/// z^T H z over (a, q, z_0, ..., z_{m-1}) for an m x m symmetric H over (a, q).
/// @throws std::invalid_argument if H is not square or not symmetric.
MultiPoly Scalarize(const PolyMatrix<double>& h);
ParamPoly Scalarize(const PolyMatrix<AffineExpr>& h);

/// Exponents of the multipliers. M1 = M4 = 1 with s1 = r^k1 and
/// sigma1 = r^k4, r = |a|^2 + q^2:
///   s0 = -r^k1 z^T H z - eps2 r^positivity_power z^T diag(p, I) z,
///   sigma0 = r^k4 V - eps1 r^lower_bound_power,
///   dV/ds (with s = q^2) SOS in (a, q).
/// Unset powers take the only degree-consistent value.
struct RobustDegrees {
  int k1{0};
  std::optional<int> positivity_power;
  int k4{0};
  std::optional<int> lower_bound_power;
};

struct RobustOptions {
  double eps_bar{1e-5};
  bool use_symmetry{true};
  double drop_tolerance{1e-12};
  RobustDegrees degrees;
};

/// One compiled SOS identity: target = m^T H m over basis.
struct RobustIdentity {
  std::string name;
  int id{-1};
  MonomialBasis basis;
  std::vector<int> block_of;
};

struct RobustProgram {
  SosProgram program;
  RobustTemplate tmpl;
  TailBounds bounds;
  RobustOptions options;
  double re{0.0};
  /// V over (a, s).
  ParamPoly v;
  AffineExpr eps1;
  AffineExpr eps2;
  int positivity_power{0};
  int lower_bound_power{0};
  /// Size of H.
  int h_size{0};
  /// s0, sigma0 and dV/ds, in that order.
  std::vector<RobustIdentity> identities;
};

/// @throws std::invalid_argument on invalid inputs, or if a multiplier power
/// cannot balance the identity degrees (the message gives the valid range).
RobustProgram CompileRobust(const QuadraticSystem& sys, const TailBounds& bounds,
                            const RobustTemplate& tmpl, double re,
                            const RobustOptions& options = {});

struct RobustIdentityCheck {
  std::string name;
  double residual{0.0};
  double lambda_min{0.0};
};

struct RobustSolveResult {
  /// Feasible only if every identity verifies (residual <= 1e-7, lambda_min
  /// >= -1e-9) and eps1, eps2 >= eps_bar.
  FeasibilityStatus status{FeasibilityStatus::kIndeterminate};
  SolveOutcome outcome;
  /// V over (a, s) at the solution.
  MultiPoly v;
  std::vector<RobustIdentityCheck> checks;
  double eps1{0.0};
  double eps2{0.0};
  double seconds{0.0};
};

RobustSolveResult SolveRobust(const RobustProgram& prog, const QuadraticSystem& sys,
                              const SolverOptions& solver = {});

RobustSolveResult CheckRobust(const QuadraticSystem& sys, const TailBounds& bounds,
                              const RobustTemplate& tmpl, double re,
                              const RobustOptions& options = {},
                              const SolverOptions& solver = {});

struct RobustBisectOptions {
  double re_lo{1.0};
  double re_hi{200.0};
  double tol{0.1};
  RobustOptions robust;
  SolverOptions solver;
  bool verbose{false};
};

struct RobustBisectResult {
  double re_max{0.0};
  bool hit_upper{false};
  /// V of the last feasible evaluation.
  std::optional<MultiPoly> v;
  std::vector<BisectStep> steps;
};

/// Largest Re within tol with a verified robust certificate.
/// @throws std::runtime_error if re_lo is not feasible.
/// @throws std::invalid_argument if re_lo >= re_hi or tol <= 0.
RobustBisectResult BisectRobust(const QuadraticSystem& sys, const TailBounds& bounds,
                                const RobustTemplate& tmpl,
                                const RobustBisectOptions& options = {});

/// V = E0 + s + (E0 + s)^2 - epsilon sum_{i >= 2} a_i f_i(a) over (a, s),
/// with f at the given Re.
/// @throws std::invalid_argument if n == 1, epsilon < 0 or re <= 0.
MultiPoly VModifiedTemplate(const QuadraticSystem& sys, double epsilon, double re);

/// [[t, u^T], [u, t I]].
Eigen::MatrixXd SchurBlock(const Eigen::VectorXd& u, double t);

}  // namespace flowsos
