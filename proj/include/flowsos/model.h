#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsos/poly.h"

namespace flowsos {

/// The quadratic system  da/dt = (Lambda / Re + W) a + N(a) a  with
/// N(a) = sum_j a_j Q^j, so that [N(a) a]_i = sum_{j,k} Q^j(i, k) a_j a_k.
struct QuadraticSystem {
  int n{0};
  /// Viscous term Lambda (symmetric, negative definite).
  Eigen::MatrixXd lambda_mat;
  /// Base-flow interaction term W.
  Eigen::MatrixXd w_mat;
  /// Q^1 ... Q^n, each n x n.
  std::vector<Eigen::MatrixXd> q_tensors;
  /// Base-flow coordinates c, if known.
  std::optional<Eigen::VectorXd> c;
};

/// Streamwise and spanwise box lengths of the nine-mode shear-flow model.
struct FlowGeometry {
  double lx{4.0 * M_PI};
  double lz{2.0 * M_PI};

  double alpha() const { return 2.0 * M_PI / lx; }
  double beta() const { return M_PI / 2.0; }
  double gamma() const { return 2.0 * M_PI / lz; }
};

/// Checks dimensions, symmetry and negative definiteness of Lambda.
/// @throws std::invalid_argument describing the first violation.
void ValidateSystem(const QuadraticSystem& sys);

/// Returns N(a) = sum_j a_j Q^j.
Eigen::MatrixXd NonlinearMatrix(const QuadraticSystem& sys,
                                const Eigen::VectorXd& a);

/// Returns N(a) a.
Eigen::VectorXd NonlinearTerm(const QuadraticSystem& sys,
                              const Eigen::VectorXd& a);

/// Returns (Lambda / Re + W) a + N(a) a.
/// @throws std::invalid_argument if re <= 0 or on size mismatch.
Eigen::VectorXd Rhs(const QuadraticSystem& sys, const Eigen::VectorXd& a,
                    double re);

/// Returns Lambda a / Re + N(a + c)(a + c) - N(c) c, which equals Rhs when
/// W is consistent with c.
/// @throws std::invalid_argument if c is absent or re <= 0.
Eigen::VectorXd RhsShifted(const QuadraticSystem& sys, const Eigen::VectorXd& a,
                           double re);

/// The Jacobian of x -> N(x) x at x = d, i.e. the matrix Wd with
/// Wd a = N(a) d + N(d) a.
Eigen::MatrixXd InteractionMatrix(const QuadraticSystem& sys,
                                  const Eigen::VectorXd& d);

/// Builds the nine-mode sinusoidal shear-flow model with c = e_1 and W
/// derived from W a = N(a) c + N(c) a.
/// @throws std::invalid_argument for non-positive box lengths.
QuadraticSystem MakeMfeModel(const FlowGeometry& geom = {});

/// Max over random samples of |a^T N(a) a| / |a|^3, with a drawn uniformly
/// from the unit sphere scaled by a random factor in [0.1, 10].
double CheckEnergyConservation(const QuadraticSystem& sys, int samples,
                               std::uint64_t seed = 1);

/// The right-hand side split into polynomial parts: f = viscous / Re + base +
/// nonlinear, each a vector of n polynomials in a.
struct SystemPolynomials {
  std::vector<MultiPoly> viscous;
  std::vector<MultiPoly> base;
  std::vector<MultiPoly> nonlinear;

  /// f at a given Reynolds number.
  std::vector<MultiPoly> AtRe(double re) const;
};

SystemPolynomials MakeSystemPolynomials(const QuadraticSystem& sys);

/// Model file text (format tag "qsys-v1").
std::string QuadraticSystemToJson(const QuadraticSystem& sys);
/// @throws std::runtime_error with line/column or field information.
QuadraticSystem QuadraticSystemFromJson(const std::string& text);
QuadraticSystem LoadQuadraticSystem(const std::string& path);

/// FNV-1a hash of the canonical model file text, as 16 hex digits.
std::string ModelHash(const QuadraticSystem& sys);

}  // namespace flowsos
