#pragma once

#include <limits>
#include <string>

#include <Eigen/Dense>

#include "flowsos/model.h"

namespace flowsos {

/// A Reynolds-number bound that is either finite or explicitly unbounded.
class ReLimit {
 public:
  static ReLimit Finite(double value) { return ReLimit(value, false); }
  static ReLimit Infinite() { return ReLimit(0.0, true); }

  bool is_infinite() const { return infinite_; }
  /// @throws std::logic_error if the bound is infinite.
  double value() const;
  /// The value, or +infinity for the unbounded case.
  double ToDouble() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }
  /// "inf" or the value with 6 significant digits.
  std::string ToString() const;

 private:
  ReLimit(double value, bool infinite) : value_(value), infinite_(infinite) {}

  double value_;
  bool infinite_;
};

/// Supremum of Re such that 2 Lambda + Re (S + S^T) is negative definite,
/// for a symmetric negative definite Lambda and any S.
/// @throws std::invalid_argument if Lambda is not negative definite.
ReLimit MatrixStabilityLimit(const Eigen::MatrixXd& lambda,
                             const Eigen::MatrixXd& s);

/// The largest Re for which the perturbation energy E_0 = |a|^2 / 2 is a
/// Lyapunov function: sup{Re : 2 Lambda + Re (W + W^T) < 0}.
/// @throws std::invalid_argument if Lambda is not negative definite.
ReLimit EnergyStabilityLimit(const QuadraticSystem& sys);

/// The Re bound of the shifted energy E = |a + d|^2 / 2: sup of Re with
/// Lambda + (Re / 2) [(W + W^T) - (Wd + Wd^T)] < 0, where Wd a = N(d) a +
/// N(a) d.
ReLimit ShiftedEnergyMaxRe(const QuadraticSystem& sys, const Eigen::VectorXd& d);

/// Largest eigenvalue of 2 Lambda + Re (W + W^T), the evidence printed next
/// to the energy limit.
double EnergyMatrixMaxEigenvalue(const QuadraticSystem& sys, double re);

}  // namespace flowsos
