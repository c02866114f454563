#include "flowsos/energy.h"

#include <cstdio>
#include <stdexcept>

namespace flowsos {

double ReLimit::value() const {
  if (infinite_) throw std::logic_error("ReLimit: bound is infinite");
  return value_;
}

std::string ReLimit::ToString() const {
  if (infinite_) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", value_);
  return buf;
}

ReLimit MatrixStabilityLimit(const Eigen::MatrixXd& lambda,
                             const Eigen::MatrixXd& s) {
  const Eigen::MatrixXd m = -2.0 * lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (lambda.rows() != lambda.cols() || llt.info() != Eigen::Success) {
    throw std::invalid_argument("Lambda must be negative definite");
  }
  const Eigen::MatrixXd sym = s + s.transpose();
  // Eigenvalues of R^{-1} (S + S^T) R^{-T} with M = R R^T.
  const Eigen::MatrixXd linv_s =
      llt.matrixL().solve(sym);
  const Eigen::MatrixXd k =
      llt.matrixL().solve(linv_s.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (k + k.transpose()),
                                                     Eigen::EigenvaluesOnly);
  const double mu_max = es.eigenvalues().maxCoeff();
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (mu_max <= 1e-14 * scale) return ReLimit::Infinite();
  return ReLimit::Finite(1.0 / mu_max);
}

ReLimit EnergyStabilityLimit(const QuadraticSystem& sys) {
  return MatrixStabilityLimit(sys.lambda_mat, sys.w_mat);
}

ReLimit ShiftedEnergyMaxRe(const QuadraticSystem& sys,
                           const Eigen::VectorXd& d) {
  if (d.size() != sys.n) throw std::invalid_argument("d must have length n");
  return MatrixStabilityLimit(sys.lambda_mat,
                              sys.w_mat - InteractionMatrix(sys, d));
}

double EnergyMatrixMaxEigenvalue(const QuadraticSystem& sys, double re) {
  const Eigen::MatrixXd m =
      2.0 * sys.lambda_mat + re * (sys.w_mat + sys.w_mat.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace flowsos
