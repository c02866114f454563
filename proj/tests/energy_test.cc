#include "flowsos/energy.h"

#include <gtest/gtest.h>

namespace flowsos {
namespace {

double MaxEig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().maxCoeff();
}

TEST(EnergyTest, OneModeSystem) {
  Eigen::MatrixXd lam(1, 1), w(1, 1);
  lam << -1.0;
  w << 1.0;
  EXPECT_NEAR(MatrixStabilityLimit(lam, w).value(), 1.0, 1e-14);
}

TEST(EnergyTest, SkewBaseTermIsUnbounded) {
  Eigen::MatrixXd lam = -Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd w(2, 2);
  w << 0.0, 1.0, -1.0, 0.0;
  const ReLimit r = MatrixStabilityLimit(lam, w);
  EXPECT_TRUE(r.is_infinite());
  EXPECT_EQ(r.ToString(), "inf");
  EXPECT_THROW(r.value(), std::logic_error);
}

TEST(EnergyTest, RejectsIndefiniteViscousTerm) {
  Eigen::MatrixXd lam = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(MatrixStabilityLimit(lam, lam), std::invalid_argument);
}

// The energy limit of the nine-mode model, checked by sign changes of the
// largest eigenvalue of 2 Lambda + Re (W + W^T) on either side.
TEST(EnergyTest, MfeEnergyLimit) {
  const QuadraticSystem sys = MakeMfeModel();
  const double re = EnergyStabilityLimit(sys).value();
  EXPECT_NEAR(re, 7.46604, 5e-6);
  const Eigen::MatrixXd s = sys.w_mat + sys.w_mat.transpose();
  EXPECT_LT(MaxEig(2 * sys.lambda_mat + (re - 1e-4) * s), 0.0);
  EXPECT_GT(MaxEig(2 * sys.lambda_mat + (re + 1e-4) * s), 0.0);
  EXPECT_NEAR(EnergyMatrixMaxEigenvalue(sys, re), 0.0, 1e-9);
}

TEST(EnergyTest, ZeroShiftMatchesEnergyLimit) {
  const QuadraticSystem sys = MakeMfeModel();
  EXPECT_NEAR(ShiftedEnergyMaxRe(sys, Eigen::VectorXd::Zero(9)).value(),
              EnergyStabilityLimit(sys).value(), 1e-12);
}

TEST(EnergyTest, FullShiftRemovesBaseTerm) {
  // Shifting by c cancels W entirely, so E_1 gives no finite bound.
  const QuadraticSystem sys = MakeMfeModel();
  EXPECT_TRUE(ShiftedEnergyMaxRe(sys, *sys.c).is_infinite());
}

}  // namespace
}  // namespace flowsos
