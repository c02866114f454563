#include "flowsos/sim.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "flowsos/energy.h"
#include "flowsos/sos.h"

namespace flowsos {
namespace {

TEST(IntegrateTest, ZeroStaysZero) {
  const QuadraticSystem sys = MakeMfeModel();
  const Trajectory t = Integrate(sys, Eigen::VectorXd::Zero(9), 30.0, 5.0);
  ASSERT_EQ(t.states.size(), 501u);
  for (const auto& a : t.states) EXPECT_EQ(a.norm(), 0.0);
  EXPECT_FALSE(t.blow_up_step.has_value());
  EXPECT_DOUBLE_EQ(t.times.back(), 5.0);
}

TEST(IntegrateTest, DecaysBelowEnergyLimit) {
  const QuadraticSystem sys = MakeMfeModel();
  const Eigen::VectorXd a0 = RandomInitialCondition(9, 1.0, 3).normalized();
  IntegrateOptions o;
  o.sample_every = 1000;
  const Trajectory t = Integrate(sys, a0, 5.0, 500.0, o);
  EXPECT_LT(t.states.back().norm(), 1e-3);
  EXPECT_EQ(t.states.size(), 51u);
}

TEST(IntegrateTest, FourthOrder) {
  const QuadraticSystem sys = MakeMfeModel();
  for (const std::uint64_t seed : {5u, 6u, 7u}) {
    const Eigen::VectorXd a0 = RandomInitialCondition(9, 1.0, seed).normalized();
    const double ratio = Rk4ErrorRatio(sys, a0, 20.0, 10.0, 0.1);
    EXPECT_GE(ratio, 12.0);
    EXPECT_LE(ratio, 20.0);
  }
}

TEST(IntegrateTest, EnergyStepIsFirstOrderAccurate) {
  // |dE0 - dt a^T L a| = O(dt^2) with L = Lambda / Re + W.
  const QuadraticSystem sys = MakeMfeModel();
  const double re = 30.0;
  const Eigen::MatrixXd l = sys.lambda_mat / re + sys.w_mat;
  const Eigen::VectorXd a0 = RandomInitialCondition(9, 1.0, 9).normalized();
  double previous = 0.0;
  for (const double dt : {1e-2, 5e-3}) {
    IntegrateOptions o;
    o.dt = dt;
    const Trajectory t = Integrate(sys, a0, re, dt, o);
    const double de = 0.5 * t.states[1].squaredNorm() - 0.5 * a0.squaredNorm();
    const double err = std::abs(de - dt * a0.dot(l * a0));
    if (previous > 0.0) {
      EXPECT_NEAR(previous / err, 4.0, 0.5);
    }
    previous = err;
  }
}

TEST(IntegrateTest, BlowUpIsReported) {
  // da/dt = a^2 blows up at t = 1 from a(0) = 1.
  QuadraticSystem sys;
  sys.n = 1;
  sys.lambda_mat = -Eigen::MatrixXd::Identity(1, 1) * 1e-12;
  sys.w_mat = Eigen::MatrixXd::Zero(1, 1);
  sys.q_tensors = {Eigen::MatrixXd::Ones(1, 1)};
  const Trajectory t = Integrate(sys, Eigen::VectorXd::Ones(1), 1.0, 5.0, {0.01, 1});
  ASSERT_TRUE(t.blow_up_step.has_value());
  EXPECT_GT(*t.blow_up_step, 90);
  EXPECT_LT(*t.blow_up_step, 500);
  EXPECT_EQ(static_cast<long>(t.states.size()), *t.blow_up_step);
}

TEST(IntegrateTest, Errors) {
  const QuadraticSystem sys = MakeMfeModel();
  const Eigen::VectorXd a0 = Eigen::VectorXd::Zero(9);
  EXPECT_THROW(Integrate(sys, a0, 10.0, 1.0, {0.0, 1}), std::invalid_argument);
  EXPECT_THROW(Integrate(sys, a0, 10.0, 1e-3, {1e-2, 1}), std::invalid_argument);
  EXPECT_THROW(Integrate(sys, a0, -1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(Integrate(sys, Eigen::VectorXd::Zero(3), 10.0, 1.0), std::invalid_argument);
  EXPECT_THROW(Integrate(sys, a0, 10.0, 1.0, {1e-2, 0}), std::invalid_argument);
}

DecreaseReport EnergyReport(double re) {
  const QuadraticSystem sys = MakeMfeModel();
  const MultiPoly e0 = EnergyProduct(sys, {0.0});
  DecreaseReport total;
  total.max_vdot = total.max_delta_v = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100; ++k) {
    const Trajectory t = Integrate(sys, RandomInitialCondition(9, 2.0, k + 1), re, 20.0);
    total = Combine(total, CheckDecrease(e0, sys, re, t));
  }
  return total;
}

TEST(CheckDecreaseTest, EnergyDecreasesBelowLimit) {
  ASSERT_LT(7.0, EnergyStabilityLimit(MakeMfeModel()).value());
  const DecreaseReport r = EnergyReport(7.0);
  EXPECT_GT(r.num_checked, 0);
  EXPECT_EQ(r.num_increases, 0);
  EXPECT_EQ(r.num_nonnegative_vdot, 0);
  EXPECT_LT(r.max_vdot, 0.0);
  EXPECT_LT(r.max_delta_v, 0.0);
}

TEST(CheckDecreaseTest, EnergyIncreaseFoundAboveLimit) {
  const DecreaseReport r = EnergyReport(20.0);
  EXPECT_GT(r.max_vdot, 0.0);
  EXPECT_GT(r.num_increases, 0);
}

TEST(CheckDecreaseTest, MatchesDirectEvaluation) {
  const QuadraticSystem sys = MakeMfeModel();
  const double re = 15.0;
  MultiPoly v = EnergyProduct(sys, {0.0, 2.0});
  v.AddTerm(Monomial::Variable(9, 3, 2), 0.7);
  const Trajectory t = Integrate(sys, RandomInitialCondition(9, 1.0, 4), re, 1.0);
  const DecreaseReport r = CheckDecrease(v, sys, re, t, 0.0);
  double max_vdot = -std::numeric_limits<double>::infinity();
  double max_delta = -std::numeric_limits<double>::infinity();
  const std::vector<MultiPoly> grad = Gradient(v);
  for (size_t k = 0; k < t.states.size(); ++k) {
    const Eigen::VectorXd f = Rhs(sys, t.states[k], re);
    double vdot = 0.0;
    for (int i = 0; i < 9; ++i) vdot += Evaluate(grad[i], t.states[k]) * f[i];
    max_vdot = std::max(max_vdot, vdot);
    if (k > 0) {
      max_delta = std::max(max_delta, Evaluate(v, t.states[k]) - Evaluate(v, t.states[k - 1]));
    }
  }
  EXPECT_NEAR(r.max_vdot, max_vdot, 1e-12 * (1.0 + std::abs(max_vdot)));
  EXPECT_NEAR(r.max_delta_v, max_delta, 1e-12);
  EXPECT_EQ(r.num_checked, static_cast<long>(t.states.size()));
  EXPECT_THROW(CheckDecrease(MultiPoly(3), sys, re, t), std::invalid_argument);
}

TEST(SimPropertiesTest, TotalEnergyDecreasesFarOut) {
  // grad E1 . f < 0 at |a| = 1e3, Re = 50.
  const QuadraticSystem sys = MakeMfeModel();
  const Eigen::VectorXd c = *sys.c;
  std::mt19937_64 rng(37);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 1000; ++k) {
    Eigen::VectorXd a(9);
    for (auto& x : a) x = normal(rng);
    a *= 1e3 / a.norm();
    EXPECT_LT((a + c).dot(Rhs(sys, a, 50.0)), 0.0);
  }
}

TEST(StabilityProbeTest, EnergyDecreasesOnProbeTrajectories) {
  const QuadraticSystem sys = MakeMfeModel();
  const MultiPoly e0 = EnergyProduct(sys, {0.0});
  for (int k = 0; k < 20; ++k) {
    const Trajectory t = Integrate(sys, RandomInitialCondition(9, 2.0, 1 + k), 7.0, 100.0);
    const DecreaseReport r = CheckDecrease(e0, sys, 7.0, t, 0.0);
    EXPECT_EQ(r.num_increases, 0) << k;
  }
}

TEST(StabilityProbeTest, ConvergesBelowCertifiedBound) {
  ProbeOptions o;
  o.t_final = 1000.0;
  const ProbeReport r = StabilityProbe(MakeMfeModel(), {50.0}, 20, o);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].converged, 20);
  EXPECT_DOUBLE_EQ(r.rows[0].fraction(), 1.0);
}

TEST(StabilityProbeTest, DeterministicAcrossThreadCounts) {
  ProbeOptions o;
  o.t_final = 200.0;
  o.seed = 42;
  o.threads = 1;
  const std::string a = ProbeReportToJson(StabilityProbe(MakeMfeModel(), {60.0, 150.0}, 6, o));
  o.threads = 3;
  const std::string b = ProbeReportToJson(StabilityProbe(MakeMfeModel(), {60.0, 150.0}, 6, o));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("\"seed\": 42"), std::string::npos);
}

TEST(StabilityProbeTest, EmptyInputs) {
  EXPECT_TRUE(StabilityProbe(MakeMfeModel(), {}, 10).rows.empty());
  const ProbeReport r = StabilityProbe(MakeMfeModel(), {10.0}, 0);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].samples, 0);
  EXPECT_THROW(StabilityProbe(MakeMfeModel(), {-1.0}, 1), std::invalid_argument);
  EXPECT_THROW(StabilityProbe(MakeMfeModel(), {1.0}, -1), std::invalid_argument);
}

TEST(RandomInitialConditionTest, NormAndDeterminism) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Eigen::VectorXd a = RandomInitialCondition(9, 2.0, s);
    EXPECT_GT(a.norm(), 0.0);
    EXPECT_LE(a.norm(), 2.0 + 1e-15);
    EXPECT_EQ(a, RandomInitialCondition(9, 2.0, s));
  }
}

}  // namespace
}  // namespace flowsos
