#include "flowsos/sos_program.h"

#include <gtest/gtest.h>

namespace flowsos {
namespace {

MultiPoly X(int n, int i) { return MultiPoly::Variable(n, i); }

// max gamma s.t. x^4 - 3x^2 + 4 - gamma is SOS. Univariate nonnegativity is
// SOS, so gamma* = min_x (x^4 - 3x^2 + 4) = 4 - 9/4 at x^2 = 3/2.
TEST(SosProgramTest, UnivariateLowerBound) {
  const MultiPoly x = X(1, 0);
  const MultiPoly p = x * x * x * x - 3.0 * (x * x) + MultiPoly::Constant(1, 4.0);
  SosProgram prog;
  const AffineExpr gamma = prog.NewFree();
  const MonomialBasis basis = MakeMonomialBasis(1, 2, true);
  const int id = prog.AddSosConstraint(ToParamPoly(p) - ParamPoly::Constant(1, gamma), basis);
  prog.SetObjective(gamma * -1.0);
  const SdpResult r = SolveSdp(prog.BuildSdp());
  ASSERT_EQ(r.status, SdpStatus::kOptimal);
  const SosProgram::Solution sol = prog.ExtractSolution(r.solution.x, r.solution.u);
  const double g = gamma.Evaluate(sol.values);
  EXPECT_NEAR(g, 1.75, 1e-6);
  // The projected Gram matrix reproduces the polynomial exactly.
  const MultiPoly target = p - MultiPoly::Constant(1, g);
  EXPECT_LE(MaxAbsCoefficient(target - GramQuadraticForm(basis, sol.grams[id])), 1e-12);
  EXPECT_LE(sol.raw_residuals[id], 1e-7);
}

TEST(SosProgramTest, BoundedVariables) {
  // e a1^2 + (1 - e) a2^2 with two bounded copies of e tied together,
  // 0.25 <= e <= 0.5; the optimum of e lies on a bound.
  const int n = 2;
  SosProgram prog;
  const AffineExpr lo = prog.NewLowerBounded(0.25);
  const AffineExpr hi = prog.NewUpperBounded(0.5);
  prog.AddLinearEquality(lo - hi);
  ParamPoly target(n);
  target.AddTerm(Monomial::Variable(n, 0, 2), lo);
  target.AddTerm(Monomial::Variable(n, 1, 2), AffineExpr(1.0) - lo);
  prog.AddSosConstraint(target, MakeMonomialBasis(n, 1, false), {0, 1});
  prog.SetObjective(lo);
  const SdpProblem sdp = prog.BuildSdp();
  // Two 1x1 bound blocks and one block per label.
  EXPECT_EQ(sdp.block_sizes, std::vector<int>({1, 1, 1, 1}));
  const SdpResult r = SolveSdp(sdp);
  ASSERT_EQ(r.status, SdpStatus::kOptimal);
  const SosProgram::Solution sol = prog.ExtractSolution(r.solution.x, r.solution.u);
  EXPECT_NEAR(lo.Evaluate(sol.values), 0.25, 1e-6);
  EXPECT_NEAR(hi.Evaluate(sol.values), 0.25, 1e-6);
  prog.SetObjective(lo * -1.0);
  const SdpResult r2 = SolveSdp(prog.BuildSdp());
  ASSERT_EQ(r2.status, SdpStatus::kOptimal);
  EXPECT_NEAR(lo.Evaluate(prog.ExtractSolution(r2.solution.x, r2.solution.u).values), 0.5, 1e-6);
}

TEST(SosProgramTest, RowsAreScaled) {
  SosProgram prog;
  const MultiPoly x = X(1, 0);
  prog.AddSosConstraint(ToParamPoly(1e6 * (x * x) + MultiPoly::Constant(1, 3.0)),
                        MakeMonomialBasis(1, 1, true));
  for (const auto& row : prog.BuildSdp().constraints) {
    double mx = 0.0;
    for (const auto& e : row.entries) mx = std::max(mx, std::abs(e.value));
    EXPECT_DOUBLE_EQ(mx, 1.0);
  }
}

TEST(SosProgramTest, Errors) {
  SosProgram prog;
  ParamPoly p(1);
  p.AddTerm(Monomial::Variable(1, 0, 2), AffineExpr::Variable(3));
  EXPECT_THROW(prog.AddSosConstraint(p, MakeMonomialBasis(1, 1, false)), std::invalid_argument);
  EXPECT_THROW(prog.ExtractSolution({Eigen::MatrixXd::Zero(1, 1)}, Eigen::VectorXd()),
               std::invalid_argument);
}

}  // namespace
}  // namespace flowsos
