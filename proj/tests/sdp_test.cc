#include "flowsos/sdp.h"

#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "flowsos/poly.h"

namespace flowsos {
namespace {

SdpConstraint Row(std::vector<SdpEntry> entries, double rhs,
                  std::vector<std::pair<int, double>> free_terms = {}) {
  SdpConstraint c;
  c.entries = std::move(entries);
  c.rhs = rhs;
  c.free_terms = std::move(free_terms);
  return c;
}

// One dense Gram block over the basis; equality rows from GramParametrize.
SdpProblem GramProblem(const MultiPoly& p, const MonomialBasis& basis) {
  const GramConstraintSystem sys = GramParametrize(p, basis);
  SdpProblem prob;
  prob.block_sizes = {basis.size()};
  for (const auto& eq : sys.equalities) {
    SdpConstraint c;
    for (const auto& e : eq.entries) {
      // weight 2 off the diagonal is the factor applied by the SDP inner
      // product; stored entry values are then 1.
      c.entries.push_back({0, e.col, e.row, 1.0});
    }
    c.rhs = eq.target;
    prob.constraints.push_back(c);
  }
  return prob;
}

MultiPoly Motzkin() {
  MultiPoly p(2);
  p.AddTerm(Monomial({4, 2}), 1.0);
  p.AddTerm(Monomial({2, 4}), 1.0);
  p.AddTerm(Monomial({2, 2}), -3.0);
  p.AddTerm(Monomial({0, 0}), 1.0);
  return p;
}

TEST(SdpTest, TraceMinimization) {
  // min tr X s.t. X_10 = 1 over 2x2 X: optimum X = [[1,1],[1,1]].
  SdpProblem prob;
  prob.block_sizes = {2};
  prob.constraints.push_back(Row({{0, 1, 0, 0.5}}, 1.0));
  prob.objective = {{0, 0, 0, 1.0}, {0, 1, 1, 1.0}};
  const SdpResult r = SolveSdp(prob);
  ASSERT_EQ(r.status, SdpStatus::kOptimal);
  EXPECT_NEAR(r.primal_objective, 2.0, 1e-7);
  EXPECT_NEAR(r.dual_objective, 2.0, 1e-7);
  EXPECT_NEAR(r.solution.x[0](0, 0), 1.0, 1e-6);
  EXPECT_LE(r.gap_history.back(), 1e-8);
}

TEST(SdpTest, FreeVariableObjective) {
  // min u s.t. X_00 - u = 0, X_11 = 1, X_10 = 1  =>  u* = 1.
  SdpProblem prob;
  prob.block_sizes = {2};
  prob.num_free = 1;
  prob.constraints.push_back(Row({{0, 0, 0, 1.0}}, 0.0, {{0, -1.0}}));
  prob.constraints.push_back(Row({{0, 1, 1, 1.0}}, 1.0));
  prob.constraints.push_back(Row({{0, 1, 0, 0.5}}, 1.0));
  prob.free_objective = {{0, 1.0}};
  const SdpResult r = SolveSdp(prob);
  ASSERT_EQ(r.status, SdpStatus::kOptimal);
  EXPECT_NEAR(r.solution.u[0], 1.0, 1e-6);
}

TEST(SdpTest, RandomFeasibleProblemsReachZeroGap) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    SdpProblem prob;
    prob.block_sizes = {4, 3, 1};
    const int m = 8;
    std::vector<Eigen::MatrixXd> x0;
    for (int s : prob.block_sizes) {
      Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(s, s, [&] { return g(rng); });
      x0.push_back(a * a.transpose() + Eigen::MatrixXd::Identity(s, s));
    }
    for (int i = 0; i < m; ++i) {
      SdpConstraint c;
      for (int k = 0; k < 3; ++k) {
        for (int r = 0; r < prob.block_sizes[k]; ++r) {
          for (int q = 0; q <= r; ++q) c.entries.push_back({k, r, q, g(rng)});
        }
      }
      prob.constraints.push_back(c);
    }
    for (auto& c : prob.constraints) {
      double v = 0.0;
      for (const auto& e : c.entries) {
        v += (e.row == e.col ? 1.0 : 2.0) * e.value * x0[e.block](e.row, e.col);
      }
      c.rhs = v;
    }
    // C = Z0 + sum y_i A_i with Z0 = I keeps the dual strictly feasible.
    for (int k = 0; k < 3; ++k) {
      for (int r = 0; r < prob.block_sizes[k]; ++r) prob.objective.push_back({k, r, r, 1.0});
    }
    for (const auto& c : prob.constraints) {
      const double y = g(rng);
      for (const auto& e : c.entries) prob.objective.push_back({e.block, e.row, e.col, y * e.value});
    }
    const SdpResult r = SolveSdp(prob);
    ASSERT_EQ(r.status, SdpStatus::kOptimal) << "trial " << trial;
    EXPECT_NEAR(r.primal_objective, r.dual_objective, 1e-6 * (1 + std::abs(r.dual_objective)));
    EXPECT_LE(MaxEqualityResidual(prob, r.solution.x, r.solution.u), 1e-6);
    EXPECT_GE(MinBlockEigenvalue(r.solution.x), -1e-8);
  }
}

TEST(SdpTest, DetectsUnboundedObjective) {
  // min -X_00 s.t. X_11 = 1.
  SdpProblem prob;
  prob.block_sizes = {2};
  prob.constraints.push_back(Row({{0, 1, 1, 1.0}}, 1.0));
  prob.objective = {{0, 0, 0, -1.0}};
  EXPECT_EQ(SolveSdp(prob).status, SdpStatus::kDualInfeasible);
}

TEST(SdpTest, PresolveHandlesDependentRows) {
  SdpProblem prob;
  prob.block_sizes = {2};
  prob.constraints.push_back(Row({{0, 0, 0, 1.0}, {0, 1, 1, 1.0}}, 2.0));
  prob.constraints.push_back(Row({{0, 0, 0, 2.0}, {0, 1, 1, 2.0}}, 4.0));
  prob.objective = {{0, 0, 0, 1.0}};
  const SdpResult r = SolveSdp(prob);
  ASSERT_EQ(r.status, SdpStatus::kOptimal);
  EXPECT_NEAR(r.primal_objective, 0.0, 1e-7);
  prob.constraints[1].rhs = 5.0;
  EXPECT_EQ(SolveSdp(prob).status, SdpStatus::kPrimalInfeasible);
}

TEST(SdpTest, PresolveHandlesFreeVariables) {
  // u0 + u1 = 3 (no matrix entries), X_00 - u0 - u1 = 0: X_00 is fixed to 3.
  SdpProblem prob;
  prob.block_sizes = {1};
  prob.num_free = 2;
  prob.constraints.push_back(Row({}, 3.0, {{0, 1.0}, {1, 1.0}}));
  prob.constraints.push_back(Row({{0, 0, 0, 1.0}}, 0.0, {{0, -1.0}, {1, -1.0}}));
  prob.objective = {{0, 0, 0, 1.0}};
  const SdpResult r = SolveSdp(prob);
  ASSERT_EQ(r.status, SdpStatus::kOptimal);
  EXPECT_NEAR(r.solution.x[0](0, 0), 3.0, 1e-7);
  EXPECT_NEAR(r.solution.u[0] + r.solution.u[1], 3.0, 1e-9);
  // Duplicate free columns with different costs make the objective unbounded.
  prob.constraints.erase(prob.constraints.begin());
  prob.free_objective = {{0, 1.0}, {1, -1.0}};
  EXPECT_EQ(SolveSdp(prob).status, SdpStatus::kDualInfeasible);
}

TEST(SdpTest, RejectsMalformedProblems) {
  SdpProblem prob;
  prob.block_sizes = {2};
  prob.constraints.push_back(Row({{0, 0, 1, 1.0}}, 1.0));
  EXPECT_THROW(SolveSdp(prob), std::invalid_argument);
  prob.constraints[0] = Row({{1, 0, 0, 1.0}}, 1.0);
  EXPECT_THROW(SolveSdp(prob), std::invalid_argument);
  prob.constraints[0] = Row({{0, 0, 0, 1.0}}, 1.0, {{0, 1.0}});
  EXPECT_THROW(SolveSdp(prob), std::invalid_argument);
}

TEST(SlackTest, MotzkinNewtonBasisHasNegativeSlack) {
  // Over the Newton-polytope basis {1, a1 a2, a1^2 a2, a1 a2^2} the Gram
  // matrix is unique: diag(1, -3, 1, 1).
  MonomialBasis basis;
  basis.n = 2;
  basis.d = 3;
  basis.entries = {Monomial({0, 0}), Monomial({1, 1}), Monomial({2, 1}), Monomial({1, 2})};
  const SlackResult s = MaximizeSlack(GramProblem(Motzkin(), basis));
  ASSERT_EQ(s.status, SlackStatus::kBounded);
  EXPECT_NEAR(s.t, -3.0, 1e-6);
}

TEST(SlackTest, MotzkinFullBasisIsInfeasible) {
  const SolveOutcome out = Solve(GramProblem(Motzkin(), MakeMonomialBasis(2, 3, true)));
  EXPECT_EQ(out.status, FeasibilityStatus::kInfeasible);
  EXPECT_LT(out.slack, 0.0);
}

TEST(SlackTest, SquaredNormIsFeasible) {
  // (a1^2 + a2^2)^2 over {a1^2, a1 a2, a2^2}: the best slack is 1.
  MultiPoly p(2);
  p.AddTerm(Monomial({4, 0}), 1.0);
  p.AddTerm(Monomial({2, 2}), 2.0);
  p.AddTerm(Monomial({0, 4}), 1.0);
  MonomialBasis basis;
  basis.n = 2;
  basis.d = 2;
  basis.entries = {Monomial({2, 0}), Monomial({1, 1}), Monomial({0, 2})};
  const SdpProblem prob = GramProblem(p, basis);
  const SlackResult s = MaximizeSlack(prob);
  ASSERT_EQ(s.status, SlackStatus::kBounded);
  EXPECT_NEAR(s.t, 1.0, 1e-6);
  const SolveOutcome out = Solve(prob);
  EXPECT_EQ(out.status, FeasibilityStatus::kFeasible);
  EXPECT_LE(out.max_residual, 1e-8);
  EXPECT_GE(out.min_eigenvalue, -1e-9);
  EXPECT_EQ(Solve(GramProblem(p, MakeMonomialBasis(2, 2, true))).status,
            FeasibilityStatus::kFeasible);
}

TEST(SlackTest, NoEqualitiesGivesUnboundedSlack) {
  SdpProblem prob;
  prob.block_sizes = {3};
  const SolveOutcome out = Solve(prob);
  EXPECT_TRUE(out.slack_unbounded);
  EXPECT_EQ(out.status, FeasibilityStatus::kFeasible);
}

TEST(SlackTest, NegativeDiagonalIsInfeasible) {
  SdpProblem prob;
  prob.block_sizes = {1, 2};
  prob.constraints.push_back(Row({{0, 0, 0, 1.0}}, -1.0));
  prob.constraints.push_back(Row({{1, 0, 0, 1.0}}, 1.0));
  EXPECT_EQ(Solve(prob).status, FeasibilityStatus::kInfeasible);
}

TEST(SlackTest, RowScalingDoesNotChangeSlack) {
  MultiPoly p(2);
  p.AddTerm(Monomial({4, 0}), 1.0);
  p.AddTerm(Monomial({2, 2}), 2.0);
  p.AddTerm(Monomial({0, 4}), 1.0);
  SdpProblem prob = GramProblem(p, MakeMonomialBasis(2, 2, false));
  const double t1 = MaximizeSlack(prob).t;
  for (size_t i = 0; i < prob.constraints.size(); ++i) {
    const double s = std::pow(10.0, static_cast<int>(i % 4) - 1);
    for (auto& e : prob.constraints[i].entries) e.value *= s;
    prob.constraints[i].rhs *= s;
  }
  EXPECT_NEAR(MaximizeSlack(prob).t, t1, 1e-6);
}

TEST(SlackTest, Deterministic) {
  const SdpProblem prob = GramProblem(Motzkin(), MakeMonomialBasis(2, 3, true));
  const SlackResult a = MaximizeSlack(prob);
  const SlackResult b = MaximizeSlack(prob);
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ((a.x[0] - b.x[0]).norm(), 0.0);
}

TEST(SdpaTest, ExportLayout) {
  SdpProblem prob;
  prob.block_sizes = {2, 1};
  prob.num_free = 1;
  prob.constraints.push_back(Row({{0, 1, 0, 0.5}, {1, 0, 0, 1.0}}, 1.0, {{0, 2.0}}));
  prob.constraints.push_back(Row({{0, 0, 0, 1.0}}, 0.25));
  prob.objective = {{0, 1, 1, 3.0}};
  prob.free_objective = {{0, 1.0}};
  std::ostringstream os;
  WriteSdpa(prob, os);
  const std::string expected =
      "* flowsos SDP export\n"
      "2\n"
      "3\n"
      "2 1 -2\n"
      "1 0.25\n"
      "0 1 2 2 -3\n"
      "0 3 1 1 -1\n"
      "0 3 2 2 1\n"
      "1 1 1 2 0.5\n"
      "1 2 1 1 1\n"
      "1 3 1 1 2\n"
      "1 3 2 2 -2\n"
      "2 1 1 1 1\n";
  EXPECT_EQ(os.str(), expected);
}

}  // namespace
}  // namespace flowsos
