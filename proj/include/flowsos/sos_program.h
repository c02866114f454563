#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsos/poly.h"
#include "flowsos/sdp.h"

namespace flowsos {

/// Builder for SOS feasibility and optimization problems whose data are
/// affine in scalar decision variables. Each SOS constraint "target is a sum
/// of squares over basis m" becomes target = m^T H m with H >= 0, split into
/// independent Gram blocks by optional block labels.
class SosProgram {
 public:
  /// A new unconstrained decision variable, as an affine expression.
  AffineExpr NewFree();

  /// A new decision variable constrained to be >= @p lower; the returned
  /// expression is lower + e with e >= 0.
  AffineExpr NewLowerBounded(double lower);

  /// A new decision variable constrained to be <= @p upper; the returned
  /// expression is upper - e with e >= 0.
  AffineExpr NewUpperBounded(double upper);

  int num_variables() const { return static_cast<int>(kinds_.size()); }

  /// Adds "target is SOS over basis". Gram entries are created only between
  /// basis entries with equal labels in @p block_of (empty means one dense
  /// block). Constant target coefficients on monomials the allowed pairs
  /// cannot produce are dropped when |c| <= drop_tolerance.
  /// @returns the index of the constraint.
  /// @throws std::invalid_argument as GramParametrize does.
  int AddSosConstraint(const ParamPoly& target, const MonomialBasis& basis,
                       const std::vector<int>& block_of = {},
                       double drop_tolerance = 0.0);

  /// Adds the linear equality expr == 0.
  void AddLinearEquality(const AffineExpr& expr);

  /// Minimizes the expression (constant part ignored). Default: feasibility.
  void SetObjective(const AffineExpr& objective);

  int num_sos_constraints() const { return static_cast<int>(sos_.size()); }
  const GramConstraintSystem& gram_system(int k) const { return sos_.at(k).system; }

  /// The SDP with one PSD block per Gram block, one 1x1 block per
  /// nonnegative part of a bounded variable, and free variables for the
  /// rest. Rows are scaled to unit max coefficient.
  SdpProblem BuildSdp() const;

  struct Solution {
    /// Decision-variable values.
    Eigen::VectorXd values;
    /// Full Gram matrix of each SOS constraint over its whole basis (zero
    /// between different labels).
    std::vector<Eigen::MatrixXd> grams;
    /// Max equality residual of each SOS constraint before projection.
    std::vector<double> raw_residuals;
  };

  /// Reads decision values and Gram matrices from an SDP primal point of
  /// BuildSdp(). Nonnegative parts are clamped at 0, then each Gram matrix
  /// gets the minimum-norm correction that makes its equalities exact for
  /// these values (every Gram entry appears in exactly one equality).
  Solution ExtractSolution(const std::vector<Eigen::MatrixXd>& x,
                           const Eigen::VectorXd& u) const;

 private:
  enum class Kind { kFree, kNonneg };
  struct SosBlock {
    GramConstraintSystem system;
    std::vector<int> block_of;
    // Per basis entry: SDP block index and position inside it.
    std::vector<int> sdp_block;
    std::vector<int> local_index;
  };

  int AddVariable(Kind kind);

  // Decision variable k is kinds_[k]; free ones map to a free column,
  // nonnegative ones to a 1x1 SDP block.
  std::vector<Kind> kinds_;
  std::vector<int> slot_;
  int num_free_{0};
  // Bounds are folded into the returned expressions, so a bounded decision
  // variable is its e >= 0 part.
  std::vector<int> block_sizes_;
  std::vector<SosBlock> sos_;
  std::vector<AffineExpr> linear_;
  AffineExpr objective_;
};

}  // namespace flowsos
