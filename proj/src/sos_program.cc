#include "flowsos/sos_program.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace flowsos {

int SosProgram::AddVariable(Kind kind) {
  const int k = static_cast<int>(kinds_.size());
  kinds_.push_back(kind);
  if (kind == Kind::kFree) {
    slot_.push_back(num_free_++);
  } else {
    slot_.push_back(static_cast<int>(block_sizes_.size()));
    block_sizes_.push_back(1);
  }
  return k;
}

AffineExpr SosProgram::NewFree() {
  return AffineExpr::Variable(AddVariable(Kind::kFree));
}

AffineExpr SosProgram::NewLowerBounded(double lower) {
  return AffineExpr(lower) + AffineExpr::Variable(AddVariable(Kind::kNonneg));
}

AffineExpr SosProgram::NewUpperBounded(double upper) {
  return AffineExpr(upper) - AffineExpr::Variable(AddVariable(Kind::kNonneg));
}

int SosProgram::AddSosConstraint(const ParamPoly& target,
                                 const MonomialBasis& basis,
                                 const std::vector<int>& block_of,
                                 double drop_tolerance) {
  for (const auto& [m, c] : target.terms()) {
    for (const auto& [k, v] : c.terms()) {
      if (k < 0 || k >= num_variables()) {
        throw std::invalid_argument("AddSosConstraint: unknown decision variable");
      }
    }
  }
  GramOptions opts;
  opts.block_of = block_of;
  opts.drop_tolerance = drop_tolerance;
  SosBlock blk;
  blk.system = GramParametrize(target, basis, opts);
  blk.block_of = block_of;
  const int nb = basis.size();
  blk.sdp_block.assign(nb, -1);
  blk.local_index.assign(nb, -1);
  std::map<int, std::vector<int>> members;
  for (int i = 0; i < nb; ++i) members[block_of.empty() ? 0 : block_of[i]].push_back(i);
  for (const auto& [label, idx] : members) {
    const int b = static_cast<int>(block_sizes_.size());
    block_sizes_.push_back(static_cast<int>(idx.size()));
    for (size_t k = 0; k < idx.size(); ++k) {
      blk.sdp_block[idx[k]] = b;
      blk.local_index[idx[k]] = static_cast<int>(k);
    }
  }
  sos_.push_back(std::move(blk));
  return static_cast<int>(sos_.size()) - 1;
}

void SosProgram::AddLinearEquality(const AffineExpr& expr) { linear_.push_back(expr); }

void SosProgram::SetObjective(const AffineExpr& objective) { objective_ = objective; }

SdpProblem SosProgram::BuildSdp() const {
  SdpProblem prob;
  prob.block_sizes = block_sizes_;
  prob.num_free = num_free_;
  auto add_var = [&](SdpConstraint* row, int k, double coef) {
    if (kinds_[k] == Kind::kFree) {
      row->free_terms.emplace_back(slot_[k], coef);
    } else {
      row->entries.push_back({slot_[k], 0, 0, coef});
    }
  };
  auto finish = [&](SdpConstraint row) {
    double scale = 0.0;
    for (const auto& e : row.entries) scale = std::max(scale, std::abs(e.value));
    for (const auto& t : row.free_terms) scale = std::max(scale, std::abs(t.second));
    if (scale > 0.0) {
      for (auto& e : row.entries) e.value /= scale;
      for (auto& t : row.free_terms) t.second /= scale;
      row.rhs /= scale;
    }
    prob.constraints.push_back(std::move(row));
  };
  for (const auto& blk : sos_) {
    for (const auto& eq : blk.system.equalities) {
      SdpConstraint row;
      for (const auto& e : eq.entries) {
        const int b = blk.sdp_block[e.row];
        const int i = blk.local_index[e.row], j = blk.local_index[e.col];
        row.entries.push_back({b, std::max(i, j), std::min(i, j), 1.0});
      }
      for (const auto& [k, c] : eq.free_terms) add_var(&row, k, -c);
      row.rhs = eq.target;
      finish(std::move(row));
    }
  }
  for (const auto& expr : linear_) {
    SdpConstraint row;
    for (const auto& [k, c] : expr.terms()) add_var(&row, k, c);
    row.rhs = -expr.constant();
    finish(std::move(row));
  }
  for (const auto& [k, c] : objective_.terms()) {
    if (kinds_[k] == Kind::kFree) {
      prob.free_objective.emplace_back(slot_[k], c);
    } else {
      prob.objective.push_back({slot_[k], 0, 0, c});
    }
  }
  return prob;
}

SosProgram::Solution SosProgram::ExtractSolution(
    const std::vector<Eigen::MatrixXd>& x, const Eigen::VectorXd& u) const {
  if (x.size() != block_sizes_.size() || u.size() != num_free_) {
    throw std::invalid_argument("ExtractSolution: point does not match the program");
  }
  Solution sol;
  sol.values.resize(num_variables());
  for (int k = 0; k < num_variables(); ++k) {
    sol.values[k] = kinds_[k] == Kind::kFree ? u[slot_[k]] : std::max(0.0, x[slot_[k]](0, 0));
  }
  for (const auto& blk : sos_) {
    const int nb = blk.system.basis.size();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nb, nb);
    for (int i = 0; i < nb; ++i) {
      for (int j = 0; j < nb; ++j) {
        if (blk.sdp_block[i] == blk.sdp_block[j]) {
          const auto& X = x[blk.sdp_block[i]];
          H(i, j) = 0.5 * (X(blk.local_index[i], blk.local_index[j]) +
                           X(blk.local_index[j], blk.local_index[i]));
        }
      }
    }
    double worst = 0.0;
    for (const auto& eq : blk.system.equalities) {
      double rhs = eq.target;
      for (const auto& [k, c] : eq.free_terms) rhs += c * sol.values[k];
      double lhs = 0.0, wn = 0.0;
      for (const auto& e : eq.entries) {
        lhs += e.weight * H(e.row, e.col);
        wn += e.weight * e.weight;
      }
      const double r = rhs - lhs;
      worst = std::max(worst, std::abs(r));
      if (wn == 0.0) continue;
      for (const auto& e : eq.entries) {
        H(e.row, e.col) += r * e.weight / wn;
        if (e.row != e.col) H(e.col, e.row) = H(e.row, e.col);
      }
    }
    sol.raw_residuals.push_back(worst);
    sol.grams.push_back(std::move(H));
  }
  return sol;
}

}  // namespace flowsos
