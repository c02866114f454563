#include "flowsos/sdp.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace flowsos {

void SdpProblem::Validate() const {
  for (int s : block_sizes) {
    if (s < 1) throw std::invalid_argument("SdpProblem: block size < 1");
  }
  if (num_free < 0) throw std::invalid_argument("SdpProblem: num_free < 0");
  auto check_entry = [&](const SdpEntry& e) {
    if (e.block < 0 || e.block >= static_cast<int>(block_sizes.size())) {
      throw std::invalid_argument("SdpProblem: block index out of range");
    }
    const int n = block_sizes[e.block];
    if (e.row < 0 || e.row >= n || e.col < 0 || e.col >= n) {
      throw std::invalid_argument("SdpProblem: entry index out of range");
    }
    if (e.row < e.col) {
      throw std::invalid_argument("SdpProblem: entries must have row >= col");
    }
    if (!std::isfinite(e.value)) {
      throw std::invalid_argument("SdpProblem: non-finite coefficient");
    }
  };
  auto check_free = [&](const std::pair<int, double>& t) {
    if (t.first < 0 || t.first >= num_free) {
      throw std::invalid_argument("SdpProblem: free index out of range");
    }
    if (!std::isfinite(t.second)) {
      throw std::invalid_argument("SdpProblem: non-finite coefficient");
    }
  };
  for (const auto& c : constraints) {
    for (const auto& e : c.entries) check_entry(e);
    for (const auto& t : c.free_terms) check_free(t);
    if (!std::isfinite(c.rhs)) {
      throw std::invalid_argument("SdpProblem: non-finite right-hand side");
    }
  }
  for (const auto& e : objective) check_entry(e);
  for (const auto& t : free_objective) check_free(t);
}

std::string ToString(SdpStatus status) {
  switch (status) {
    case SdpStatus::kOptimal: return "optimal";
    case SdpStatus::kMaxIterations: return "max-iterations";
    case SdpStatus::kNumericalFailure: return "numerical-failure";
    case SdpStatus::kPrimalInfeasible: return "primal-infeasible";
    case SdpStatus::kDualInfeasible: return "dual-infeasible";
    case SdpStatus::kPrimalTargetReached: return "primal-target-reached";
    case SdpStatus::kDualTargetReached: return "dual-target-reached";
  }
  return "unknown";
}

std::string ToString(FeasibilityStatus status) {
  switch (status) {
    case FeasibilityStatus::kFeasible: return "Feasible";
    case FeasibilityStatus::kInfeasible: return "Infeasible";
    case FeasibilityStatus::kIndeterminate: return "Indeterminate";
  }
  return "unknown";
}

double MaxEqualityResidual(const SdpProblem& prob,
                           const std::vector<Eigen::MatrixXd>& x,
                           const Eigen::VectorXd& u) {
  double worst = 0.0;
  for (const auto& c : prob.constraints) {
    double lhs = 0.0;
    for (const auto& e : c.entries) {
      const auto& X = x[e.block];
      lhs += (e.row == e.col ? 1.0 : 2.0) * e.value * X(e.row, e.col);
    }
    for (const auto& [k, g] : c.free_terms) lhs += g * u[k];
    worst = std::max(worst, std::abs(lhs - c.rhs));
  }
  return worst;
}

double MaxRelativeEqualityResidual(const SdpProblem& prob,
                                   const std::vector<Eigen::MatrixXd>& x,
                                   const Eigen::VectorXd& u) {
  double worst = 0.0;
  for (const auto& c : prob.constraints) {
    double lhs = 0.0, mag = std::abs(c.rhs);
    for (const auto& e : c.entries) {
      const double term = (e.row == e.col ? 1.0 : 2.0) * e.value * x[e.block](e.row, e.col);
      lhs += term;
      mag += std::abs(term);
    }
    for (const auto& [k, g] : c.free_terms) {
      lhs += g * u[k];
      mag += std::abs(g * u[k]);
    }
    worst = std::max(worst, std::abs(lhs - c.rhs) / (1.0 + mag));
  }
  return worst;
}

double MinBlockEigenvalue(const std::vector<Eigen::MatrixXd>& x) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& X : x) {
    if (X.size() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (X + X.transpose()), Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
  }
  return lo;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Entry {
  int row;
  int p;
  int q;
  double v;
};

/// The problem after presolve, with the map back to the original variables.
struct Reduced {
  std::vector<int> block_sizes;
  std::vector<std::vector<Entry>> block_entries;
  int m{0};
  Eigen::VectorXd b;
  Eigen::MatrixXd G;
  Eigen::VectorXd c;
  std::vector<Eigen::MatrixXd> C;
  // u = u0 + N_kept * v.
  Eigen::VectorXd u0;
  Eigen::MatrixXd n_kept;
  std::vector<int> kept_rows;
  bool infeasible{false};
  bool unbounded{false};
};

double RelTol() { return 1e-10; }

/// Numerical rank of a column-pivoted QR: pivots above RelTol() times
/// @p scale, the magnitude of the original (untransformed) data. Eigen's own
/// threshold is relative to the largest pivot, which misreads a matrix of
/// pure roundoff as full rank.
int ScaledRank(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr, double scale) {
  const auto& r = qr.matrixQR();
  const int k = static_cast<int>(std::min(r.rows(), r.cols()));
  int rank = 0;
  for (int i = 0; i < k; ++i) {
    if (std::abs(r(i, i)) > RelTol() * scale) ++rank;
  }
  return rank;
}

double MaxAbs(const Eigen::MatrixXd& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Indices of linearly independent rows of @p a (rows as vectors), chosen by
/// column-pivoted QR of a^T.
std::vector<int> IndependentRows(const Eigen::MatrixXd& a, int* rank_out) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.transpose());
  const int r = ScaledRank(qr, MaxAbs(a));
  std::vector<int> idx;
  for (int k = 0; k < r; ++k) idx.push_back(qr.colsPermutation().indices()[k]);
  std::sort(idx.begin(), idx.end());
  *rank_out = r;
  return idx;
}

Reduced Presolve(const SdpProblem& prob) {
  Reduced red;
  red.block_sizes = prob.block_sizes;
  const int nf = prob.num_free;
  const int m0 = prob.num_constraints();
  double bscale = 1.0;
  for (const auto& c : prob.constraints) bscale = std::max(bscale, std::abs(c.rhs));

  std::vector<int> with_entries, pure_free;
  for (int i = 0; i < m0; ++i) {
    const auto& c = prob.constraints[i];
    bool has_x = false, has_u = false;
    for (const auto& e : c.entries) has_x |= (e.value != 0.0);
    for (const auto& t : c.free_terms) has_u |= (t.second != 0.0);
    if (has_x) {
      with_entries.push_back(i);
    } else if (has_u) {
      pure_free.push_back(i);
    } else if (std::abs(c.rhs) > 1e-12 * bscale) {
      red.infeasible = true;
      return red;
    }
  }

  // Free-variable elimination: rows without matrix entries fix u to an
  // affine subspace u = u0 + N v.
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(nf);
  Eigen::MatrixXd N = Eigen::MatrixXd::Identity(nf, nf);
  if (!pure_free.empty()) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(pure_free.size(), nf);
    Eigen::VectorXd bf(pure_free.size());
    for (size_t r = 0; r < pure_free.size(); ++r) {
      const auto& c = prob.constraints[pure_free[r]];
      for (const auto& [k, g] : c.free_terms) F(r, k) += g;
      bf[r] = c.rhs;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(F);
    cod.setThreshold(RelTol());
    u0 = cod.solve(bf);
    if ((F * u0 - bf).lpNorm<Eigen::Infinity>() > 1e-9 * bscale) {
      red.infeasible = true;
      return red;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F.transpose());
    const int r = ScaledRank(qr, MaxAbs(F));
    const Eigen::MatrixXd q = qr.householderQ();
    N = q.rightCols(nf - r);
  }

  const int m1 = static_cast<int>(with_entries.size());
  Eigen::MatrixXd G1 = Eigen::MatrixXd::Zero(m1, nf);
  Eigen::VectorXd b1(m1);
  for (int r = 0; r < m1; ++r) {
    const auto& c = prob.constraints[with_entries[r]];
    for (const auto& [k, g] : c.free_terms) G1(r, k) += g;
    b1[r] = c.rhs;
  }
  Eigen::VectorXd cfree = Eigen::VectorXd::Zero(nf);
  for (const auto& [k, g] : prob.free_objective) cfree[k] += g;
  b1 -= G1 * u0;
  Eigen::MatrixXd G2 = G1 * N;
  Eigen::VectorXd c2 = N.transpose() * cfree;

  // Dependent free columns: keep a maximal independent subset; the others
  // are fixed at zero, which is valid when the objective agrees.
  std::vector<int> keep_cols;
  if (G2.cols() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(G2);
    const int r = ScaledRank(qr, MaxAbs(G1));
    for (int k = 0; k < r; ++k) keep_cols.push_back(qr.colsPermutation().indices()[k]);
    std::sort(keep_cols.begin(), keep_cols.end());
    if (r < G2.cols()) {
      Eigen::MatrixXd gk(G2.rows(), r);
      Eigen::VectorXd ck(r);
      for (int k = 0; k < r; ++k) {
        gk.col(k) = G2.col(keep_cols[k]);
        ck[k] = c2[keep_cols[k]];
      }
      std::vector<bool> kept(G2.cols(), false);
      for (int k : keep_cols) kept[k] = true;
      const double cscale = 1.0 + c2.lpNorm<Eigen::Infinity>();
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
      if (r > 0) cod.compute(gk);
      for (int d = 0; d < G2.cols(); ++d) {
        if (kept[d]) continue;
        double implied = 0.0;
        if (r > 0) implied = ck.dot(cod.solve(Eigen::VectorXd(G2.col(d))));
        if (std::abs(c2[d] - implied) > 1e-9 * cscale) {
          red.unbounded = true;
          return red;
        }
      }
    }
  }
  Eigen::MatrixXd G3(m1, keep_cols.size());
  Eigen::VectorXd c3(keep_cols.size());
  Eigen::MatrixXd n_kept(nf, keep_cols.size());
  for (size_t k = 0; k < keep_cols.size(); ++k) {
    G3.col(k) = G2.col(keep_cols[k]);
    c3[k] = c2[keep_cols[k]];
    n_kept.col(k) = N.col(keep_cols[k]);
  }

  // Dependent rows. A row with a matrix entry used by no other remaining
  // row is independent of the rest; peel such rows off repeatedly.
  std::map<std::tuple<int, int, int>, std::vector<int>> col_rows;
  std::vector<std::vector<std::tuple<int, int, int>>> row_cols(m1);
  for (int r = 0; r < m1; ++r) {
    const auto& c = prob.constraints[with_entries[r]];
    for (const auto& e : c.entries) {
      if (e.value == 0.0) continue;
      auto key = std::make_tuple(e.block, e.row, e.col);
      auto& rows = col_rows[key];
      if (rows.empty() || rows.back() != r) rows.push_back(r);
      row_cols[r].push_back(key);
    }
  }
  std::vector<int> active_count(m1, 0);
  std::map<std::tuple<int, int, int>, int> remaining;
  for (const auto& [key, rows] : col_rows) remaining[key] = static_cast<int>(rows.size());
  std::vector<bool> independent(m1, false);
  std::vector<int> queue;
  auto has_private = [&](int r) {
    for (const auto& key : row_cols[r]) {
      if (remaining[key] == 1) return true;
    }
    return false;
  };
  for (int r = 0; r < m1; ++r) {
    if (has_private(r)) queue.push_back(r);
  }
  while (!queue.empty()) {
    const int r = queue.back();
    queue.pop_back();
    if (independent[r]) continue;
    independent[r] = true;
    for (const auto& key : row_cols[r]) {
      if (--remaining[key] == 1) {
        for (int other : col_rows[key]) {
          if (!independent[other]) queue.push_back(other);
        }
      }
    }
  }
  std::vector<int> rest;
  for (int r = 0; r < m1; ++r) {
    if (!independent[r]) rest.push_back(r);
  }
  std::vector<bool> keep_row(m1, true);
  if (!rest.empty()) {
    // Dense matrix over the columns these rows touch.
    std::map<std::tuple<int, int, int>, int> col_index;
    for (int r : rest) {
      for (const auto& key : row_cols[r]) col_index.try_emplace(key, static_cast<int>(col_index.size()));
    }
    const int nx = static_cast<int>(col_index.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rest.size(), nx + G3.cols());
    Eigen::VectorXd br(rest.size());
    for (size_t i = 0; i < rest.size(); ++i) {
      const auto& c = prob.constraints[with_entries[rest[i]]];
      for (const auto& e : c.entries) {
        a(i, col_index[std::make_tuple(e.block, e.row, e.col)]) +=
            (e.row == e.col ? 1.0 : 2.0) * e.value;
      }
      a.row(i).tail(G3.cols()) = G3.row(rest[i]);
      br[i] = b1[rest[i]];
    }
    int rank = 0;
    const std::vector<int> ind = IndependentRows(a, &rank);
    if (rank < static_cast<int>(rest.size())) {
      std::vector<bool> is_ind(rest.size(), false);
      for (int i : ind) is_ind[i] = true;
      Eigen::MatrixXd ak(ind.size(), a.cols());
      Eigen::VectorXd bk(ind.size());
      for (size_t k = 0; k < ind.size(); ++k) {
        ak.row(k) = a.row(ind[k]);
        bk[k] = br[ind[k]];
      }
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(ak.transpose());
      for (size_t i = 0; i < rest.size(); ++i) {
        if (is_ind[i]) continue;
        const Eigen::VectorXd alpha = cod.solve(Eigen::VectorXd(a.row(i).transpose()));
        if (std::abs(alpha.dot(bk) - br[i]) > 1e-8 * bscale) {
          red.infeasible = true;
          return red;
        }
        keep_row[rest[i]] = false;
      }
    }
  }

  std::vector<int> new_index(m1, -1);
  for (int r = 0; r < m1; ++r) {
    if (keep_row[r]) {
      new_index[r] = red.m++;
      red.kept_rows.push_back(with_entries[r]);
    }
  }
  red.b.resize(red.m);
  red.G.resize(red.m, G3.cols());
  for (int r = 0; r < m1; ++r) {
    if (new_index[r] < 0) continue;
    red.b[new_index[r]] = b1[r];
    red.G.row(new_index[r]) = G3.row(r);
  }
  red.c = c3;
  red.u0 = u0;
  red.n_kept = n_kept;
  red.block_entries.assign(prob.block_sizes.size(), {});
  for (int r = 0; r < m1; ++r) {
    if (new_index[r] < 0) continue;
    for (const auto& e : prob.constraints[with_entries[r]].entries) {
      if (e.value == 0.0) continue;
      red.block_entries[e.block].push_back({new_index[r], e.row, e.col, e.value});
    }
  }
  red.C.resize(prob.block_sizes.size());
  for (size_t k = 0; k < prob.block_sizes.size(); ++k) {
    red.C[k] = Eigen::MatrixXd::Zero(prob.block_sizes[k], prob.block_sizes[k]);
  }
  for (const auto& e : prob.objective) {
    red.C[e.block](e.row, e.col) += e.value;
    if (e.row != e.col) red.C[e.block](e.col, e.row) += e.value;
  }
  return red;
}

/// NT scaling data of one block: X = T diag(lambda) T^T, T^T Z T =
/// diag(lambda), W = T T^T.
struct Scaling {
  Eigen::MatrixXd t;
  Eigen::MatrixXd t_inv;
  Eigen::VectorXd lambda;
  Eigen::MatrixXd w;
};

bool ComputeScaling(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                    Scaling* s) {
  Eigen::LLT<Eigen::MatrixXd> llt(X);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::MatrixXd ltzl = L.transpose() * Z * L;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (ltzl + ltzl.transpose()));
  if (es.info() != Eigen::Success) return false;
  const Eigen::VectorXd lam2 = es.eigenvalues();
  if (lam2.minCoeff() <= 0.0) return false;
  s->lambda = lam2.cwiseSqrt();
  const Eigen::VectorXd inv_sqrt = s->lambda.cwiseSqrt().cwiseInverse();
  s->t = L * es.eigenvectors() * inv_sqrt.asDiagonal();
  // T^{-1} = diag(lambda^{1/2}) Q^T L^{-1}.
  const Eigen::MatrixXd linv =
      L.triangularView<Eigen::Lower>().solve(
          Eigen::MatrixXd::Identity(X.rows(), X.cols()));
  s->t_inv = s->lambda.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose() * linv;
  s->w = s->t * s->t.transpose();
  return true;
}

/// Largest step in [0, inf) keeping diag(lambda) + alpha D positive
/// semidefinite.
double MaxStep(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& d) {
  const Eigen::VectorXd is = lambda.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd k = is.asDiagonal() * d * is.asDiagonal();
  k = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (lo >= 0.0) return kInf;
  return -1.0 / lo;
}

class InteriorPoint {
 public:
  InteriorPoint(const Reduced& red, const SolverOptions& opts)
      : red_(red), opts_(opts), nb_(static_cast<int>(red.block_sizes.size())),
        m_(red.m), nv_(static_cast<int>(red.G.cols())) {
    BuildComponents();
  }

  SdpStatus Run(SdpResult* result);

  std::vector<Eigen::MatrixXd> X, Z;
  Eigen::VectorXd y, u;

 private:
  void BuildComponents();
  Eigen::VectorXd ApplyA(const std::vector<Eigen::MatrixXd>& x) const;
  std::vector<Eigen::MatrixXd> ApplyAT(const Eigen::VectorXd& v) const;
  bool FactorSchur(const std::vector<Scaling>& sc);
  Eigen::VectorXd SolveM(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd MultiplyM(const Eigen::VectorXd& v) const;
  bool SolveNewton(const std::vector<Scaling>& sc,
                   const std::vector<Eigen::MatrixXd>& rc,
                   const std::vector<Eigen::MatrixXd>& rd,
                   const Eigen::VectorXd& rp, const Eigen::VectorXd& rf,
                   std::vector<Eigen::MatrixXd>* dx, Eigen::VectorXd* dy,
                   std::vector<Eigen::MatrixXd>* dz, Eigen::VectorXd* du) const;
  void InitialPoint();

  const Reduced& red_;
  SolverOptions opts_;
  int nb_, m_, nv_;
  int total_dim_{0};
  // Rows grouped into components coupled through shared blocks.
  std::vector<std::vector<int>> comp_rows_;
  std::vector<int> row_comp_, row_local_;
  std::vector<int> block_comp_;
  std::vector<Eigen::MatrixXd> comp_m_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> comp_llt_;
  Eigen::MatrixXd minv_g_;
  Eigen::LDLT<Eigen::MatrixXd> s_ldlt_;
};

void InteriorPoint::BuildComponents() {
  std::vector<int> parent(m_);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  for (int k = 0; k < nb_; ++k) {
    const auto& ents = red_.block_entries[k];
    for (size_t e = 1; e < ents.size(); ++e) {
      const int a = find(ents[0].row), b = find(ents[e].row);
      if (a != b) parent[a] = b;
    }
  }
  std::map<int, int> root_comp;
  row_comp_.assign(m_, -1);
  row_local_.assign(m_, -1);
  for (int i = 0; i < m_; ++i) {
    auto [it, inserted] = root_comp.try_emplace(find(i), static_cast<int>(comp_rows_.size()));
    if (inserted) comp_rows_.emplace_back();
    row_comp_[i] = it->second;
    row_local_[i] = static_cast<int>(comp_rows_[it->second].size());
    comp_rows_[it->second].push_back(i);
  }
  block_comp_.assign(nb_, -1);
  for (int k = 0; k < nb_; ++k) {
    if (!red_.block_entries[k].empty()) {
      block_comp_[k] = row_comp_[red_.block_entries[k][0].row];
    }
  }
  total_dim_ = 0;
  for (int s : red_.block_sizes) total_dim_ += s;
}

Eigen::VectorXd InteriorPoint::ApplyA(const std::vector<Eigen::MatrixXd>& x) const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(m_);
  for (int k = 0; k < nb_; ++k) {
    const auto& Xk = x[k];
    for (const auto& e : red_.block_entries[k]) {
      r[e.row] += (e.p == e.q ? 1.0 : 2.0) * e.v * Xk(e.p, e.q);
    }
  }
  return r;
}

std::vector<Eigen::MatrixXd> InteriorPoint::ApplyAT(const Eigen::VectorXd& v) const {
  std::vector<Eigen::MatrixXd> r(nb_);
  for (int k = 0; k < nb_; ++k) {
    r[k] = Eigen::MatrixXd::Zero(red_.block_sizes[k], red_.block_sizes[k]);
    for (const auto& e : red_.block_entries[k]) {
      r[k](e.p, e.q) += v[e.row] * e.v;
      if (e.p != e.q) r[k](e.q, e.p) += v[e.row] * e.v;
    }
  }
  return r;
}

bool InteriorPoint::FactorSchur(const std::vector<Scaling>& sc) {
  const int nc = static_cast<int>(comp_rows_.size());
  comp_m_.resize(nc);
  for (int c = 0; c < nc; ++c) {
    const int sz = static_cast<int>(comp_rows_[c].size());
    comp_m_[c].setZero(sz, sz);
  }
  for (int k = 0; k < nb_; ++k) {
    const auto& ents = red_.block_entries[k];
    if (ents.empty()) continue;
    const Eigen::MatrixXd& W = sc[k].w;
    Eigen::MatrixXd& M = comp_m_[block_comp_[k]];
    // <S_e, W S_f W> = ce cf 2 (W_qr W_sp + W_qs W_rp) for
    // S_e = ce (e_p e_q^T + e_q e_p^T), with ce = v / 2 on the diagonal.
    const size_t ne = ents.size();
    for (size_t a = 0; a < ne; ++a) {
      const Entry& ea = ents[a];
      const double ca = (ea.p == ea.q) ? 0.5 * ea.v : ea.v;
      const int ia = row_local_[ea.row];
      for (size_t b = a; b < ne; ++b) {
        const Entry& eb = ents[b];
        const double cb = (eb.p == eb.q) ? 0.5 * eb.v : eb.v;
        const double val = 2.0 * ca * cb *
                           (W(ea.q, eb.p) * W(eb.q, ea.p) + W(ea.q, eb.q) * W(eb.p, ea.p));
        const int ib = row_local_[eb.row];
        if (a == b) {
          M(ia, ia) += val;
        } else if (ia == ib) {
          M(ia, ia) += 2.0 * val;
        } else {
          M(ia, ib) += val;
          M(ib, ia) += val;
        }
      }
    }
  }
  comp_llt_.resize(nc);
  for (int c = 0; c < nc; ++c) {
    comp_llt_[c].compute(comp_m_[c]);
    if (comp_llt_[c].info() != Eigen::Success) {
      const double reg = 1e-13 * comp_m_[c].diagonal().cwiseAbs().maxCoeff();
      comp_m_[c].diagonal().array() += reg;
      comp_llt_[c].compute(comp_m_[c]);
      if (comp_llt_[c].info() != Eigen::Success) return false;
    }
  }
  if (nv_ > 0) {
    minv_g_.resize(m_, nv_);
    for (int j = 0; j < nv_; ++j) minv_g_.col(j) = SolveM(red_.G.col(j));
    Eigen::MatrixXd s = red_.G.transpose() * minv_g_;
    s = 0.5 * (s + s.transpose());
    s_ldlt_.compute(s);
    if (s_ldlt_.info() != Eigen::Success) return false;
  }
  return true;
}

Eigen::VectorXd InteriorPoint::MultiplyM(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(m_);
  for (size_t c = 0; c < comp_rows_.size(); ++c) {
    const auto& rows = comp_rows_[c];
    Eigen::VectorXd local(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) local[i] = v[rows[i]];
    local = comp_m_[c] * local;
    for (size_t i = 0; i < rows.size(); ++i) out[rows[i]] = local[i];
  }
  return out;
}

Eigen::VectorXd InteriorPoint::SolveM(const Eigen::VectorXd& rhs) const {
  Eigen::VectorXd out(m_);
  for (size_t c = 0; c < comp_rows_.size(); ++c) {
    const auto& rows = comp_rows_[c];
    Eigen::VectorXd local(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) local[i] = rhs[rows[i]];
    local = comp_llt_[c].solve(local);
    for (size_t i = 0; i < rows.size(); ++i) out[rows[i]] = local[i];
  }
  return out;
}

bool InteriorPoint::SolveNewton(const std::vector<Scaling>& sc,
                                const std::vector<Eigen::MatrixXd>& rc,
                                const std::vector<Eigen::MatrixXd>& rd,
                                const Eigen::VectorXd& rp,
                                const Eigen::VectorXd& rf,
                                std::vector<Eigen::MatrixXd>* dx,
                                Eigen::VectorXd* dy,
                                std::vector<Eigen::MatrixXd>* dz,
                                Eigen::VectorXd* du) const {
  std::vector<Eigen::MatrixXd> tmp(nb_);
  for (int k = 0; k < nb_; ++k) tmp[k] = rc[k] - sc[k].w * rd[k] * sc[k].w;
  const Eigen::VectorXd h = rp - ApplyA(tmp);
  if (nv_ > 0) {
    // [M G; G^T 0] [dy; du] = [h; rf] by block elimination, with two rounds
    // of iterative refinement.
    auto solve = [&](const Eigen::VectorXd& r1, const Eigen::VectorXd& r2,
                     Eigen::VectorXd* y, Eigen::VectorXd* v) {
      const Eigen::VectorXd minv_r1 = SolveM(r1);
      *v = s_ldlt_.solve(red_.G.transpose() * minv_r1 - r2);
      *y = minv_r1 - minv_g_ * (*v);
    };
    solve(h, rf, dy, du);
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd r1 = h - MultiplyM(*dy) - red_.G * (*du);
      const Eigen::VectorXd r2 = rf - red_.G.transpose() * (*dy);
      Eigen::VectorXd cy, cu;
      solve(r1, r2, &cy, &cu);
      *dy += cy;
      *du += cu;
    }
  } else {
    du->resize(0);
    *dy = SolveM(h);
  }
  if (!dy->allFinite() || !du->allFinite()) return false;
  const std::vector<Eigen::MatrixXd> aty = ApplyAT(*dy);
  dz->resize(nb_);
  dx->resize(nb_);
  for (int k = 0; k < nb_; ++k) {
    (*dz)[k] = rd[k] - aty[k];
    (*dx)[k] = rc[k] - sc[k].w * (*dz)[k] * sc[k].w;
    (*dx)[k] = 0.5 * ((*dx)[k] + (*dx)[k].transpose());
  }
  return true;
}

void InteriorPoint::InitialPoint() {
  X.resize(nb_);
  Z.resize(nb_);
  std::vector<double> row_norm2(m_, 0.0);
  std::vector<std::map<int, double>> block_row_norm2(nb_);
  for (int k = 0; k < nb_; ++k) {
    for (const auto& e : red_.block_entries[k]) {
      const double w = (e.p == e.q ? 1.0 : 2.0) * e.v * e.v;
      block_row_norm2[k][e.row] += w;
    }
  }
  for (int k = 0; k < nb_; ++k) {
    const double n = red_.block_sizes[k];
    double xi = std::max(10.0, std::sqrt(n));
    double eta = std::max(10.0, std::sqrt(n));
    for (const auto& [row, nrm2] : block_row_norm2[k]) {
      const double nrm = std::sqrt(nrm2);
      xi = std::max(xi, n * (1.0 + std::abs(red_.b[row])) / (1.0 + nrm));
      eta = std::max(eta, nrm);
    }
    eta = std::max(eta, red_.C[k].norm());
    X[k] = xi * Eigen::MatrixXd::Identity(n, n);
    Z[k] = eta * Eigen::MatrixXd::Identity(n, n);
  }
  y = Eigen::VectorXd::Zero(m_);
  u = Eigen::VectorXd::Zero(nv_);
}

double Inner(const std::vector<Eigen::MatrixXd>& a,
             const std::vector<Eigen::MatrixXd>& b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += (a[k].array() * b[k].array()).sum();
  return s;
}

double FroNorm(const std::vector<Eigen::MatrixXd>& a) {
  double s = 0.0;
  for (const auto& m : a) s += m.squaredNorm();
  return std::sqrt(s);
}

SdpStatus InteriorPoint::Run(SdpResult* result) {
  InitialPoint();
  const double norm_b = red_.b.norm();
  const double norm_c = std::sqrt(FroNorm(red_.C) * FroNorm(red_.C) + red_.c.squaredNorm());
  SdpStatus status = SdpStatus::kMaxIterations;
  std::vector<Scaling> sc(nb_);
  int stalls = 0;
  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd rp = red_.b - ApplyA(X) - red_.G * u;
    const std::vector<Eigen::MatrixXd> aty = ApplyAT(y);
    std::vector<Eigen::MatrixXd> rd(nb_);
    for (int k = 0; k < nb_; ++k) rd[k] = red_.C[k] - aty[k] - Z[k];
    const Eigen::VectorXd rf = red_.c - red_.G.transpose() * y;
    const double xz = Inner(X, Z);
    const double mu = xz / std::max(1, total_dim_);
    const double pobj = Inner(red_.C, X) + red_.c.dot(u);
    const double dobj = red_.b.dot(y);
    const double relp = rp.norm() / (1.0 + norm_b);
    const double reld = (FroNorm(rd) + rf.norm()) / (1.0 + norm_c);
    const double relgap = std::abs(xz) / (1.0 + std::abs(pobj) + std::abs(dobj));
    result->iterations = iter;
    result->primal_objective = pobj;
    result->dual_objective = dobj;
    result->rel_primal_infeasibility = relp;
    result->rel_dual_infeasibility = reld;
    result->rel_gap = relgap;
    result->gap_history.push_back(relgap);
    if (opts_.verbose) {
      std::fprintf(stderr, "%3d  pobj % .8e  dobj % .8e  pinf %.2e  dinf %.2e  gap %.2e\n",
                   iter, pobj, dobj, relp, reld, relgap);
    }
    if (relp <= opts_.tol_feas && reld <= opts_.tol_feas && relgap <= opts_.tol_gap) {
      status = SdpStatus::kOptimal;
      break;
    }
    if (relp <= opts_.tol_feas && pobj <= opts_.primal_target) {
      status = SdpStatus::kPrimalTargetReached;
      break;
    }
    if (reld <= opts_.tol_feas && dobj >= opts_.dual_target) {
      status = SdpStatus::kDualTargetReached;
      break;
    }
    // Divergence: an unbounded primal objective shows as a growing primal
    // iterate with small primal residual, and vice versa.
    const double xnorm = FroNorm(X) + u.norm();
    const double znorm = FroNorm(Z) + y.norm();
    if (xnorm > 1e10 * (1.0 + norm_b) && relp < 1e-6 && pobj < -1e8 * (1.0 + norm_c)) {
      status = SdpStatus::kDualInfeasible;
      break;
    }
    if (znorm > 1e10 * (1.0 + norm_c) && reld < 1e-6 && dobj > 1e8 * (1.0 + norm_b)) {
      status = SdpStatus::kPrimalInfeasible;
      break;
    }
    if (iter >= opts_.max_iters) {
      status = SdpStatus::kMaxIterations;
      break;
    }
    bool ok = true;
    for (int k = 0; k < nb_ && ok; ++k) ok = ComputeScaling(X[k], Z[k], &sc[k]);
    if (!ok || !FactorSchur(sc)) {
      status = SdpStatus::kNumericalFailure;
      break;
    }
    // Predictor: complementarity target 0.
    std::vector<Eigen::MatrixXd> rc(nb_);
    for (int k = 0; k < nb_; ++k) rc[k] = -X[k];
    std::vector<Eigen::MatrixXd> dx, dz;
    Eigen::VectorXd dy, du;
    if (!SolveNewton(sc, rc, rd, rp, rf, &dx, &dy, &dz, &du)) {
      status = SdpStatus::kNumericalFailure;
      break;
    }
    std::vector<Eigen::MatrixXd> sdx(nb_), sdz(nb_);
    double ap = 1.0, ad = 1.0;
    for (int k = 0; k < nb_; ++k) {
      sdx[k] = sc[k].t_inv * dx[k] * sc[k].t_inv.transpose();
      sdz[k] = sc[k].t.transpose() * dz[k] * sc[k].t;
      ap = std::min(ap, MaxStep(sc[k].lambda, sdx[k]));
      ad = std::min(ad, MaxStep(sc[k].lambda, sdz[k]));
    }
    double mu_aff = 0.0;
    for (int k = 0; k < nb_; ++k) {
      mu_aff += ((X[k] + ap * dx[k]).array() * (Z[k] + ad * dz[k]).array()).sum();
    }
    mu_aff /= std::max(1, total_dim_);
    const double expon = std::max(1.0, 3.0 * std::min(ap, ad) * std::min(ap, ad));
    const double sigma = std::min(1.0, std::pow(std::max(0.0, mu_aff) / mu, expon));
    // Corrector.
    for (int k = 0; k < nb_; ++k) {
      const Eigen::VectorXd& lam = sc[k].lambda;
      const int n = static_cast<int>(lam.size());
      Eigen::MatrixXd prod = sdx[k] * sdz[k];
      Eigen::MatrixXd rhs = -0.5 * (prod + prod.transpose());
      for (int i = 0; i < n; ++i) rhs(i, i) += sigma * mu - lam[i] * lam[i];
      Eigen::MatrixXd yk(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) yk(i, j) = 2.0 * rhs(i, j) / (lam[i] + lam[j]);
      }
      rc[k] = sc[k].t * yk * sc[k].t.transpose();
    }
    if (!SolveNewton(sc, rc, rd, rp, rf, &dx, &dy, &dz, &du)) {
      status = SdpStatus::kNumericalFailure;
      break;
    }
    double max_p = kInf, max_d = kInf;
    for (int k = 0; k < nb_; ++k) {
      max_p = std::min(max_p, MaxStep(sc[k].lambda, sc[k].t_inv * dx[k] * sc[k].t_inv.transpose()));
      max_d = std::min(max_d, MaxStep(sc[k].lambda, sc[k].t.transpose() * dz[k] * sc[k].t));
    }
    const double gamma = 0.9 + 0.09 * std::min(std::min(ap, ad), 1.0);
    const double step_p = std::min(1.0, gamma * max_p);
    const double step_d = std::min(1.0, gamma * max_d);
    if (step_p < 1e-10 && step_d < 1e-10) {
      if (++stalls >= 3) {
        status = SdpStatus::kNumericalFailure;
        break;
      }
    } else {
      stalls = 0;
    }
    for (int k = 0; k < nb_; ++k) {
      X[k] += step_p * dx[k];
      Z[k] += step_d * dz[k];
      X[k] = 0.5 * (X[k] + X[k].transpose());
      Z[k] = 0.5 * (Z[k] + Z[k].transpose());
    }
    u += step_p * du;
    y += step_d * dy;
  }
  return status;
}

}  // namespace

SdpResult SolveSdp(const SdpProblem& prob, const SolverOptions& opts) {
  prob.Validate();
  SdpResult result;
  const Reduced red = Presolve(prob);
  const int nb = static_cast<int>(prob.block_sizes.size());
  auto zero_solution = [&]() {
    result.solution.x.clear();
    result.solution.z.clear();
    for (int k = 0; k < nb; ++k) {
      result.solution.x.push_back(Eigen::MatrixXd::Zero(prob.block_sizes[k], prob.block_sizes[k]));
      result.solution.z.push_back(Eigen::MatrixXd::Zero(prob.block_sizes[k], prob.block_sizes[k]));
    }
    result.solution.u = Eigen::VectorXd::Zero(prob.num_free);
    result.solution.y = Eigen::VectorXd::Zero(prob.num_constraints());
  };
  if (red.infeasible) {
    zero_solution();
    result.status = SdpStatus::kPrimalInfeasible;
    return result;
  }
  if (red.unbounded) {
    zero_solution();
    result.status = SdpStatus::kDualInfeasible;
    return result;
  }
  if (red.m == 0) {
    // No coupling equalities: the primal is bounded only if C >= 0 and the
    // free objective vanishes.
    zero_solution();
    bool bounded = red.c.lpNorm<Eigen::Infinity>() == 0.0;
    for (int k = 0; k < nb && bounded; ++k) {
      if (red.C[k].size() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(red.C[k], Eigen::EigenvaluesOnly);
        bounded = es.eigenvalues().minCoeff() >= 0.0;
      }
    }
    result.solution.u = red.u0;
    for (int k = 0; k < nb; ++k) result.solution.z[k] = red.C[k];
    result.status = bounded ? SdpStatus::kOptimal : SdpStatus::kDualInfeasible;
    return result;
  }
  // The reduced objective omits the constant g . u0.
  double offset = 0.0;
  for (const auto& [k, g] : prob.free_objective) offset += g * red.u0[k];
  SolverOptions reduced_opts = opts;
  reduced_opts.primal_target -= offset;
  reduced_opts.dual_target -= offset;
  InteriorPoint ipm(red, reduced_opts);
  result.status = ipm.Run(&result);
  result.dual_objective += offset;
  result.solution.x = ipm.X;
  result.solution.z = ipm.Z;
  result.solution.u = red.u0 + red.n_kept * ipm.u;
  result.solution.y = Eigen::VectorXd::Zero(prob.num_constraints());
  for (int i = 0; i < red.m; ++i) result.solution.y[red.kept_rows[i]] = ipm.y[i];
  // Objective in terms of the original data.
  double pobj = 0.0;
  for (const auto& e : prob.objective) {
    pobj += (e.row == e.col ? 1.0 : 2.0) * e.value * result.solution.x[e.block](e.row, e.col);
  }
  for (const auto& [k, g] : prob.free_objective) pobj += g * result.solution.u[k];
  result.primal_objective = pobj;
  return result;
}

SlackResult MaximizeSlack(const SdpProblem& prob, const SolverOptions& opts) {
  prob.Validate();
  SdpProblem aug = prob;
  aug.objective.clear();
  aug.free_objective.clear();
  const int t_index = prob.num_free;
  aug.num_free = prob.num_free + 1;
  // X = X' + t I: each constraint gains t <A_i, I>.
  for (auto& c : aug.constraints) {
    double tr = 0.0;
    for (const auto& e : c.entries) {
      if (e.row == e.col) tr += e.value;
    }
    if (tr != 0.0) c.free_terms.emplace_back(t_index, tr);
  }
  aug.free_objective.emplace_back(t_index, -1.0);
  const SdpResult r = SolveSdp(aug, opts);
  SlackResult out;
  out.iterations = r.iterations;
  out.solver_status = r.status;
  out.t = r.solution.u.size() > t_index ? r.solution.u[t_index] : 0.0;
  out.u = r.solution.u.head(prob.num_free);
  out.x = r.solution.x;
  for (auto& X : out.x) X += out.t * Eigen::MatrixXd::Identity(X.rows(), X.cols());
  if (r.rel_dual_infeasibility <= opts.tol_feas) out.t_upper = -r.dual_objective;
  switch (r.status) {
    case SdpStatus::kOptimal: out.status = SlackStatus::kBounded; break;
    case SdpStatus::kDualInfeasible: out.status = SlackStatus::kUnbounded; break;
    case SdpStatus::kPrimalTargetReached:
    case SdpStatus::kDualTargetReached: out.status = SlackStatus::kEarlyStop; break;
    default: out.status = SlackStatus::kFailed; break;
  }
  return out;
}

SolveOutcome Solve(const SdpProblem& prob, const SolverOptions& opts) {
  SolverOptions slack_opts = opts;
  const double margin = 1e3 * opts.tol_feas;
  slack_opts.primal_target = std::max(opts.primal_target, -margin);
  slack_opts.dual_target = std::min(opts.dual_target, margin);
  const SlackResult s = MaximizeSlack(prob, slack_opts);
  SolveOutcome out;
  out.x = s.x;
  out.u = s.u;
  out.iterations = s.iterations;
  out.slack = s.t;
  out.slack_unbounded = (s.status == SlackStatus::kUnbounded);
  if (out.slack_unbounded) out.slack = kInf;
  out.max_residual = MaxEqualityResidual(prob, s.x, s.u);
  out.max_relative_residual = MaxRelativeEqualityResidual(prob, s.x, s.u);
  out.min_eigenvalue = MinBlockEigenvalue(s.x);
  const bool checks_pass = out.min_eigenvalue >= -opts.tol_feas &&
                           out.max_relative_residual <= opts.tol_feas;
  const bool dual_certifies = s.t_upper < -opts.tol_feas;
  switch (s.status) {
    case SlackStatus::kBounded:
      if (s.t < -opts.tol_feas) {
        out.status = FeasibilityStatus::kInfeasible;
      } else {
        out.status = checks_pass ? FeasibilityStatus::kFeasible
                                 : FeasibilityStatus::kIndeterminate;
      }
      break;
    case SlackStatus::kUnbounded:
      out.status = FeasibilityStatus::kFeasible;
      break;
    case SlackStatus::kEarlyStop:
      if (s.solver_status == SdpStatus::kDualTargetReached) {
        out.status = FeasibilityStatus::kInfeasible;
        out.slack = s.t_upper;
      } else {
        out.status = checks_pass ? FeasibilityStatus::kFeasible
                                 : FeasibilityStatus::kIndeterminate;
      }
      break;
    case SlackStatus::kFailed:
      if (s.solver_status == SdpStatus::kPrimalInfeasible || dual_certifies) {
        out.status = FeasibilityStatus::kInfeasible;
      } else {
        out.status = (checks_pass && s.t >= 0.0) ? FeasibilityStatus::kFeasible
                                                 : FeasibilityStatus::kIndeterminate;
      }
      break;
  }
  return out;
}

}  // namespace flowsos
