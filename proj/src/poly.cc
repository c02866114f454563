#include "flowsos/poly.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace flowsos {

Monomial Monomial::One(int num_vars) {
  if (num_vars < 0) throw std::invalid_argument("Monomial: negative size");
  return Monomial(std::vector<int>(num_vars, 0));
}

Monomial::Monomial(std::vector<int> exponents)
    : exponents_(std::move(exponents)) {
  degree_ = 0;
  for (int e : exponents_) {
    if (e < 0) throw std::invalid_argument("Monomial: negative exponent");
    degree_ += e;
  }
}

Monomial Monomial::Variable(int num_vars, int index, int power) {
  if (index < 0 || index >= num_vars) {
    throw std::invalid_argument("Monomial::Variable: index out of range");
  }
  std::vector<int> e(num_vars, 0);
  e[index] = power;
  return Monomial(std::move(e));
}

Monomial Monomial::operator*(const Monomial& other) const {
  if (other.num_vars() != num_vars()) {
    throw std::invalid_argument("Monomial: variable-count mismatch");
  }
  Monomial r = *this;
  for (int i = 0; i < num_vars(); ++i) r.exponents_[i] += other.exponents_[i];
  r.degree_ = degree_ + other.degree_;
  return r;
}

Monomial Monomial::DivideByVariable(int i) const {
  if (exponents_.at(i) == 0) {
    throw std::invalid_argument("Monomial: division by absent variable");
  }
  Monomial r = *this;
  --r.exponents_[i];
  --r.degree_;
  return r;
}

double Monomial::Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != num_vars()) {
    throw std::invalid_argument("Monomial::Evaluate: size mismatch");
  }
  double v = 1.0;
  for (int i = 0; i < num_vars(); ++i) {
    for (int k = 0; k < exponents_[i]; ++k) v *= x[i];
  }
  return v;
}

std::string Monomial::ToString(const std::string& prefix) const {
  std::ostringstream os;
  bool first = true;
  for (int i = 0; i < num_vars(); ++i) {
    if (exponents_[i] == 0) continue;
    if (!first) os << "*";
    first = false;
    os << prefix << (i + 1);
    if (exponents_[i] > 1) os << "^" << exponents_[i];
  }
  if (first) return "1";
  return os.str();
}

bool GradedLexLess::operator()(const Monomial& lhs, const Monomial& rhs) const {
  if (lhs.degree() != rhs.degree()) return lhs.degree() < rhs.degree();
  const auto& a = lhs.exponents();
  const auto& b = rhs.exponents();
  const size_t n = std::min(a.size(), b.size());
  for (size_t i = 0; i < n; ++i) {
    if (a[i] != b[i]) return a[i] > b[i];
  }
  return a.size() < b.size();
}

AffineExpr AffineExpr::Variable(int index, double coefficient) {
  AffineExpr e;
  if (coefficient != 0.0) e.terms_.emplace_back(index, coefficient);
  return e;
}

double AffineExpr::coefficient(int index) const {
  auto it = std::lower_bound(
      terms_.begin(), terms_.end(), index,
      [](const std::pair<int, double>& t, int i) { return t.first < i; });
  return (it != terms_.end() && it->first == index) ? it->second : 0.0;
}

double AffineExpr::Evaluate(
    const Eigen::Ref<const Eigen::VectorXd>& values) const {
  double v = constant_;
  for (const auto& [i, c] : terms_) {
    if (i >= values.size()) {
      throw std::invalid_argument("AffineExpr::Evaluate: index out of range");
    }
    v += c * values[i];
  }
  return v;
}

namespace {

std::vector<std::pair<int, double>> MergeTerms(
    const std::vector<std::pair<int, double>>& a,
    const std::vector<std::pair<int, double>>& b, double sign) {
  std::vector<std::pair<int, double>> r;
  r.reserve(a.size() + b.size());
  size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      r.push_back(a[i++]);
    } else if (i == a.size() || b[j].first < a[i].first) {
      r.emplace_back(b[j].first, sign * b[j].second);
      ++j;
    } else {
      const double c = a[i].second + sign * b[j].second;
      if (c != 0.0) r.emplace_back(a[i].first, c);
      ++i;
      ++j;
    }
  }
  return r;
}

}  // namespace

AffineExpr& AffineExpr::operator+=(const AffineExpr& other) {
  constant_ += other.constant_;
  if (!other.terms_.empty()) terms_ = MergeTerms(terms_, other.terms_, 1.0);
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& other) {
  constant_ -= other.constant_;
  if (!other.terms_.empty()) terms_ = MergeTerms(terms_, other.terms_, -1.0);
  return *this;
}

AffineExpr& AffineExpr::operator*=(double s) {
  constant_ *= s;
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& t : terms_) t.second *= s;
  return *this;
}

AffineExpr AffineExpr::operator-() const {
  AffineExpr r = *this;
  r *= -1.0;
  return r;
}

ParamPoly ToParamPoly(const MultiPoly& p) {
  ParamPoly r(p.num_vars());
  for (const auto& [m, c] : p.terms()) r.AddTerm(m, AffineExpr(c));
  return r;
}

MultiPoly Substitute(const ParamPoly& p,
                     const Eigen::Ref<const Eigen::VectorXd>& values) {
  MultiPoly r(p.num_vars());
  for (const auto& [m, c] : p.terms()) r.AddTerm(m, c.Evaluate(values));
  return r;
}

double Evaluate(const MultiPoly& p, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != p.num_vars()) {
    throw std::invalid_argument("Evaluate: size mismatch");
  }
  double v = 0.0;
  for (const auto& [m, c] : p.terms()) v += c * m.Evaluate(x);
  return v;
}

double MaxAbsCoefficient(const MultiPoly& p) {
  double v = 0.0;
  for (const auto& [m, c] : p.terms()) v = std::max(v, std::abs(c));
  return v;
}

std::string ToString(const MultiPoly& p, const std::string& prefix) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  os.precision(6);
  bool first = true;
  for (const auto& [m, c] : p.terms()) {
    double mag = std::abs(c);
    if (first) {
      if (c < 0) os << "-";
    } else {
      os << (c < 0 ? " - " : " + ");
    }
    first = false;
    if (m.degree() == 0) {
      os << mag;
    } else {
      if (mag != 1.0) os << mag << "*";
      os << m.ToString(prefix);
    }
  }
  return os.str();
}

long long BinomialCount(int n, int d) {
  // C(n + d, d) by the multiplicative formula; every prefix is an integer.
  long long r = 1;
  for (int k = 1; k <= d; ++k) r = r * (n + k) / k;
  return r;
}

MonomialBasis MakeMonomialBasis(int n, int d, bool include_constant) {
  if (n < 1) throw std::invalid_argument("MakeMonomialBasis: n < 1");
  if (d < 0) throw std::invalid_argument("MakeMonomialBasis: d < 0");
  MonomialBasis basis;
  basis.n = n;
  basis.d = d;
  basis.include_constant = include_constant;
  for (int deg = include_constant ? 0 : 1; deg <= d; ++deg) {
    // Enumerate exponent vectors of total degree deg with larger leading
    // exponents first.
    std::vector<int> e(n, 0);
    std::function<void(int, int)> rec = [&](int i, int remaining) {
      if (i == n - 1) {
        e[i] = remaining;
        basis.entries.emplace_back(e);
        return;
      }
      for (int k = remaining; k >= 0; --k) {
        e[i] = k;
        rec(i + 1, remaining - k);
      }
      e[i] = 0;
    };
    rec(0, deg);
  }
  return basis;
}

double GramConstraintSystem::MaxResidual(const Eigen::MatrixXd& H,
                                         const Eigen::VectorXd& x) const {
  double worst = 0.0;
  for (const auto& eq : equalities) {
    double lhs = 0.0;
    for (const auto& e : eq.entries) lhs += e.weight * H(e.row, e.col);
    for (const auto& [k, c] : eq.free_terms) lhs -= c * x[k];
    worst = std::max(worst, std::abs(lhs - eq.target));
  }
  return worst;
}

namespace {

struct MonomialHash {
  size_t operator()(const Monomial& m) const {
    size_t h = 1469598103934665603ull;
    for (int e : m.exponents()) h = (h ^ static_cast<size_t>(e)) * 1099511628211ull;
    return h;
  }
};

}  // namespace

GramConstraintSystem GramParametrize(const ParamPoly& target,
                                     const MonomialBasis& basis,
                                     const GramOptions& options) {
  if (target.num_vars() != basis.n) {
    throw std::invalid_argument("GramParametrize: variable-count mismatch");
  }
  const int nb = basis.size();
  if (!options.block_of.empty() &&
      static_cast<int>(options.block_of.size()) != nb) {
    throw std::invalid_argument("GramParametrize: block label size mismatch");
  }
  if (target.degree() > 2 * basis.d) {
    throw std::invalid_argument("GramParametrize: target degree exceeds 2d");
  }
  GramConstraintSystem sys;
  sys.basis = basis;
  std::unordered_map<Monomial, int, MonomialHash> row_of;
  std::vector<GramEquality>& eqs = sys.equalities;
  for (int i = 0; i < nb; ++i) {
    for (int j = i; j < nb; ++j) {
      if (!options.block_of.empty() &&
          options.block_of[i] != options.block_of[j]) {
        continue;
      }
      Monomial m = basis.entries[i] * basis.entries[j];
      auto [it, inserted] = row_of.try_emplace(m, static_cast<int>(eqs.size()));
      if (inserted) {
        GramEquality eq;
        eq.monomial = m;
        eqs.push_back(std::move(eq));
      }
      eqs[it->second].entries.push_back({i, j, i == j ? 1.0 : 2.0});
    }
  }
  for (const auto& [m, c] : target.terms()) {
    auto it = row_of.find(m);
    if (it == row_of.end()) {
      if (c.is_constant()) {
        if (std::abs(c.constant()) <= options.drop_tolerance) continue;
        throw std::invalid_argument(
            "GramParametrize: target monomial " + m.ToString() +
            " is not a product of two basis entries");
      }
      GramEquality eq;
      eq.monomial = m;
      row_of.emplace(m, static_cast<int>(eqs.size()));
      eqs.push_back(std::move(eq));
      it = row_of.find(m);
    }
    GramEquality& eq = eqs[it->second];
    eq.target = c.constant();
    eq.free_terms = c.terms();
  }
  std::sort(eqs.begin(), eqs.end(),
            [](const GramEquality& a, const GramEquality& b) {
              return GradedLexLess()(a.monomial, b.monomial);
            });
  return sys;
}

GramConstraintSystem GramParametrize(const MultiPoly& target,
                                     const MonomialBasis& basis,
                                     const GramOptions& options) {
  return GramParametrize(ToParamPoly(target), basis, options);
}

MultiPoly GramQuadraticForm(const MonomialBasis& basis,
                            const Eigen::MatrixXd& H) {
  const int nb = basis.size();
  if (H.rows() != nb || H.cols() != nb) {
    throw std::invalid_argument("GramQuadraticForm: size mismatch");
  }
  MultiPoly r(basis.n);
  for (int i = 0; i < nb; ++i) {
    for (int j = i; j < nb; ++j) {
      const double c = (i == j) ? H(i, i) : H(i, j) + H(j, i);
      if (c != 0.0) r.AddTerm(basis.entries[i] * basis.entries[j], c);
    }
  }
  return r;
}

}  // namespace flowsos
