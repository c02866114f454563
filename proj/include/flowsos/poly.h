#pragma once

#include <concepts>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace flowsos {

/// A monomial x_1^{e_1} ... x_n^{e_n} over n real variables.
class Monomial {
 public:
  Monomial() = default;

  /// @throws std::invalid_argument if any exponent is negative.
  explicit Monomial(std::vector<int> exponents);

  /// The constant monomial over @p num_vars variables.
  /// @throws std::invalid_argument if num_vars < 0.
  static Monomial One(int num_vars);

  /// Returns x_index^power over @p num_vars variables.
  static Monomial Variable(int num_vars, int index, int power = 1);

  int num_vars() const { return static_cast<int>(exponents_.size()); }
  int degree() const { return degree_; }
  int exponent(int i) const { return exponents_[i]; }
  const std::vector<int>& exponents() const { return exponents_; }

  Monomial operator*(const Monomial& other) const;
  bool operator==(const Monomial& other) const {
    return exponents_ == other.exponents_;
  }

  /// Returns this monomial divided by x_i, or throws if exponent(i) == 0.
  Monomial DivideByVariable(int i) const;

  double Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Formats as e.g. "a1^2*a3", or "1" for the constant monomial.
  std::string ToString(const std::string& prefix = "a") const;

 private:
  std::vector<int> exponents_;
  int degree_{0};
};

/// Graded lexicographic order: lower total degree first; within a degree the
/// exponent vector with the larger leading exponent comes first.
struct GradedLexLess {
  bool operator()(const Monomial& lhs, const Monomial& rhs) const;
};

/// An affine expression c_0 + sum_k c_k x_k over decision variables x.
class AffineExpr {
 public:
  AffineExpr() = default;
  AffineExpr(double constant) : constant_(constant) {}  // NOLINT

  static AffineExpr Variable(int index, double coefficient = 1.0);

  double constant() const { return constant_; }
  /// Sorted (variable index, coefficient) pairs with nonzero coefficients.
  const std::vector<std::pair<int, double>>& terms() const { return terms_; }

  bool is_zero() const { return constant_ == 0.0 && terms_.empty(); }
  bool is_constant() const { return terms_.empty(); }
  /// Coefficient of decision variable @p index.
  double coefficient(int index) const;

  double Evaluate(const Eigen::Ref<const Eigen::VectorXd>& values) const;

  AffineExpr& operator+=(const AffineExpr& other);
  AffineExpr& operator-=(const AffineExpr& other);
  AffineExpr& operator*=(double s);
  AffineExpr operator-() const;
  bool operator==(const AffineExpr& other) const {
    return constant_ == other.constant_ && terms_ == other.terms_;
  }

 private:
  double constant_{0.0};
  std::vector<std::pair<int, double>> terms_;
};

inline AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
inline AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
inline AffineExpr operator*(AffineExpr a, double s) { return a *= s; }
inline AffineExpr operator*(double s, AffineExpr a) { return a *= s; }

inline bool IsZeroCoefficient(double c) { return c == 0.0; }
inline bool IsZeroCoefficient(const AffineExpr& c) { return c.is_zero(); }

/// Sparse multivariate polynomial with coefficients of type T (double, or
/// AffineExpr for polynomials whose coefficients depend on decision
/// variables). Zero coefficients are never stored.
template <typename T>
class Polynomial {
 public:
  using TermMap = std::map<Monomial, T, GradedLexLess>;

  Polynomial() = default;
  explicit Polynomial(int num_vars) : num_vars_(num_vars) {}

  static Polynomial Constant(int num_vars, const T& c) {
    Polynomial p(num_vars);
    p.AddTerm(Monomial::One(num_vars), c);
    return p;
  }
  static Polynomial Variable(int num_vars, int index) {
    Polynomial p(num_vars);
    p.AddTerm(Monomial::Variable(num_vars, index), T(1.0));
    return p;
  }
  static Polynomial FromMonomial(const Monomial& m, const T& c = T(1.0)) {
    Polynomial p(m.num_vars());
    p.AddTerm(m, c);
    return p;
  }

  int num_vars() const { return num_vars_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int num_terms() const { return static_cast<int>(terms_.size()); }

  /// Maximum total degree of a stored term; -1 for the zero polynomial.
  int degree() const {
    return terms_.empty() ? -1 : terms_.rbegin()->first.degree();
  }
  /// Minimum total degree of a stored term; -1 for the zero polynomial.
  int min_degree() const {
    return terms_.empty() ? -1 : terms_.begin()->first.degree();
  }

  T coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? T(0.0) : it->second;
  }

  /// Adds c * m, pruning the term if the result is exactly zero.
  void AddTerm(const Monomial& m, const T& c) {
    if (m.num_vars() != num_vars_) {
      throw std::invalid_argument("Polynomial: variable-count mismatch");
    }
    if (IsZeroCoefficient(c)) return;
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (IsZeroCoefficient(it->second)) terms_.erase(it);
    }
  }

  Polynomial& operator+=(const Polynomial& other) {
    CheckSameVars(other);
    for (const auto& [m, c] : other.terms_) AddTerm(m, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& other) {
    CheckSameVars(other);
    for (const auto& [m, c] : other.terms_) AddTerm(m, c * -1.0);
    return *this;
  }
  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [m, c] : terms_) c *= s;
    return *this;
  }
  Polynomial operator-() const {
    Polynomial r = *this;
    r *= -1.0;
    return r;
  }

  /// Adds s * other without forming the scaled copy.
  void AddScaled(const Polynomial& other, double s) {
    CheckSameVars(other);
    if (s == 0.0) return;
    for (const auto& [m, c] : other.terms_) AddTerm(m, c * s);
  }

  void CheckSameVars(const Polynomial& other) const {
    if (other.num_vars_ != num_vars_) {
      throw std::invalid_argument("Polynomial: variable-count mismatch");
    }
  }

 private:
  int num_vars_{0};
  TermMap terms_;
};

using MultiPoly = Polynomial<double>;
/// Polynomial whose coefficients are affine in decision variables.
using ParamPoly = Polynomial<AffineExpr>;

template <typename T>
Polynomial<T> operator+(Polynomial<T> p, const Polynomial<T>& q) {
  return p += q;
}
template <typename T>
Polynomial<T> operator-(Polynomial<T> p, const Polynomial<T>& q) {
  return p -= q;
}
template <typename T>
Polynomial<T> operator*(Polynomial<T> p, double s) {
  return p *= s;
}
template <typename T>
Polynomial<T> operator*(double s, Polynomial<T> p) {
  return p *= s;
}

/// Product of a polynomial with coefficients T and a real polynomial.
template <typename T>
Polynomial<T> operator*(const Polynomial<T>& p, const MultiPoly& q) {
  if (p.num_vars() != q.num_vars()) {
    throw std::invalid_argument("Polynomial: variable-count mismatch");
  }
  Polynomial<T> r(p.num_vars());
  for (const auto& [mp, cp] : p.terms()) {
    for (const auto& [mq, cq] : q.terms()) r.AddTerm(mp * mq, cp * cq);
  }
  return r;
}
template <typename T>
  requires(!std::same_as<T, double>)
Polynomial<T> operator*(const MultiPoly& q, const Polynomial<T>& p) {
  return p * q;
}

/// Converts a real polynomial to one with constant affine coefficients.
ParamPoly ToParamPoly(const MultiPoly& p);

/// Substitutes decision-variable values into a ParamPoly.
MultiPoly Substitute(const ParamPoly& p,
                     const Eigen::Ref<const Eigen::VectorXd>& values);

double Evaluate(const MultiPoly& p, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Partial derivative with respect to variable @p i.
template <typename T>
Polynomial<T> Derivative(const Polynomial<T>& p, int i) {
  Polynomial<T> r(p.num_vars());
  for (const auto& [m, c] : p.terms()) {
    const int e = m.exponent(i);
    if (e > 0) r.AddTerm(m.DivideByVariable(i), c * static_cast<double>(e));
  }
  return r;
}

/// Returns (dp/dx_1, ..., dp/dx_n).
template <typename T>
std::vector<Polynomial<T>> Gradient(const Polynomial<T>& p) {
  std::vector<Polynomial<T>> g;
  g.reserve(p.num_vars());
  for (int i = 0; i < p.num_vars(); ++i) g.push_back(Derivative(p, i));
  return g;
}

/// Returns sum_i u[i] * v[i].
template <typename T>
Polynomial<T> Dot(const std::vector<Polynomial<T>>& u,
                  const std::vector<MultiPoly>& v) {
  if (u.size() != v.size() || u.empty()) {
    throw std::invalid_argument("Dot: size mismatch or empty");
  }
  Polynomial<T> r(u[0].num_vars());
  for (size_t i = 0; i < u.size(); ++i) r += u[i] * v[i];
  return r;
}

/// Rewrites @p p in @p num_vars_out variables: variable i of p becomes
/// variable target[i] raised to power[i]. Used for embeddings and for the
/// substitution s -> q^2.
template <typename T>
Polynomial<T> ChangeVariables(const Polynomial<T>& p, int num_vars_out,
                              const std::vector<int>& target,
                              const std::vector<int>& power) {
  if (static_cast<int>(target.size()) != p.num_vars() ||
      target.size() != power.size()) {
    throw std::invalid_argument("ChangeVariables: map size mismatch");
  }
  Polynomial<T> r(num_vars_out);
  for (const auto& [m, c] : p.terms()) {
    std::vector<int> e(num_vars_out, 0);
    for (int i = 0; i < p.num_vars(); ++i) e[target[i]] += power[i] * m.exponent(i);
    r.AddTerm(Monomial(std::move(e)), c);
  }
  return r;
}

/// Largest absolute coefficient; 0 for the zero polynomial.
double MaxAbsCoefficient(const MultiPoly& p);

/// Formats a real polynomial for diagnostics, e.g. "2*a1^2 - a1*a2 + 1".
std::string ToString(const MultiPoly& p, const std::string& prefix = "a");

/// Ordered list of monomials used as a Gram basis.
struct MonomialBasis {
  int n{0};
  int d{0};
  bool include_constant{true};
  std::vector<Monomial> entries;

  int size() const { return static_cast<int>(entries.size()); }
};

/// All monomials in @p n variables of degree at most @p d, in graded
/// lexicographic order.
/// @throws std::invalid_argument if n < 1 or d < 0.
MonomialBasis MakeMonomialBasis(int n, int d, bool include_constant);

/// (n + d)! / (n! d!) computed exactly in 64-bit integers.
long long BinomialCount(int n, int d);

/// One entry H(row, col), row <= col, of a Gram matrix entering an equality
/// with the given weight (1 on the diagonal, 2 off the diagonal).
struct GramEntryRef {
  int row{0};
  int col{0};
  double weight{1.0};
};

/// sum_k weight_k H(row_k, col_k) - sum_j coeff_j x_j = target, i.e. the
/// coefficient of @p monomial in m^T H m matches the target polynomial,
/// whose coefficient may depend on decision variables x.
struct GramEquality {
  Monomial monomial;
  std::vector<GramEntryRef> entries;
  std::vector<std::pair<int, double>> free_terms;
  double target{0.0};
};

/// Linear equalities on a symmetric Gram matrix H such that m^T H m equals a
/// target polynomial identically.
struct GramConstraintSystem {
  MonomialBasis basis;
  std::vector<GramEquality> equalities;

  /// Max over equalities of |lhs - target| for a given H and decision
  /// variables x (x may be empty when there are no free terms).
  double MaxResidual(const Eigen::MatrixXd& H,
                     const Eigen::VectorXd& x = Eigen::VectorXd()) const;
};

/// Options for GramParametrize.
struct GramOptions {
  /// Optional block label per basis entry; only pairs with equal labels get a
  /// Gram entry. Empty means a single dense block.
  std::vector<int> block_of;
  /// Constant target coefficients on monomials that no basis pair produces
  /// are ignored if their magnitude is at most this value; larger ones throw.
  double drop_tolerance{0.0};
};

/// Groups Gram entries by the monomial their product contributes to.
/// Monomials that no allowed pair produces yield equalities with no Gram
/// entries if their coefficient depends on decision variables.
/// @throws std::invalid_argument if the target has a constant coefficient
/// above the drop tolerance on a monomial not expressible by the basis, or
/// on variable-count mismatch.
GramConstraintSystem GramParametrize(const ParamPoly& target,
                                     const MonomialBasis& basis,
                                     const GramOptions& options = {});
GramConstraintSystem GramParametrize(const MultiPoly& target,
                                     const MonomialBasis& basis,
                                     const GramOptions& options = {});

/// Returns m^T H m for symmetric H over @p basis.
MultiPoly GramQuadraticForm(const MonomialBasis& basis, const Eigen::MatrixXd& H);

/// Polynomial serialization as JSON text: {"format": "poly-v1", "num_vars":
/// n, "terms": [[[e_1, ..., e_n], c], ...]} in graded lexicographic order.
std::string PolyToJson(const MultiPoly& p);
/// @throws std::runtime_error with line/column on malformed input.
MultiPoly PolyFromJson(const std::string& text);

}  // namespace flowsos
