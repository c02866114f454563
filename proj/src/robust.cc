#include "flowsos/robust.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <stdexcept>
#include <type_traits>

#include "json_util.h"
#include "template_terms.h"

namespace flowsos {

using internal::Json;

namespace {

constexpr double kResidualTol = 1e-7;
constexpr double kEigenvalueTol = -1e-9;

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double MinEigenvalue(const Eigen::MatrixXd& h) {
  if (h.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (h + h.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

std::string FormatNumber(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

/// sum of x_i^2 for i in [first, first + count).
MultiPoly SumSquares(int num_vars, int first, int count) {
  MultiPoly p(num_vars);
  for (int i = first; i < first + count; ++i) p.AddTerm(Monomial::Variable(num_vars, i, 2), 1.0);
  return p;
}

MultiPoly Power(const MultiPoly& p, int k) {
  MultiPoly r = MultiPoly::Constant(p.num_vars(), 1.0);
  for (int i = 0; i < k; ++i) r = r * p;
  return r;
}

std::vector<int> Iota(int count) {
  std::vector<int> v(count);
  for (int i = 0; i < count; ++i) v[i] = i;
  return v;
}

/// p over the first p.num_vars() of num_vars variables.
template <typename T>
Polynomial<T> Embed(const Polynomial<T>& p, int num_vars) {
  return ChangeVariables(p, num_vars, Iota(p.num_vars()),
                         std::vector<int>(p.num_vars(), 1));
}

/// (a, s) -> (a, q) with s = q^2.
template <typename T>
Polynomial<T> SubstituteSquare(const Polynomial<T>& p) {
  std::vector<int> power(p.num_vars(), 1);
  power.back() = 2;
  return ChangeVariables(p, p.num_vars(), Iota(p.num_vars()), power);
}

template <typename T>
Polynomial<T> Lift(const MultiPoly& p) {
  if constexpr (std::is_same_v<T, double>) {
    return p;
  } else {
    return ToParamPoly(p);
  }
}

/// c * p.
template <typename T>
Polynomial<T> ScaleBy(const MultiPoly& p, const T& c) {
  Polynomial<T> r(p.num_vars());
  for (const auto& [m, v] : p.terms()) r.AddTerm(m, c * v);
  return r;
}

/// Real polynomial of a ParamPoly whose coefficients are all constant.
MultiPoly RealPart(const MultiPoly& p) { return p; }
MultiPoly RealPart(const ParamPoly& p) {
  MultiPoly r(p.num_vars());
  for (const auto& [m, c] : p.terms()) {
    if (!c.is_constant()) throw std::logic_error("RealPart: coefficient depends on decision variables");
    r.AddTerm(m, c.constant());
  }
  return r;
}

/// Removes coefficient parts at most rel times the largest one (roundoff of
/// cancelling terms).
ParamPoly DropRoundoff(const ParamPoly& p, double rel) {
  double scale = 0.0;
  for (const auto& [m, c] : p.terms()) {
    scale = std::max(scale, std::abs(c.constant()));
    for (const auto& [k, v] : c.terms()) scale = std::max(scale, std::abs(v));
  }
  const double cut = rel * scale;
  ParamPoly r(p.num_vars());
  for (const auto& [m, c] : p.terms()) {
    AffineExpr e(std::abs(c.constant()) > cut ? c.constant() : 0.0);
    for (const auto& [k, v] : c.terms()) {
      if (std::abs(v) > cut) e += AffineExpr::Variable(k, v);
    }
    r.AddTerm(m, e);
  }
  return r;
}

template <typename T>
RobustPolynomials<T> BuildGhpImpl(const QuadraticSystem& sys, const TailBounds& bounds,
                                  const Polynomial<T>& v, double re) {
  ValidateSystem(sys);
  bounds.Validate();
  const int n = sys.n;
  const int nv = n + 1;
  if (v.num_vars() != nv) {
    throw std::invalid_argument("BuildGhp: V must be a polynomial in (a, s) with n + 1 variables");
  }
  if (!(re > 0.0)) throw std::invalid_argument("BuildGhp: Re must be positive");
  const std::vector<MultiPoly> f = MakeSystemPolynomials(sys).AtRe(re);
  const Polynomial<T> dvds = SubstituteSquare(Derivative(v, n));
  const MultiPoly q2 = MultiPoly::FromMonomial(Monomial::Variable(nv, n, 2));

  RobustPolynomials<T> out;
  out.g = dvds * (2.0 * bounds.kappa_s * q2);
  for (int i = 0; i < n; ++i) {
    const Polynomial<T> dvda = SubstituteSquare(Derivative(v, i));
    out.g += dvda * Embed(f[i], nv);
    out.h.push_back(dvda - dvds * MultiPoly::Variable(nv, i));
  }
  if (!bounds.chi_zero) out.h.push_back(dvds);
  const MultiPoly a2 = SumSquares(nv, 0, n);
  MultiPoly p = bounds.c1 * q2 + bounds.c2 * (q2 * a2) + bounds.c3 * (q2 * q2);
  if (!bounds.chi_zero) p += bounds.d * (q2 * a2);
  out.p = Lift<T>(p);
  return out;
}

template <typename T>
PolyMatrix<T> BuildHImpl(const RobustPolynomials<T>& ghp) {
  const int m = 1 + static_cast<int>(ghp.h.size());
  const int nv = ghp.g.num_vars();
  const MultiPoly p = RealPart(ghp.p);
  PolyMatrix<T> h(m, std::vector<Polynomial<T>>(m, Polynomial<T>(nv)));
  h[0][0] = ghp.g * p;
  for (int i = 1; i < m; ++i) {
    h[0][i] = h[i][0] = ghp.h[i - 1] * p;
    h[i][i] = ghp.g;
  }
  return h;
}

template <typename T>
Polynomial<T> ScalarizeImpl(const PolyMatrix<T>& h) {
  const int m = static_cast<int>(h.size());
  if (m == 0) throw std::invalid_argument("Scalarize: empty matrix");
  const int nv = h[0][0].num_vars();
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(h[i].size()) != m) throw std::invalid_argument("Scalarize: H must be square");
    for (int j = 0; j < m; ++j) {
      if (h[i][j].num_vars() != nv) throw std::invalid_argument("Scalarize: variable-count mismatch");
      if (j > i && h[i][j].terms() != h[j][i].terms()) {
        throw std::invalid_argument("Scalarize: H must be symmetric");
      }
    }
  }
  const int nz = nv + m;
  Polynomial<T> out(nz);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      if (h[i][j].is_zero()) continue;
      const MultiPoly zz = MultiPoly::FromMonomial(
          Monomial::Variable(nz, nv + i) * Monomial::Variable(nz, nv + j), i == j ? 1.0 : 2.0);
      out += Embed(h[i][j], nz) * zz;
    }
  }
  return out;
}

/// Targets of the three identities, shared by compilation and verification.
template <typename T>
struct RobustTargets {
  Polynomial<T> s0;
  Polynomial<T> sigma0;
  Polynomial<T> dvds;
};

template <typename T>
RobustTargets<T> MakeTargets(const RobustPolynomials<T>& ghp, const Polynomial<T>& v,
                             const T& eps1, const T& eps2, int k1, int positivity_power, int k4,
                             int lower_bound_power) {
  const int nv = ghp.g.num_vars();
  const int n = nv - 1;
  const int m = 1 + static_cast<int>(ghp.h.size());
  const int nz = nv + m;
  RobustTargets<T> t;
  const MultiPoly rz = SumSquares(nz, 0, nv);
  MultiPoly diag = Embed(RealPart(ghp.p), nz) *
                   MultiPoly::FromMonomial(Monomial::Variable(nz, nv, 2));
  diag += SumSquares(nz, nv + 1, m - 1);
  t.s0 = -(ScalarizeImpl(BuildHImpl(ghp)) * Power(rz, k1)) -
         ScaleBy<T>(Power(rz, positivity_power) * diag, eps2);
  const MultiPoly r = SumSquares(nv, 0, nv);
  t.sigma0 = SubstituteSquare(v) * Power(r, k4) - ScaleBy<T>(Power(r, lower_bound_power), eps1);
  t.dvds = SubstituteSquare(Derivative(v, n));
  return t;
}

/// Gram basis for a target that is a quadratic form in the num_z variables
/// after the first num_base ones (or, with num_z = 0, any target): per z_k,
/// z_k times base monomials inside the per-variable and total-degree half
/// bounds of the z_k^2 coefficient, then entries whose square no term or
/// other pair can produce are removed until none remain.
MonomialBasis StructuredBasis(const ParamPoly& target, int num_base, int num_z) {
  const int nt = num_base + num_z;
  std::set<std::vector<int>> support;
  for (const auto& [m, c] : target.terms()) support.insert(m.exponents());

  std::set<std::vector<int>> entries;
  const int groups = std::max(num_z, 1);
  for (int k = 0; k < groups; ++k) {
    std::vector<int> lo(num_base, 1 << 20), hi(num_base, -1);
    int dlo = 1 << 20, dhi = -1;
    bool any = false;
    for (const auto& e : support) {
      if (num_z > 0) {
        bool match = true;
        for (int j = 0; j < num_z; ++j) {
          if (e[num_base + j] != (j == k ? 2 : 0)) match = false;
        }
        if (!match) continue;
      }
      any = true;
      int deg = 0;
      for (int i = 0; i < num_base; ++i) {
        lo[i] = std::min(lo[i], e[i]);
        hi[i] = std::max(hi[i], e[i]);
        deg += e[i];
      }
      dlo = std::min(dlo, deg);
      dhi = std::max(dhi, deg);
    }
    if (!any) continue;
    for (const auto& m : MakeMonomialBasis(num_base, dhi / 2, true).entries) {
      if (2 * m.degree() < dlo) continue;
      bool inside = true;
      for (int i = 0; i < num_base && inside; ++i) {
        inside = 2 * m.exponent(i) >= lo[i] && 2 * m.exponent(i) <= hi[i];
      }
      if (!inside) continue;
      std::vector<int> e(m.exponents());
      e.resize(nt, 0);
      if (num_z > 0) e[num_base + k] = 1;
      entries.insert(std::move(e));
    }
  }

  for (bool changed = true; changed;) {
    changed = false;
    for (auto it = entries.begin(); it != entries.end();) {
      std::vector<int> twice(*it);
      for (int& x : twice) x *= 2;
      bool keep = support.count(twice) > 0;
      for (auto jt = entries.begin(); jt != entries.end() && !keep; ++jt) {
        if (jt == it) continue;
        std::vector<int> other(nt);
        bool valid = true;
        for (int i = 0; i < nt && valid; ++i) {
          other[i] = twice[i] - (*jt)[i];
          valid = other[i] >= 0;
        }
        keep = valid && other != *it && entries.count(other) > 0;
      }
      if (keep) {
        ++it;
      } else {
        it = entries.erase(it);
        changed = true;
      }
    }
  }

  MonomialBasis basis;
  basis.n = nt;
  basis.include_constant = false;
  for (const auto& e : entries) {
    basis.entries.emplace_back(e);
    basis.d = std::max(basis.d, basis.entries.back().degree());
    if (basis.entries.back().degree() == 0) basis.include_constant = true;
  }
  std::sort(basis.entries.begin(), basis.entries.end(), GradedLexLess());
  return basis;
}

/// Sign-flip symmetry labels of a basis from the support of its target.
std::vector<int> SupportLabels(const ParamPoly& target, const MonomialBasis& basis) {
  MultiPoly support(target.num_vars());
  for (const auto& [m, c] : target.terms()) support.AddTerm(m, 1.0);
  return SignSymmetry(target.num_vars(), {support}).Labels(basis);
}

/// The valid range of a multiplier power e with 2e between the lowest and
/// highest degree of a polynomial times r^k.
std::pair<int, int> PowerRange(int min_degree, int max_degree, int k) {
  return {(min_degree + 1) / 2 + k, max_degree / 2 + k};
}

int ChoosePower(const std::optional<int>& requested, std::pair<int, int> range,
                const std::string& what) {
  const int e = requested.value_or(range.first);
  if (e < range.first || e > range.second) {
    throw std::invalid_argument("CompileRobust: " + what + " power must be in [" +
                                std::to_string(range.first) + ", " +
                                std::to_string(range.second) + "], got " + std::to_string(e));
  }
  return e;
}

}  // namespace

void TailBounds::Validate() const {
  if (!(kappa_s < 0.0)) throw std::invalid_argument("TailBounds: kappa_s must be negative");
  for (const double c : {c1, c2, c3, d}) {
    if (!std::isfinite(c) || c < 0.0) {
      throw std::invalid_argument("TailBounds: c1, c2, c3 and d must be finite and nonnegative");
    }
  }
}

std::string TailBoundsToJson(const TailBounds& bounds) {
  Json j;
  j["format"] = "tail-v1";
  j["kappa_s"] = bounds.kappa_s;
  j["c1"] = bounds.c1;
  j["c2"] = bounds.c2;
  j["c3"] = bounds.c3;
  j["d"] = bounds.d;
  j["chi_zero"] = bounds.chi_zero;
  j["provenance"] = bounds.provenance;
  return j.dump(2) + "\n";
}

TailBounds TailBoundsFromJson(const std::string& text) {
  const Json j = internal::ParseJsonText(text, "tail bounds");
  internal::CheckFormatTag(j, "tail-v1", "tail bounds");
  TailBounds b;
  try {
    b.kappa_s = j.at("kappa_s").get<double>();
    b.c1 = j.at("c1").get<double>();
    b.c2 = j.at("c2").get<double>();
    b.c3 = j.at("c3").get<double>();
    b.d = j.at("d").get<double>();
    b.chi_zero = j.at("chi_zero").get<bool>();
    if (j.contains("provenance")) {
      const Json& p = j["provenance"];
      b.provenance = p.is_string() ? p.get<std::string>() : p.dump();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("tail bounds: ") + e.what());
  }
  b.Validate();
  return b;
}

TailBounds LoadTailBounds(const std::string& path) {
  return TailBoundsFromJson(internal::ReadTextFile(path));
}

void SaveTailBounds(const TailBounds& bounds, const std::string& path) {
  internal::WriteTextFile(path, TailBoundsToJson(bounds));
}

void RobustTemplate::Validate(int n) const {
  if (fixed_v.has_value() && vmodified_epsilon.has_value()) {
    throw std::invalid_argument("RobustTemplate: give either a fixed V or an epsilon, not both");
  }
  if (vmodified_epsilon.has_value()) {
    if (!(*vmodified_epsilon >= 0.0)) throw std::invalid_argument("RobustTemplate: epsilon must be >= 0");
    return;
  }
  if (fixed_v.has_value()) {
    if (fixed_v->num_vars() != n + 1) {
      throw std::invalid_argument("RobustTemplate: fixed V must have n + 1 variables (a, s)");
    }
    return;
  }
  base.Validate(n);
}

std::string RobustTemplate::Describe() const {
  if (fixed_v.has_value()) return "fixed V(a, q^2)";
  if (vmodified_epsilon.has_value()) {
    return "E0 + q^2 + (E0 + q^2)^2 - " + FormatNumber(*vmodified_epsilon) +
           "*sum_{i>=2} a_i f_i(a)";
  }
  std::string s;
  switch (base.variable_term) {
    case VariableTerm::kNone: break;
    case VariableTerm::kQuadratic: s = "a^T P a + "; break;
    case VariableTerm::kQuadraticM2: s = "m2(a)^T P m2(a) + "; break;
    case VariableTerm::kFreeM4: s = "p^T m4(a) + "; break;
  }
  for (size_t i = 0; i < base.shifts.size(); ++i) {
    if (i > 0) s += "*";
    s += "(E" + FormatNumber(base.shifts[i]) + " + q^2)";
  }
  return s;
}

RobustTemplate EnergyRobustTemplate() {
  RobustTemplate t;
  t.base.shifts = {0.0};
  return t;
}

RobustPolynomials<double> BuildGhp(const QuadraticSystem& sys, const TailBounds& bounds,
                                   const MultiPoly& v, double re) {
  RobustPolynomials<double> out = BuildGhpImpl(sys, bounds, v, re);
  const int n = sys.n;
  const MultiPoly dvds = Derivative(v, n);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  Eigen::VectorXd x(n + 1);
  for (int k = 0; k < 1000; ++k) {
    const double scale = std::pow(10.0, 4.0 * unit(rng) - 2.0);
    for (int i = 0; i < n; ++i) x[i] = scale * normal(rng);
    x[n] = scale * scale * unit(rng);
    if (Evaluate(dvds, x) < 0.0) {
      throw std::invalid_argument("BuildGhp: dV/d(q^2) is negative at a sampled point");
    }
  }
  return out;
}

RobustPolynomials<AffineExpr> BuildGhp(const QuadraticSystem& sys, const TailBounds& bounds,
                                       const ParamPoly& v, double re) {
  return BuildGhpImpl(sys, bounds, v, re);
}

PolyMatrix<double> BuildH(const RobustPolynomials<double>& ghp) { return BuildHImpl(ghp); }
PolyMatrix<AffineExpr> BuildH(const RobustPolynomials<AffineExpr>& ghp) {
  return BuildHImpl(ghp);
}

MultiPoly Scalarize(const PolyMatrix<double>& h) { return ScalarizeImpl(h); }
ParamPoly Scalarize(const PolyMatrix<AffineExpr>& h) { return ScalarizeImpl(h); }

RobustProgram CompileRobust(const QuadraticSystem& sys, const TailBounds& bounds,
                            const RobustTemplate& tmpl, double re,
                            const RobustOptions& options) {
  ValidateSystem(sys);
  bounds.Validate();
  tmpl.Validate(sys.n);
  if (!(re > 0.0)) throw std::invalid_argument("CompileRobust: Re must be positive");
  if (!(options.eps_bar > 0.0)) throw std::invalid_argument("CompileRobust: eps_bar must be positive");
  if (options.degrees.k1 < 0 || options.degrees.k4 < 0) {
    throw std::invalid_argument("CompileRobust: multiplier exponents must be nonnegative");
  }
  const int n = sys.n;
  const int nv = n + 1;
  RobustProgram prog;
  prog.tmpl = tmpl;
  prog.bounds = bounds;
  prog.options = options;
  prog.re = re;
  SosProgram& sp = prog.program;

  if (tmpl.fixed_v.has_value()) {
    prog.v = ToParamPoly(*tmpl.fixed_v);
  } else if (tmpl.vmodified_epsilon.has_value()) {
    prog.v = ToParamPoly(VModifiedTemplate(sys, *tmpl.vmodified_epsilon, re));
  } else {
    const MultiPoly s = MultiPoly::Variable(nv, n);
    MultiPoly b = MultiPoly::Constant(nv, tmpl.base.energy_weight);
    for (const double theta : tmpl.base.shifts) b = b * (Embed(EnergyProduct(sys, {theta}), nv) + s);
    const SignSymmetry sym(sys, {EnergyProduct(sys, tmpl.base.shifts)});
    auto allowed = [&](const Monomial& m) { return !options.use_symmetry || sym.IsInvariant(m); };
    ParamPoly va(n);
    MonomialBasis p_basis;
    std::vector<std::pair<int, int>> p_entries;
    internal::AddVariableTerm(tmpl.base, n, allowed, &sp, &va, &p_basis, &p_entries);
    prog.v = Embed(va, nv) + ToParamPoly(b);
  }

  RobustPolynomials<AffineExpr> ghp = BuildGhp(sys, bounds, prog.v, re);
  ghp.g = DropRoundoff(ghp.g, options.drop_tolerance);
  for (auto& hi : ghp.h) hi = DropRoundoff(hi, options.drop_tolerance);
  if (ghp.g.is_zero()) throw std::invalid_argument("CompileRobust: g is identically zero");
  if (ghp.g.degree() % 2 != 0) {
    throw std::invalid_argument("CompileRobust: g has odd degree " + std::to_string(ghp.g.degree()));
  }
  const ParamPoly v_aq = SubstituteSquare(prog.v);
  if (v_aq.degree() % 2 != 0) {
    throw std::invalid_argument("CompileRobust: V has odd degree " + std::to_string(v_aq.degree()));
  }
  prog.positivity_power =
      ChoosePower(options.degrees.positivity_power,
                  PowerRange(ghp.g.min_degree(), ghp.g.degree(), options.degrees.k1), "positivity");
  prog.lower_bound_power =
      ChoosePower(options.degrees.lower_bound_power,
                  PowerRange(v_aq.min_degree(), v_aq.degree(), options.degrees.k4), "lower-bound");
  prog.h_size = 1 + static_cast<int>(ghp.h.size());
  prog.eps1 = sp.NewLowerBounded(options.eps_bar);
  prog.eps2 = sp.NewLowerBounded(options.eps_bar);

  RobustTargets<AffineExpr> t =
      MakeTargets(ghp, prog.v, prog.eps1, prog.eps2, options.degrees.k1, prog.positivity_power,
                  options.degrees.k4, prog.lower_bound_power);
  t.dvds = DropRoundoff(t.dvds, options.drop_tolerance);

  auto add = [&](const std::string& name, const ParamPoly& target, int num_z) {
    RobustIdentity id;
    id.name = name;
    if (!target.is_zero()) {
      id.basis = StructuredBasis(target, nv, num_z);
      if (options.use_symmetry) id.block_of = SupportLabels(target, id.basis);
      double fixed = 0.0;
      for (const auto& [m, c] : target.terms()) fixed = std::max(fixed, std::abs(c.constant()));
      id.id = sp.AddSosConstraint(target, id.basis, id.block_of,
                                  options.drop_tolerance * std::max(1.0, fixed));
    }
    prog.identities.push_back(std::move(id));
  };
  add("s0", t.s0, prog.h_size);
  add("sigma0", t.sigma0, 0);
  add("dV/ds", t.dvds, 0);
  return prog;
}

RobustSolveResult SolveRobust(const RobustProgram& prog, const QuadraticSystem& sys,
                              const SolverOptions& solver) {
  const auto t0 = std::chrono::steady_clock::now();
  RobustSolveResult res;
  res.outcome = Solve(prog.program.BuildSdp(), solver);
  if (res.outcome.status == FeasibilityStatus::kInfeasible) {
    res.status = FeasibilityStatus::kInfeasible;
    res.seconds = Seconds(t0);
    return res;
  }
  const SosProgram::Solution sol = prog.program.ExtractSolution(res.outcome.x, res.outcome.u);
  res.v = Substitute(prog.v, sol.values);
  res.eps1 = prog.eps1.Evaluate(sol.values);
  res.eps2 = prog.eps2.Evaluate(sol.values);
  bool passed = res.eps1 >= prog.options.eps_bar && res.eps2 >= prog.options.eps_bar;
  try {
    const RobustPolynomials<double> ghp = BuildGhp(sys, prog.bounds, res.v, prog.re);
    const RobustTargets<double> t =
        MakeTargets(ghp, res.v, res.eps1, res.eps2, prog.options.degrees.k1,
                    prog.positivity_power, prog.options.degrees.k4, prog.lower_bound_power);
    const MultiPoly* targets[] = {&t.s0, &t.sigma0, &t.dvds};
    for (size_t k = 0; k < prog.identities.size(); ++k) {
      const RobustIdentity& id = prog.identities[k];
      RobustIdentityCheck check;
      check.name = id.name;
      if (id.id >= 0) {
        check.residual =
            MaxAbsCoefficient(*targets[k] - GramQuadraticForm(id.basis, sol.grams[id.id]));
        check.lambda_min = MinEigenvalue(sol.grams[id.id]);
      } else {
        check.residual = MaxAbsCoefficient(*targets[k]);
      }
      passed = passed && check.residual <= kResidualTol && check.lambda_min >= kEigenvalueTol;
      res.checks.push_back(check);
    }
  } catch (const std::invalid_argument&) {
    passed = false;
  }
  res.status = passed ? FeasibilityStatus::kFeasible : FeasibilityStatus::kIndeterminate;
  res.seconds = Seconds(t0);
  return res;
}

RobustSolveResult CheckRobust(const QuadraticSystem& sys, const TailBounds& bounds,
                              const RobustTemplate& tmpl, double re,
                              const RobustOptions& options, const SolverOptions& solver) {
  return SolveRobust(CompileRobust(sys, bounds, tmpl, re, options), sys, solver);
}

RobustBisectResult BisectRobust(const QuadraticSystem& sys, const TailBounds& bounds,
                                const RobustTemplate& tmpl, const RobustBisectOptions& options) {
  if (!(options.re_lo > 0.0) || !(options.re_lo < options.re_hi)) {
    throw std::invalid_argument("BisectRobust: need 0 < re_lo < re_hi");
  }
  if (!(options.tol > 0.0)) throw std::invalid_argument("BisectRobust: tol must be positive");
  RobustBisectResult out;
  auto eval = [&](double re) {
    RobustSolveResult r = CheckRobust(sys, bounds, tmpl, re, options.robust, options.solver);
    out.steps.push_back({re, r.status, r.outcome.slack, r.outcome.iterations, r.seconds});
    if (options.verbose) {
      std::fprintf(stderr, "Re = %-10.6g %-13s slack % .3e  iters %3d  %.1fs\n", re,
                   ToString(r.status).c_str(), r.outcome.slack, r.outcome.iterations, r.seconds);
    }
    return r;
  };
  double lo = options.re_lo, hi = options.re_hi;
  RobustSolveResult r = eval(lo);
  if (r.status != FeasibilityStatus::kFeasible) {
    throw std::runtime_error("BisectRobust: not feasible at re_lo = " + std::to_string(lo));
  }
  out.v = r.v;
  r = eval(hi);
  if (r.status == FeasibilityStatus::kFeasible) {
    out.re_max = hi;
    out.hit_upper = true;
    out.v = r.v;
    return out;
  }
  while (hi - lo > options.tol) {
    const double mid = 0.5 * (lo + hi);
    r = eval(mid);
    if (r.status == FeasibilityStatus::kFeasible) {
      lo = mid;
      out.v = r.v;
    } else {
      hi = mid;
    }
  }
  out.re_max = lo;
  return out;
}

MultiPoly VModifiedTemplate(const QuadraticSystem& sys, double epsilon, double re) {
  ValidateSystem(sys);
  const int n = sys.n;
  if (n == 1) throw std::invalid_argument("VModifiedTemplate: requires n > 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("VModifiedTemplate: epsilon must be >= 0");
  if (!(re > 0.0)) throw std::invalid_argument("VModifiedTemplate: Re must be positive");
  const int nv = n + 1;
  const MultiPoly w = Embed(EnergyProduct(sys, {0.0}), nv) + MultiPoly::Variable(nv, n);
  MultiPoly v = w + w * w;
  const std::vector<MultiPoly> f = MakeSystemPolynomials(sys).AtRe(re);
  for (int i = 1; i < n; ++i) {
    v.AddScaled(MultiPoly::Variable(nv, i) * Embed(f[i], nv), -epsilon);
  }
  return v;
}

Eigen::MatrixXd SchurBlock(const Eigen::VectorXd& u, double t) {
  const int m = static_cast<int>(u.size());
  Eigen::MatrixXd b = t * Eigen::MatrixXd::Identity(m + 1, m + 1);
  b.block(1, 0, m, 1) = u;
  b.block(0, 1, 1, m) = u.transpose();
  return b;
}

}  // namespace flowsos
