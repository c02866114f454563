#include "flowsos/sos.h"

#include "template_terms.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace flowsos {

namespace {

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t Parity(const Monomial& m) {
  std::uint64_t v = 0;
  for (int i = 0; i < m.num_vars(); ++i) {
    if (m.exponent(i) % 2 != 0) v |= (std::uint64_t{1} << i);
  }
  return v;
}

int LeadingBit(std::uint64_t v) { return 63 - __builtin_clzll(v); }

bool IsEnergyOnly(const LyapunovTemplate& t) {
  return t.variable_term == VariableTerm::kNone && t.shifts.size() == 1 && t.shifts[0] == 0.0;
}

/// sum_j e_j a_j^2.
ParamPoly WeightedSquares(int n, const std::vector<AffineExpr>& e) {
  ParamPoly p(n);
  for (int j = 0; j < n; ++j) p.AddTerm(Monomial::Variable(n, j, 2), e[j]);
  return p;
}

MultiPoly WeightedSquares(int n, const Eigen::VectorXd& e) {
  MultiPoly p(n);
  for (int j = 0; j < n; ++j) p.AddTerm(Monomial::Variable(n, j, 2), e[j]);
  return p;
}

double MaxConstantCoefficient(const ParamPoly& p) {
  double s = 0.0;
  for (const auto& [m, c] : p.terms()) s = std::max(s, std::abs(c.constant()));
  return s;
}

double MinEigenvalue(const Eigen::MatrixXd& h) {
  if (h.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (h + h.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Removes terms above max_degree, which must be fixed and at most tol in
// magnitude (roundoff of cancelling top-degree terms).
ParamPoly DropAboveDegree(const ParamPoly& p, int max_degree, double tol) {
  ParamPoly r(p.num_vars());
  for (const auto& [m, c] : p.terms()) {
    if (m.degree() <= max_degree) {
      r.AddTerm(m, c);
    } else if (!c.terms().empty() || std::abs(c.constant()) > tol) {
      throw std::logic_error("Lyapunov derivative has degree above the Gram basis");
    }
  }
  return r;
}

std::string FormatShift(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

}  // namespace

int LyapunovTemplate::variable_degree() const {
  switch (variable_term) {
    case VariableTerm::kNone: return 0;
    case VariableTerm::kQuadratic: return 2;
    case VariableTerm::kQuadraticM2: return 4;
    case VariableTerm::kFreeM4: return 4;
  }
  return 0;
}

void LyapunovTemplate::Validate(int n) const {
  if (shifts.empty()) throw std::invalid_argument("template: no energy shifts");
  if (shifts.size() >= 2) {
    if (shifts[0] != 0.0) throw std::invalid_argument("template: first shift must be 0");
    const double mean = std::accumulate(shifts.begin(), shifts.end(), 0.0) / shifts.size();
    if (std::abs(mean - 1.0) > 1e-12) {
      throw std::invalid_argument("template: mean of shifts must be 1");
    }
  }
  if (!(energy_weight > 0.0)) throw std::invalid_argument("template: energy weight must be positive");
  if (variable_term != VariableTerm::kNone && variable_degree() >= degree()) {
    throw std::invalid_argument("template: variable term degree must be below the energy degree");
  }
  if (mask.size() != 0) {
    int expect = 0;
    if (variable_term == VariableTerm::kQuadratic) expect = n;
    if (variable_term == VariableTerm::kQuadraticM2) expect = static_cast<int>(BinomialCount(n, 2));
    if (expect == 0 || mask.rows() != expect || mask.cols() != expect) {
      throw std::invalid_argument("template: mask size does not match the variable term");
    }
  }
  for (const auto& m : free_monomials) {
    if (m.num_vars() != n || m.degree() < 2 || m.degree() > 4) {
      throw std::invalid_argument("template: free monomials must have degree 2..4");
    }
  }
}

std::string LyapunovTemplate::Describe() const {
  std::ostringstream os;
  switch (variable_term) {
    case VariableTerm::kNone: break;
    case VariableTerm::kQuadratic: os << "a^T P a + "; break;
    case VariableTerm::kQuadraticM2: os << "m2(a)^T P m2(a) + "; break;
    case VariableTerm::kFreeM4: os << "p^T m4(a) + "; break;
  }
  if (energy_weight != 1.0) os << energy_weight << "*";
  for (size_t i = 0; i < shifts.size(); ++i) {
    if (i > 0) os << "*";
    os << "E" << FormatShift(shifts[i]);
  }
  return os.str();
}

LyapunovTemplate BuildTemplate(int case_id) {
  LyapunovTemplate t;
  t.case_id = case_id;
  switch (case_id) {
    case 1: t.shifts = {0.0}; break;
    case 2: t.variable_term = VariableTerm::kQuadratic; t.shifts = {0.0, 2.0}; break;
    case 3: t.variable_term = VariableTerm::kQuadratic; t.shifts = {0.0, 1.0, 2.0}; break;
    case 4: t.variable_term = VariableTerm::kQuadraticM2; t.shifts = {0.0, 1.0, 2.0}; break;
    case 5: t.variable_term = VariableTerm::kFreeM4; t.shifts = {0.0, 1.0, 2.0}; break;
    default: throw std::invalid_argument("unknown case " + std::to_string(case_id));
  }
  return t;
}

MultiPoly EnergyProduct(const QuadraticSystem& sys, const std::vector<double>& shifts,
                        double weight) {
  const int n = sys.n;
  MultiPoly b = MultiPoly::Constant(n, weight);
  for (double theta : shifts) {
    if (theta != 0.0 && !sys.c.has_value()) {
      throw std::invalid_argument("shifted energy needs the base-flow coordinates c");
    }
    MultiPoly e(n);
    for (int i = 0; i < n; ++i) {
      MultiPoly x = MultiPoly::Variable(n, i);
      if (theta != 0.0 && (*sys.c)[i] != 0.0) x += MultiPoly::Constant(n, theta * (*sys.c)[i]);
      e += 0.5 * (x * x);
    }
    b = b * e;
  }
  return b;
}

SignSymmetry::SignSymmetry(const QuadraticSystem& sys, const std::vector<MultiPoly>& invariants)
    : n_(sys.n) {
  if (n_ > 64) throw std::invalid_argument("SignSymmetry: more than 64 variables");
  const SystemPolynomials polys = MakeSystemPolynomials(sys);
  for (int i = 0; i < n_; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    for (const auto* part : {&polys.viscous, &polys.base, &polys.nonlinear}) {
      for (const auto& [m, c] : (*part)[i].terms()) Insert(Parity(m) ^ bit);
    }
  }
  AddInvariants(invariants);
}

SignSymmetry::SignSymmetry(int num_vars, const std::vector<MultiPoly>& invariants)
    : n_(num_vars) {
  if (n_ < 1 || n_ > 64) throw std::invalid_argument("SignSymmetry: need 1..64 variables");
  AddInvariants(invariants);
}

void SignSymmetry::Insert(std::uint64_t v) {
  v = Reduce(v);
  if (v == 0) return;
  rows_.push_back(v);
  std::sort(rows_.begin(), rows_.end(),
            [](std::uint64_t a, std::uint64_t b) { return LeadingBit(a) > LeadingBit(b); });
}

void SignSymmetry::AddInvariants(const std::vector<MultiPoly>& invariants) {
  for (const auto& p : invariants) {
    if (p.num_vars() != n_) throw std::invalid_argument("SignSymmetry: variable-count mismatch");
    for (const auto& [m, c] : p.terms()) Insert(Parity(m));
  }
}

std::uint64_t SignSymmetry::Reduce(std::uint64_t v) const {
  for (std::uint64_t r : rows_) {
    if (v & (std::uint64_t{1} << LeadingBit(r))) v ^= r;
  }
  return v;
}

bool SignSymmetry::IsInvariant(const Monomial& m) const { return Reduce(Parity(m)) == 0; }

std::uint64_t SignSymmetry::ClassKey(const Monomial& m) const { return Reduce(Parity(m)); }

std::vector<int> SignSymmetry::Labels(const MonomialBasis& basis) const {
  std::map<std::uint64_t, int> label;
  std::vector<int> out;
  out.reserve(basis.size());
  for (const auto& m : basis.entries) {
    auto [it, inserted] = label.try_emplace(ClassKey(m), static_cast<int>(label.size()));
    out.push_back(it->second);
  }
  return out;
}

long long SignSymmetry::group_order() const {
  return 1LL << (n_ - static_cast<int>(rows_.size()));
}

namespace internal {

int AddVariableTerm(const LyapunovTemplate& tmpl, int n,
                    const std::function<bool(const Monomial&)>& allowed, SosProgram* sp,
                    ParamPoly* v, MonomialBasis* p_basis,
                    std::vector<std::pair<int, int>>* p_entries) {
  int count = 0;
  switch (tmpl.variable_term) {
    case VariableTerm::kNone: break;
    case VariableTerm::kQuadratic:
    case VariableTerm::kQuadraticM2: {
      const bool m2 = tmpl.variable_term == VariableTerm::kQuadraticM2;
      *p_basis = m2 ? MakeMonomialBasis(n, 2, true) : MakeMonomialBasis(n, 1, false);
      // P is free, so only the sum of the entries producing each monomial
      // matters: one variable per producible monomial.
      std::map<Monomial, AffineExpr, GradedLexLess> coef;
      const int np = p_basis->size();
      for (int i = 0; i < np; ++i) {
        for (int j = i; j < np; ++j) {
          const Monomial m = p_basis->entries[i] * p_basis->entries[j];
          if (m.degree() < 2) continue;
          if (tmpl.mask.size() != 0 && !(tmpl.mask(i, j) || tmpl.mask(j, i))) continue;
          if (!allowed(m)) continue;
          if (!coef.count(m)) coef.emplace(m, sp->NewFree());
          p_entries->emplace_back(i, j);
        }
      }
      for (const auto& [m, p] : coef) v->AddTerm(m, p);
      count = static_cast<int>(coef.size());
      break;
    }
    case VariableTerm::kFreeM4: {
      std::vector<Monomial> mons = tmpl.free_monomials;
      if (mons.empty()) {
        for (const auto& m : MakeMonomialBasis(n, 4, false).entries) {
          if (m.degree() >= 2) mons.push_back(m);
        }
      }
      for (const auto& m : mons) {
        if (!allowed(m)) continue;
        v->AddTerm(m, sp->NewFree());
        ++count;
      }
      break;
    }
  }
  return count;
}

}  // namespace internal

LyapunovProgram CompileFeasibility(const QuadraticSystem& sys, const LyapunovTemplate& tmpl,
                                   double re, const CompileOptions& options) {
  ValidateSystem(sys);
  tmpl.Validate(sys.n);
  if (!(re > 0.0)) throw std::invalid_argument("CompileFeasibility: Re must be positive");
  if (!(options.eps_bar > 0.0)) throw std::invalid_argument("CompileFeasibility: eps_bar must be positive");
  const int n = sys.n;
  LyapunovProgram prog;
  prog.tmpl = tmpl;
  prog.options = options;
  prog.re = re;
  SosProgram& sp = prog.program;

  const MultiPoly b = EnergyProduct(sys, tmpl.shifts, tmpl.energy_weight);
  const SignSymmetry sym(sys, {b});
  auto allowed = [&](const Monomial& m) { return !options.use_symmetry || sym.IsInvariant(m); };

  prog.v = ToParamPoly(b);
  prog.num_template_variables =
      internal::AddVariableTerm(tmpl, n, allowed, &sp, &prog.v, &prog.p_basis, &prog.p_entries);

  const int k = static_cast<int>(tmpl.shifts.size());
  prog.basis = MakeMonomialBasis(n, k, false);
  if (options.use_symmetry) prog.block_of = sym.Labels(prog.basis);
  for (int j = 0; j < n; ++j) prog.eps1.push_back(sp.NewLowerBounded(options.eps_bar));
  for (int j = 0; j < n; ++j) prog.eps2.push_back(sp.NewLowerBounded(options.eps_bar));

  const SystemPolynomials polys = MakeSystemPolynomials(sys);
  const std::vector<ParamPoly> grad = Gradient(prog.v);
  const ParamPoly target1 = prog.v - WeightedSquares(n, prog.eps1);
  auto tol = [&](const ParamPoly& t) {
    return options.drop_tolerance * std::max(1.0, MaxConstantCoefficient(t));
  };
  ParamPoly target2 = -Dot(grad, polys.AtRe(re)) - WeightedSquares(n, prog.eps2);
  target2 = DropAboveDegree(target2, 2 * k, tol(target2));
  prog.id_h1 = sp.AddSosConstraint(target1, prog.basis, prog.block_of, tol(target1));
  prog.id_h2 = sp.AddSosConstraint(target2, prog.basis, prog.block_of, tol(target2));
  if (options.low_re) {
    const ParamPoly target3 = -Dot(grad, polys.viscous);
    prog.id_h3 = sp.AddSosConstraint(target3, prog.basis, prog.block_of, tol(target3));
  }
  return prog;
}

double VerificationReport::max_residual() const {
  return std::max({residual_h1, residual_h2, has_h3 ? residual_h3 : 0.0});
}

double VerificationReport::min_eigenvalue() const {
  double v = std::min(lambda_min_h1, lambda_min_h2);
  if (has_h3) v = std::min(v, lambda_min_h3);
  return v;
}

VerificationReport VerifyCertificate(const Certificate& cert, const QuadraticSystem& sys,
                                     double re, const VerifyTolerances& tol) {
  VerificationReport rep;
  rep.re = re;
  rep.has_h3 = cert.h3.has_value();
  const int n = sys.n;
  const int nb = cert.basis.size();
  auto bad = [&]() {
    rep.residual_h1 = rep.residual_h2 = rep.residual_h3 = std::numeric_limits<double>::infinity();
    rep.passed = false;
    return rep;
  };
  if (cert.n != n || cert.v.num_vars() != n || cert.basis.n != n || cert.h1.rows() != nb ||
      cert.h1.cols() != nb || cert.h2.rows() != nb || cert.h2.cols() != nb ||
      cert.eps1.size() != n || cert.eps2.size() != n || !(re > 0.0) || !(cert.re > 0.0) ||
      (rep.has_h3 && (cert.h3->rows() != nb || cert.h3->cols() != nb))) {
    return bad();
  }
  const SystemPolynomials polys = MakeSystemPolynomials(sys);
  const std::vector<MultiPoly> grad = Gradient(cert.v);
  const MultiPoly r1 = cert.v - WeightedSquares(n, cert.eps1) - GramQuadraticForm(cert.basis, cert.h1);
  rep.residual_h1 = MaxAbsCoefficient(r1);
  Eigen::MatrixXd h2 = cert.h2;
  if (rep.has_h3 && re != cert.re) h2 += (1.0 / re - 1.0 / cert.re) * (*cert.h3);
  const MultiPoly r2 = -Dot(grad, polys.AtRe(re)) - WeightedSquares(n, cert.eps2) -
                       GramQuadraticForm(cert.basis, h2);
  rep.residual_h2 = MaxAbsCoefficient(r2);
  rep.lambda_min_h1 = MinEigenvalue(cert.h1);
  rep.lambda_min_h2 = MinEigenvalue(h2);
  if (rep.has_h3) {
    const MultiPoly r3 = -Dot(grad, polys.viscous) - GramQuadraticForm(cert.basis, *cert.h3);
    rep.residual_h3 = MaxAbsCoefficient(r3);
    rep.lambda_min_h3 = MinEigenvalue(*cert.h3);
  }
  rep.min_eps = std::min(cert.eps1.minCoeff(), cert.eps2.minCoeff());
  rep.passed = rep.max_residual() <= tol.residual && rep.min_eigenvalue() >= tol.min_eigenvalue &&
               rep.min_eps >= cert.eps_bar;
  return rep;
}

Certificate TransportCertificate(const Certificate& cert, double re) {
  if (!cert.h3.has_value()) {
    throw std::invalid_argument("TransportCertificate: certificate has no low-Re block");
  }
  if (!(re > 0.0)) throw std::invalid_argument("TransportCertificate: Re must be positive");
  Certificate out = cert;
  out.h2 = cert.h2 + (1.0 / re - 1.0 / cert.re) * (*cert.h3);
  out.re = re;
  return out;
}

LyapunovSolveResult SolveLyapunovProgram(const LyapunovProgram& prog, const QuadraticSystem& sys,
                                         const SolverOptions& solver) {
  const auto t0 = std::chrono::steady_clock::now();
  LyapunovSolveResult res;
  const SdpProblem sdp = prog.program.BuildSdp();
  res.outcome = Solve(sdp, solver);
  if (res.outcome.status == FeasibilityStatus::kInfeasible) {
    res.status = FeasibilityStatus::kInfeasible;
    res.seconds = Seconds(t0);
    return res;
  }
  const SosProgram::Solution sol = prog.program.ExtractSolution(res.outcome.x, res.outcome.u);
  Certificate cert;
  cert.n = sys.n;
  cert.description = prog.tmpl.Describe();
  cert.v = Substitute(prog.v, sol.values);
  cert.basis = prog.basis;
  cert.block_of = prog.block_of;
  cert.h1 = sol.grams[prog.id_h1];
  cert.h2 = sol.grams[prog.id_h2];
  if (prog.id_h3 >= 0) cert.h3 = sol.grams[prog.id_h3];
  cert.eps1.resize(sys.n);
  cert.eps2.resize(sys.n);
  for (int j = 0; j < sys.n; ++j) {
    cert.eps1[j] = prog.eps1[j].Evaluate(sol.values);
    cert.eps2[j] = prog.eps2[j].Evaluate(sol.values);
  }
  cert.re = prog.re;
  cert.eps_bar = prog.options.eps_bar;
  cert.model_hash = ModelHash(sys);
  res.report = VerifyCertificate(cert, sys, prog.re);
  res.status = res.report.passed ? FeasibilityStatus::kFeasible : FeasibilityStatus::kIndeterminate;
  res.certificate = std::move(cert);
  res.seconds = Seconds(t0);
  return res;
}

LyapunovSolveResult CheckLyapunov(const QuadraticSystem& sys, const LyapunovTemplate& tmpl,
                                  double re, const CompileOptions& options,
                                  const SolverOptions& solver) {
  return SolveLyapunovProgram(CompileFeasibility(sys, tmpl, re, options), sys, solver);
}

BisectResult BisectMaxRe(const QuadraticSystem& sys, const LyapunovTemplate& tmpl,
                         const BisectOptions& options) {
  if (!(options.re_lo > 0.0) || !(options.re_lo < options.re_hi)) {
    throw std::invalid_argument("BisectMaxRe: need 0 < re_lo < re_hi");
  }
  if (!(options.tol > 0.0)) throw std::invalid_argument("BisectMaxRe: tol must be positive");
  tmpl.Validate(sys.n);
  BisectResult out;
  if (IsEnergyOnly(tmpl)) {
    const ReLimit lim = EnergyStabilityLimit(sys);
    out.matrix_shortcut = true;
    out.hit_upper = lim.is_infinite() || lim.value() >= options.re_hi;
    out.re_max = out.hit_upper ? options.re_hi : lim.value();
    return out;
  }
  auto eval = [&](double re) {
    LyapunovSolveResult r = CheckLyapunov(sys, tmpl, re, options.compile, options.solver);
    BisectStep step{re, r.status, r.outcome.slack, r.outcome.iterations, r.seconds};
    out.steps.push_back(step);
    if (options.verbose) {
      std::fprintf(stderr, "Re = %-10.6g %-13s slack % .3e  iters %3d  %.1fs\n", re,
                   ToString(r.status).c_str(), r.outcome.slack, r.outcome.iterations, r.seconds);
    }
    return r;
  };
  double lo = options.re_lo, hi = options.re_hi;
  LyapunovSolveResult r = eval(lo);
  if (r.status != FeasibilityStatus::kFeasible) {
    throw std::runtime_error("BisectMaxRe: template not feasible at re_lo = " + std::to_string(lo));
  }
  out.certificate = r.certificate;
  r = eval(hi);
  if (r.status == FeasibilityStatus::kFeasible) {
    out.re_max = hi;
    out.hit_upper = true;
    out.certificate = r.certificate;
    return out;
  }
  while (hi - lo > options.tol) {
    const double mid = 0.5 * (lo + hi);
    r = eval(mid);
    if (r.status == FeasibilityStatus::kFeasible) {
      lo = mid;
      out.certificate = r.certificate;
    } else {
      hi = mid;
    }
  }
  out.re_max = lo;
  return out;
}

ReWindow ComputeReWindow(const MultiPoly& v, const QuadraticSystem& sys,
                         const ReWindowOptions& options) {
  ValidateSystem(sys);
  const int n = sys.n;
  if (v.num_vars() != n) throw std::invalid_argument("ComputeReWindow: variable-count mismatch");
  if (v.degree() < 2 || v.degree() % 2 != 0) {
    throw std::invalid_argument("ComputeReWindow: V must have even degree >= 2");
  }
  const int d = v.degree() / 2;
  const SignSymmetry sym(sys, {v});
  const MonomialBasis basis = MakeMonomialBasis(n, d, false);
  std::vector<int> labels;
  if (options.use_symmetry) labels = sym.Labels(basis);
  const double drop = 1e-12 * std::max(1.0, MaxAbsCoefficient(v));

  {
    SosProgram p;
    std::vector<AffineExpr> eps;
    for (int j = 0; j < n; ++j) eps.push_back(p.NewLowerBounded(options.eps_bar));
    p.AddSosConstraint(ToParamPoly(v) - WeightedSquares(n, eps), basis, labels, drop);
    if (Solve(p.BuildSdp(), options.solver).status != FeasibilityStatus::kFeasible) {
      throw std::runtime_error("ComputeReWindow: V - l1 is not SOS");
    }
  }
  const SystemPolynomials polys = MakeSystemPolynomials(sys);
  const std::vector<MultiPoly> grad = Gradient(v);
  const MultiPoly dv_visc = Dot(grad, polys.viscous);
  const MultiPoly dv_rest = Dot(grad, polys.base) + Dot(grad, polys.nonlinear);
  const double drop2 = 1e-12 * std::max({1.0, MaxAbsCoefficient(dv_visc), MaxAbsCoefficient(dv_rest)});

  // Optimizes s = 1/Re over {s : -dV.(s Lambda a + W a + N(a) a) - l2 SOS}.
  auto solve_end = [&](bool upper_end) {
    SosProgram p;
    const AffineExpr s = upper_end ? p.NewLowerBounded(0.0) : p.NewUpperBounded(options.s_cap);
    std::vector<AffineExpr> eps;
    for (int j = 0; j < n; ++j) eps.push_back(p.NewLowerBounded(options.eps_bar));
    ParamPoly target = -ToParamPoly(dv_rest) - WeightedSquares(n, eps);
    for (const auto& [m, c] : dv_visc.terms()) target.AddTerm(m, s * (-c));
    target = DropAboveDegree(target, 2 * d, drop2);
    p.AddSosConstraint(target, basis, labels, drop2);
    p.SetObjective(upper_end ? s : -s);
    const SdpProblem sdp = p.BuildSdp();
    const SdpResult r = SolveSdp(sdp, options.solver);
    if (r.status == SdpStatus::kPrimalInfeasible) {
      throw std::runtime_error("ComputeReWindow: the derivative condition fails for every Re");
    }
    if (r.status != SdpStatus::kOptimal) {
      throw std::runtime_error("ComputeReWindow: solver status " + ToString(r.status));
    }
    const SosProgram::Solution sol = p.ExtractSolution(r.solution.x, r.solution.u);
    return s.Evaluate(sol.values);
  };
  ReWindow w;
  const double s_min = solve_end(true);
  w.re_max = s_min <= 1e-12 ? ReLimit::Infinite() : ReLimit::Finite(1.0 / s_min);
  const double s_max = solve_end(false);
  if (s_max >= options.s_cap * (1.0 - 1e-9)) {
    w.lower_unbounded = true;
    w.re_min = ReLimit::Finite(0.0);
  } else {
    w.re_min = ReLimit::Finite(1.0 / s_max);
  }
  return w;
}

Mask SparsityFromLyapunovEquation(const Eigen::MatrixXd& l, double relative_threshold) {
  const int n = static_cast<int>(l.rows());
  if (l.cols() != n || n == 0) throw std::invalid_argument("Lyapunov equation: L must be square");
  Eigen::EigenSolver<Eigen::MatrixXd> es(l, false);
  if (es.eigenvalues().real().maxCoeff() >= 0.0) {
    throw std::invalid_argument("Lyapunov equation: L is not Hurwitz");
  }
  // (I (x) L^T + L^T (x) I) vec(P) = -vec(I).
  const Eigen::MatrixXd lt = l.transpose();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n * n, n * n);
  for (int col = 0; col < n; ++col) k.block(col * n, col * n, n, n) += lt;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (lt(r, c) != 0.0) k.block(r * n, c * n, n, n).diagonal().array() += lt(r, c);
    }
  }
  Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(
      Eigen::MatrixXd::Identity(n, n).eval().data(), n * n);
  const Eigen::VectorXd x = k.partialPivLu().solve(rhs);
  const Eigen::MatrixXd p = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n);
  if ((lt * p + p * l + Eigen::MatrixXd::Identity(n, n)).norm() > 1e-8 * (1.0 + p.norm())) {
    throw std::invalid_argument("Lyapunov equation: solve failed");
  }
  const double pmax = p.cwiseAbs().maxCoeff();
  return (p.cwiseAbs().array() > relative_threshold * pmax).matrix();
}

Mask RefineSparsity(const Eigen::MatrixXd& p, double threshold) {
  if (threshold <= 0.0) return Mask::Constant(p.rows(), p.cols(), true);
  const double pmax = p.size() == 0 ? 0.0 : p.cwiseAbs().maxCoeff();
  if (pmax == 0.0) return Mask::Constant(p.rows(), p.cols(), false);
  return (p.cwiseAbs().array() > threshold * pmax).matrix();
}

std::vector<std::vector<int>> BlockPartition(const Mask& mask) {
  const int n = static_cast<int>(mask.rows());
  if (mask.cols() != n) throw std::invalid_argument("BlockPartition: mask must be square");
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (mask(i, j) != mask(j, i)) throw std::invalid_argument("BlockPartition: mask not symmetric");
      if (mask(i, j)) {
        const int a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& [root, g] : groups) out.push_back(std::move(g));
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::MatrixXd MinNormGram(const MultiPoly& a, const MonomialBasis& p_basis, const Mask& mask) {
  const int np = p_basis.size();
  if (mask.size() != 0 && (mask.rows() != np || mask.cols() != np)) {
    throw std::invalid_argument("MinNormGram: mask size mismatch");
  }
  std::map<Monomial, std::vector<std::pair<int, int>>, GradedLexLess> pairs;
  for (int i = 0; i < np; ++i) {
    for (int j = 0; j < np; ++j) {
      if (mask.size() != 0 && !mask(i, j)) continue;
      const Monomial m = p_basis.entries[i] * p_basis.entries[j];
      if (m.degree() >= 2) pairs[m].emplace_back(i, j);
    }
  }
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(np, np);
  for (const auto& [m, c] : a.terms()) {
    auto it = pairs.find(m);
    if (it == pairs.end()) continue;
    const double share = c / static_cast<double>(it->second.size());
    for (const auto& [i, j] : it->second) p(i, j) = share;
  }
  return p;
}

CasePreparation PrepareCase(const QuadraticSystem& sys, int case_id, const CompileOptions& options,
                            const SolverOptions& solver, double phase1_re) {
  CasePreparation prep;
  prep.tmpl = BuildTemplate(case_id);
  const int n = sys.n;
  auto count_entries = [&](const LyapunovTemplate& t) {
    const LyapunovProgram prog = CompileFeasibility(sys, t, 1.0, options);
    int nnz = 0;
    for (const auto& [i, j] : prog.p_entries) nnz += (i == j) ? 1 : 2;
    if (t.variable_term == VariableTerm::kFreeM4) nnz = prog.num_template_variables;
    return std::make_pair(nnz, prog.basis.size());
  };
  if (case_id == 1) {
    prep.basis_size = MakeMonomialBasis(n, 1, false).size();
    return prep;
  }
  if (case_id == 2 || case_id == 3) {
    prep.tmpl.mask = SparsityFromLyapunovEquation(sys.lambda_mat + sys.w_mat);
    std::tie(prep.num_template_entries, prep.basis_size) = count_entries(prep.tmpl);
    return prep;
  }
  // Cases 4-5: first trial with the full pattern of case 4.
  prep.phase1_re = phase1_re;
  const LyapunovTemplate first = BuildTemplate(4);
  const LyapunovSolveResult r = CheckLyapunov(sys, first, phase1_re, options, solver);
  if (r.status != FeasibilityStatus::kFeasible) {
    throw std::runtime_error("PrepareCase: first trial infeasible at Re = " + std::to_string(phase1_re));
  }
  const MultiPoly a = r.certificate->v - EnergyProduct(sys, first.shifts, first.energy_weight);
  const MonomialBasis m2 = MakeMonomialBasis(n, 2, true);
  const Mask refined = RefineSparsity(MinNormGram(a, m2, Mask()), 1e-7);
  for (const auto& g : BlockPartition(refined)) {
    std::vector<Monomial> mons;
    for (int i : g) mons.push_back(m2.entries[i]);
    prep.groups.push_back(std::move(mons));
  }
  if (case_id == 4) {
    prep.tmpl.mask = refined;
  } else {
    const double amax = MaxAbsCoefficient(a);
    for (const auto& [m, c] : a.terms()) {
      if (m.degree() >= 2 && std::abs(c) > 1e-7 * amax) prep.tmpl.free_monomials.push_back(m);
    }
  }
  std::tie(prep.num_template_entries, prep.basis_size) = count_entries(prep.tmpl);
  return prep;
}

}  // namespace flowsos
