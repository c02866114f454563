// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any gating criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "flowsos/cli.h"
#include "flowsos/energy.h"
#include "flowsos/model.h"
#include "flowsos/robust.h"
#include "flowsos/sdp.h"
#include "flowsos/sim.h"
#include "flowsos/sos.h"
#include "flowsos/sos_program.h"

namespace flowsos {
namespace {

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Verdict {
  bool pass{false};
  std::string detail;
};

int RunTool(const std::vector<std::string>& args, std::string* out) {
  std::vector<const char*> argv = {"flowsos"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), o, e);
  *out = o.str() + e.str();
  return code;
}

bool Verified(const VerificationReport& r, const Certificate& c) {
  return r.passed && r.max_residual() <= 1e-7 && r.min_eigenvalue() >= -1e-9 && r.min_eps >= 1e-5 &&
         c.eps_bar >= 1e-5;
}

/// Certified results shared between criteria.
struct State {
  QuadraticSystem sys = MakeMfeModel();
  std::filesystem::path dir;
  std::map<int, Certificate> certificates;
  std::map<int, int> basis_sizes;
};

/// Bisects a table case through the command-line tool and reloads its
/// certificate.
Verdict CliCase(State* st, int case_id, double lo, double band_lo, double band_hi) {
  const std::string path = (st->dir / ("case" + std::to_string(case_id) + ".json")).string();
  std::string out;
  const auto start = Clock::now();
  const int code = RunTool({"bisect", "--case", std::to_string(case_id), "--lo", Fmt(lo), "--hi",
                            "200", "--tol", "0.1", "--out", path},
                           &out);
  const double seconds = Since(start);
  if (code != 0) return {false, "bisect exited " + std::to_string(code) + ": " + out};
  const Certificate cert = LoadCertificate(path);
  const VerificationReport rep = VerifyCertificate(cert, st->sys, cert.re);
  st->certificates[case_id] = cert;
  std::istringstream lines(out);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream row(line);
    int id = 0, monomials = 0;
    double re = 0.0, t = 0.0;
    if (row >> id >> re >> t >> monomials && id == case_id) st->basis_sizes[case_id] = monomials;
  }
  const bool in_band = cert.re >= band_lo && cert.re <= band_hi;
  return {in_band && Verified(rep, cert),
          "Re_max = " + Fmt(cert.re) + " in [" + Fmt(band_lo) + ", " + Fmt(band_hi) +
              "], residual " + Fmt(rep.max_residual()) + ", lambda_min " +
              Fmt(rep.min_eigenvalue()) + ", min eps " + Fmt(rep.min_eps) + ", " +
              Fmt(seconds) + " s"};
}

Verdict EnergyLimit(State*) {
  std::string out;
  const auto start = Clock::now();
  const int code = RunTool({"energy-limit", "--mfe"}, &out);
  const double seconds = Since(start);
  const auto pos = out.find("Re_e = ");
  if (code != 0 || pos == std::string::npos) return {false, "energy-limit failed: " + out};
  const double re = std::stod(out.substr(pos + 7));
  return {std::abs(re - 7.5) <= 0.05 && seconds < 1.0,
          "Re_e = " + Fmt(re) + ", " + Fmt(seconds) + " s"};
}

Verdict CasesFourFive(State* st) {
  const std::vector<std::vector<std::string>> expected = {
      {"a2", "a3", "a1*a2", "a1*a3", "a4*a6", "a5*a6", "a4*a7", "a5*a7", "a4*a8", "a5*a8",
       "a2*a9", "a3*a9"},
      {"a4", "a5", "a1*a4", "a1*a5", "a2*a6", "a3*a6", "a2*a7", "a3*a7", "a2*a8", "a3*a8",
       "a4*a9", "a5*a9"},
      {"a6", "a7", "a8", "a2*a4", "a3*a4", "a2*a5", "a3*a5", "a1*a6", "a1*a7", "a1*a8", "a6*a9",
       "a7*a9", "a8*a9"},
      {"1", "a1", "a9", "a2*a3", "a4*a5", "a6*a7", "a6*a8", "a7*a8", "a1*a9", "a1^2", "a2^2",
       "a3^2", "a4^2", "a5^2", "a6^2", "a7^2", "a8^2", "a9^2"}};
  std::set<std::set<std::string>> want;
  for (const auto& g : expected) want.insert({g.begin(), g.end()});

  const auto start = Clock::now();
  const CasePreparation prep = PrepareCase(st->sys, 4);
  std::set<std::set<std::string>> got;
  for (const auto& g : prep.groups) {
    std::set<std::string> s;
    for (const auto& m : g) s.insert(m.ToString());
    got.insert(s);
  }
  const bool groups_match = got == want;
  st->basis_sizes[4] = prep.basis_size;
  std::string detail = "groups " + std::string(groups_match ? "match" : "differ") + " (" +
                       std::to_string(prep.groups.size()) + " blocks, nnz " +
                       std::to_string(prep.num_template_entries) + ")";

  bool stretch = groups_match;
  for (const int c : {4, 5}) {
    const CasePreparation p = c == 4 ? prep : PrepareCase(st->sys, 5);
    st->basis_sizes[c] = p.basis_size;
    BisectOptions o;
    o.re_lo = p.phase1_re;
    o.re_hi = 200.0;
    o.tol = 0.1;
    const BisectResult r = BisectMaxRe(st->sys, p.tmpl, o);
    const VerificationReport rep = VerifyCertificate(*r.certificate, st->sys, r.re_max);
    const bool ok = r.re_max >= 49.0 && r.re_max <= 59.0 && Verified(rep, *r.certificate);
    stretch = stretch && ok;
    st->certificates[c] = *r.certificate;
    detail += "; case " + std::to_string(c) + " Re_max = " + Fmt(r.re_max) +
              (ok ? " verified in [49, 59]" : " outside [49, 59] or unverified");
  }
  if (stretch) return {true, detail + ", " + Fmt(Since(start)) + " s"};

  const LyapunovSolveResult at40 = CheckLyapunov(st->sys, prep.tmpl, 40.0);
  const bool fallback = groups_match && at40.status == FeasibilityStatus::kFeasible &&
                        Verified(VerifyCertificate(*at40.certificate, st->sys, 40.0), *at40.certificate);
  if (at40.certificate) st->certificates[40] = *at40.certificate;
  return {fallback, detail + "; fallback at Re 40 " + (fallback ? "verifies" : "fails")};
}

Verdict Conservation(State* st) {
  const double worst = CheckEnergyConservation(st->sys, 10000, 7);
  return {worst <= 1e-9, "max |a^T N(a) a| / |a|^3 = " + Fmt(worst)};
}

Verdict GramRoundTrip(State*) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick_n(1, 6), pick_d(1, 3);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = pick_n(rng), d = pick_d(rng);
    const MonomialBasis basis = MakeMonomialBasis(n, d, true);
    const int m = basis.size();
    Eigen::MatrixXd h(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j <= i; ++j) h(i, j) = h(j, i) = g(rng);
    }
    const MultiPoly target = GramQuadraticForm(basis, h);
    worst = std::max(worst, GramParametrize(target, basis).MaxResidual(h));
  }
  return {worst <= 1e-12, "max coefficient residual " + Fmt(worst) + " over 100 instances"};
}

FeasibilityStatus SosStatus(const MultiPoly& p, const MonomialBasis& basis) {
  SosProgram sp;
  sp.AddSosConstraint(ToParamPoly(p), basis);
  return Solve(sp.BuildSdp()).status;
}

Verdict Motzkin(State*) {
  MultiPoly motzkin(2);
  motzkin.AddTerm(Monomial({4, 2}), 1.0);
  motzkin.AddTerm(Monomial({2, 4}), 1.0);
  motzkin.AddTerm(Monomial({2, 2}), -3.0);
  motzkin.AddTerm(Monomial({0, 0}), 1.0);
  MultiPoly square(2);
  square.AddTerm(Monomial({4, 0}), 1.0);
  square.AddTerm(Monomial({2, 2}), 2.0);
  square.AddTerm(Monomial({0, 4}), 1.0);
  const FeasibilityStatus m = SosStatus(motzkin, MakeMonomialBasis(2, 3, true));
  const FeasibilityStatus s = SosStatus(square, MakeMonomialBasis(2, 2, true));
  return {m == FeasibilityStatus::kInfeasible && s == FeasibilityStatus::kFeasible,
          "Motzkin " + ToString(m) + ", (a1^2 + a2^2)^2 " + ToString(s)};
}

Verdict LowRe(State* st) {
  CompileOptions c;
  c.low_re = true;
  const CasePreparation prep = PrepareCase(st->sys, 2, c);
  std::vector<Certificate> certs;
  BisectOptions o;
  o.compile = c;
  o.tol = 0.1;
  const BisectResult b = BisectMaxRe(st->sys, prep.tmpl, o);
  certs.push_back(*b.certificate);
  for (const double re : {5.0, 10.0, 20.0}) {
    const LyapunovSolveResult r = CheckLyapunov(st->sys, prep.tmpl, re, c);
    if (r.certificate) certs.push_back(*r.certificate);
  }
  bool ok = certs.size() == 4;
  std::string detail = std::to_string(certs.size()) + " certificates with H3 (bisection Re " +
                       Fmt(b.re_max) + ")";
  for (const Certificate& cert : certs) {
    ok = ok && cert.h3.has_value();
    for (const double f : {1.0, 0.5, 0.1}) {
      const VerificationReport r = VerifyCertificate(cert, st->sys, f * cert.re);
      if (!Verified(r, cert)) {
        ok = false;
        detail += "; fails at Re " + Fmt(f * cert.re);
      }
    }
  }
  return {ok, detail + (ok ? ", all verify at Re, Re/2 and Re/10" : "")};
}

Verdict Window(State* st) {
  bool ok = true;
  std::string detail;
  for (const int c : {2, 3}) {
    const auto it = st->certificates.find(c);
    if (it == st->certificates.end()) return {false, "no case " + std::to_string(c) + " certificate"};
    const ReWindow w = ComputeReWindow(it->second.v, st->sys);
    const double lo = w.re_min.value();
    const double hi = w.re_max.is_infinite() ? INFINITY : w.re_max.value();
    const bool in = lo <= it->second.re && it->second.re <= hi;
    ok = ok && in;
    detail += "case " + std::to_string(c) + " [" + Fmt(lo) + ", " + Fmt(hi) + "] " +
              (in ? "contains " : "misses ") + Fmt(it->second.re) + "; ";
  }
  const ReWindow e = ComputeReWindow(EnergyProduct(st->sys, {0.0}), st->sys);
  const double e_hi = e.re_max.is_infinite() ? INFINITY : e.re_max.value();
  ok = ok && std::abs(e_hi - 7.5) <= 0.05;
  return {ok, detail + "E0 upper end " + Fmt(e_hi)};
}

Verdict Schur(State*) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> pick(1, 6);
  std::normal_distribution<double> g;
  int discrepancies = 0;
  for (int k = 0; k < 1000; ++k) {
    Eigen::VectorXd u(pick(rng));
    for (auto& x : u) x = g(rng);
    const double t = 2.0 * g(rng) + 1.0;
    const bool norm_bound = u.norm() < t;
    const bool pd = Eigen::LLT<Eigen::MatrixXd>(SchurBlock(u, t)).info() == Eigen::Success;
    if (norm_bound != pd) ++discrepancies;
  }
  return {discrepancies == 0, std::to_string(discrepancies) + " discrepancies in 1000 samples"};
}

Verdict Robust(State* st) {
  TailBounds b;
  b.kappa_s = -1.0;
  b.c1 = 0.5;
  b.c2 = 0.2;
  b.c3 = 0.3;
  b.chi_zero = true;
  RobustBisectOptions o;
  o.re_lo = 1.0;
  o.re_hi = 20.0;
  o.tol = 0.1;
  const RobustBisectResult r = BisectRobust(st->sys, b, EnergyRobustTemplate(), o);
  return {std::abs(r.re_max - 7.5) <= 0.2, "Re_max = " + Fmt(r.re_max) + " with V = E0 + q^2"};
}

Verdict Simulation(State* st) {
  if (st->certificates.empty()) return {false, "no certificates"};
  bool ok = true;
  std::string detail;
  for (const auto& [id, cert] : st->certificates) {
    DecreaseReport total;
    total.max_vdot = total.max_delta_v = -INFINITY;
    bool blew_up = false;
    for (int k = 0; k < 100; ++k) {
      const Trajectory t = Integrate(st->sys, RandomInitialCondition(9, 2.0, 1000 + k), cert.re, 100.0);
      blew_up = blew_up || t.blow_up_step.has_value();
      total = Combine(total, CheckDecrease(cert.v, st->sys, cert.re, t));
    }
    ok = ok && total.num_increases == 0 && !blew_up;
    detail += (id == 40 ? "fallback" : "case " + std::to_string(id)) + " Re " + Fmt(cert.re) +
              ": " + std::to_string(total.num_increases) + " increases in " +
              std::to_string(total.num_checked) + " samples; ";
  }
  double lo = INFINITY, hi = -INFINITY;
  for (const std::uint64_t seed : {5u, 6u, 7u}) {
    const double ratio =
        Rk4ErrorRatio(st->sys, RandomInitialCondition(9, 1.0, seed).normalized(), 20.0, 10.0, 0.1);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  ok = ok && lo >= 12.0 && hi <= 20.0;
  return {ok, detail + "RK4 ratio in [" + Fmt(lo) + ", " + Fmt(hi) + "]"};
}

Verdict BasisSizes(State* st) {
  for (const int c : {2, 3, 4, 5}) {
    if (!st->basis_sizes.count(c)) st->basis_sizes[c] = PrepareCase(st->sys, c).basis_size;
  }
  const auto& s = st->basis_sizes;
  return {s.at(2) == 54 && s.at(3) == 219 && s.at(4) == 219 && s.at(5) == 219,
          "case 2: " + std::to_string(s.at(2)) + ", cases 3-5: " + std::to_string(s.at(3)) + ", " +
              std::to_string(s.at(4)) + ", " + std::to_string(s.at(5))};
}

}  // namespace
}  // namespace flowsos

int main() {
  using namespace flowsos;
  State st;
  st.dir = std::filesystem::temp_directory_path() / "flowsos_acceptance";
  std::filesystem::create_directories(st.dir);
  const std::vector<std::pair<std::string, std::function<Verdict(State*)>>> criteria = {
      {"energy limit", EnergyLimit},
      {"case 2 bisection", [](State* s) { return CliCase(s, 2, 1.0, 22.5, 25.5); }},
      {"case 3 bisection", [](State* s) { return CliCase(s, 3, 1.0, 27.0, 30.0); }},
      {"cases 4-5", CasesFourFive},
      {"energy conservation", Conservation},
      {"Gram round-trip", GramRoundTrip},
      {"Motzkin", Motzkin},
      {"low-Re soundness", LowRe},
      {"Re-window consistency", Window},
      {"Schur lemma", Schur},
      {"robust reduction", Robust},
      {"simulation soundness", Simulation},
      {"monomial counts", BasisSizes},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto start = Clock::now();
    try {
      v = criteria[i].second(&st);
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("%s %2zu %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), v.detail.c_str(), Since(start));
    std::fflush(stdout);
  }
  std::filesystem::remove_all(st.dir);
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
