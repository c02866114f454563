#include "flowsos/cli.h"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowsos/energy.h"
#include "flowsos/model.h"
#include "flowsos/robust.h"
#include "flowsos/sim.h"
#include "flowsos/sos.h"
#include "json_util.h"

namespace flowsos {

namespace {

using internal::Json;

/// Bad flags, files or values: exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs f, turning any exception into an InputError.
template <typename F>
auto AsInput(F f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

std::string Fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct ModelFlags {
  std::string path;
  bool mfe{false};
};

void AddModelFlags(CLI::App* cmd, ModelFlags* flags) {
  cmd->add_option("--model", flags->path, "Model file (qsys-v1); default is the nine-mode model");
  cmd->add_flag("--mfe", flags->mfe, "Use the built-in nine-mode shear-flow model");
}

QuadraticSystem LoadModel(const ModelFlags& flags) {
  if (!flags.path.empty() && flags.mfe) throw InputError("give either a model file or --mfe");
  if (flags.path.empty()) return MakeMfeModel();
  return AsInput([&] { return LoadQuadraticSystem(flags.path); });
}

std::string Join(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

std::string Header(const QuadraticSystem& sys, const std::vector<std::string>& args) {
  return "# flowsos " + std::string(kVersion) + "  model " + ModelHash(sys) + "  flags: " +
         Join(args) + "\n";
}

// energy-limit

int CmdEnergyLimit(const ModelFlags& flags, const std::vector<std::string>& args,
                   std::ostream& out) {
  const QuadraticSystem sys = LoadModel(flags);
  const ReLimit lim = AsInput([&] { return EnergyStabilityLimit(sys); });
  out << Header(sys, args);
  out << "Re_e = " << (lim.is_infinite() ? "inf" : Fmt(lim.value())) << "\n";
  if (lim.is_infinite()) {
    const Eigen::MatrixXd s = sys.w_mat + sys.w_mat.transpose();
    out << "max eigenvalue of W + W^T: "
        << Fmt(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues().maxCoeff()) << "\n";
  } else {
    const double re = lim.value();
    out << "max eigenvalue of 2 Lambda + Re (W + W^T): " << Fmt(EnergyMatrixMaxEigenvalue(sys, 0.999 * re))
        << " at 0.999 Re_e, " << Fmt(EnergyMatrixMaxEigenvalue(sys, 1.001 * re)) << " at 1.001 Re_e\n";
  }
  return 0;
}

// bisect

VariableTerm ParseVariableTerm(const std::string& s) {
  if (s == "none") return VariableTerm::kNone;
  if (s == "quadratic") return VariableTerm::kQuadratic;
  if (s == "quadratic_m2") return VariableTerm::kQuadraticM2;
  if (s == "free_m4") return VariableTerm::kFreeM4;
  throw InputError("template: unknown variable_term '" + s + "'");
}

/// Template file (format tag "template-v1"): variable_term, shifts, optional
/// mask as a list of [i, j] pairs and optional free_monomials as exponent
/// lists.
LyapunovTemplate LoadTemplateFile(const std::string& path, int n) {
  return AsInput([&] {
    const Json j = internal::ParseJsonText(internal::ReadTextFile(path), "template");
    internal::CheckFormatTag(j, "template-v1", "template");
    LyapunovTemplate t;
    try {
      t.variable_term = ParseVariableTerm(j.value("variable_term", std::string("none")));
      t.shifts = j.at("shifts").get<std::vector<double>>();
      if (j.contains("mask")) {
        const int np = t.variable_term == VariableTerm::kQuadraticM2
                           ? static_cast<int>(BinomialCount(n, 2))
                           : n;
        t.mask = Mask::Constant(np, np, false);
        for (const auto& pair : j["mask"]) {
          const auto ij = pair.get<std::vector<int>>();
          if (ij.size() != 2 || ij[0] < 0 || ij[1] < 0 || ij[0] >= np || ij[1] >= np) {
            throw std::runtime_error("template: mask entries must be [i, j] with 0 <= i, j < " +
                                     std::to_string(np));
          }
          t.mask(ij[0], ij[1]) = t.mask(ij[1], ij[0]) = true;
        }
      }
      if (j.contains("free_monomials")) {
        for (const auto& e : j["free_monomials"]) {
          t.free_monomials.emplace_back(e.get<std::vector<int>>());
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("template: ") + e.what());
    }
    t.Validate(n);
    return t;
  });
}

/// nnz(P) of the allowed entries, or dim(p) for a free quartic term.
int CountTemplateEntries(const QuadraticSystem& sys, const LyapunovTemplate& tmpl,
                         const CompileOptions& options) {
  const LyapunovProgram prog = CompileFeasibility(sys, tmpl, 1.0, options);
  if (tmpl.variable_term == VariableTerm::kFreeM4) return prog.num_template_variables;
  int nnz = 0;
  for (const auto& [i, j] : prog.p_entries) nnz += i == j ? 1 : 2;
  return nnz;
}

struct BisectFlags {
  ModelFlags model;
  int case_id{0};
  std::string template_path;
  double lo{1.0};
  double hi{200.0};
  double tol{0.1};
  bool low_re{false};
  long long seed{1};
  std::string out_path{"certificate.json"};
  bool verbose{false};
};

int CmdBisect(const BisectFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  if ((f.case_id == 0) == f.template_path.empty()) throw InputError("give exactly one of --case or --template");
  if (f.case_id != 0 && (f.case_id < 1 || f.case_id > 5)) throw InputError("--case must be 1..5");
  const QuadraticSystem sys = LoadModel(f.model);
  CompileOptions copt;
  copt.low_re = f.low_re;
  LyapunovTemplate tmpl;
  int monomials = 0, nnz = 0;
  std::string label;
  if (f.case_id == 1) {
    tmpl = BuildTemplate(1);
    label = "1";
  } else if (f.case_id != 0) {
    const CasePreparation prep = PrepareCase(sys, f.case_id, copt);
    tmpl = prep.tmpl;
    monomials = prep.basis_size;
    nnz = prep.num_template_entries;
    label = std::to_string(f.case_id);
  } else {
    tmpl = LoadTemplateFile(f.template_path, sys.n);
    monomials = MakeMonomialBasis(sys.n, static_cast<int>(tmpl.shifts.size()), false).size();
    nnz = CountTemplateEntries(sys, tmpl, copt);
    label = "custom";
  }
  BisectOptions opts;
  opts.re_lo = f.lo;
  opts.re_hi = f.hi;
  opts.tol = f.tol;
  opts.compile = copt;
  opts.verbose = f.verbose;
  BisectResult res;
  try {
    res = BisectMaxRe(sys, tmpl, opts);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  } catch (const std::runtime_error& e) {
    out << Header(sys, args) << "bisection failed: " << e.what() << "\n";
    return 1;
  }
  double seconds = 0.0;
  for (const auto& s : res.steps) seconds += s.seconds;
  out << Header(sys, args);
  out << "template: " << tmpl.Describe() << "\n";
  out << "case  Re_max  time_s  monomials  nnz\n";
  if (res.matrix_shortcut) {
    out << label << "  " << Fmt(res.re_max) << "  -  -  -\n";
    out << "certificate: none (energy matrix test)\n";
    return 0;
  }
  out << label << "  " << Fmt(res.re_max) << "  " << Fmt(seconds) << "  " << monomials << "  "
      << nnz << "\n";
  if (res.hit_upper) out << "note: feasible at the upper end of the bracket\n";
  const Certificate& cert = *res.certificate;
  const VerificationReport rep = VerifyCertificate(cert, sys, cert.re);
  AsInput([&] {
    SaveCertificate(cert, f.out_path, rep);
    return 0;
  });
  out << "certificate: " << f.out_path << "  Re " << Fmt(cert.re) << "  verified "
      << (rep.passed ? "yes" : "no") << "  max residual " << Fmt(rep.max_residual())
      << "  min eigenvalue " << Fmt(rep.min_eigenvalue()) << "\n";
  return rep.passed ? 0 : 1;
}

// verify

struct VerifyFlags {
  ModelFlags model;
  std::string cert_path;
  double re{0.0};
};

int CmdVerify(const VerifyFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  const Certificate cert = AsInput([&] { return LoadCertificate(f.cert_path); });
  const QuadraticSystem sys = LoadModel(f.model);
  if (cert.n != sys.n) throw InputError("certificate has n = " + std::to_string(cert.n) +
                                        " but the model has n = " + std::to_string(sys.n));
  const double re = f.re > 0.0 ? f.re : cert.re;
  const VerifyTolerances tol;
  const VerificationReport rep = VerifyCertificate(cert, sys, re, tol);
  out << Header(sys, args);
  out << "certificate: " << f.cert_path << "  (" << cert.description << ", Re " << Fmt(cert.re)
      << ")\n";
  out << "verified at Re " << Fmt(re) << "\n";
  out << "constraint  residual  lambda_min\n";
  std::vector<std::string> failing;
  auto row = [&](const std::string& name, double residual, double lambda) {
    out << name << "  " << Fmt(residual) << "  " << Fmt(lambda) << "\n";
    if (!(residual <= tol.residual)) failing.push_back(name + " identity residual");
    if (!(lambda >= tol.min_eigenvalue)) failing.push_back(name + " Gram eigenvalue");
  };
  row("H1", rep.residual_h1, rep.lambda_min_h1);
  row("H2", rep.residual_h2, rep.lambda_min_h2);
  if (rep.has_h3) row("H3", rep.residual_h3, rep.lambda_min_h3);
  out << "min eps  " << Fmt(rep.min_eps) << "  (bound " << Fmt(cert.eps_bar) << ")\n";
  if (!(rep.min_eps >= cert.eps_bar)) failing.push_back("eps lower bound");
  if (!cert.model_hash.empty() && cert.model_hash != ModelHash(sys)) failing.push_back("model hash");
  if (failing.empty() && rep.passed) {
    out << "result: PASS\n";
    return 0;
  }
  std::string names;
  for (const auto& s : failing) names += (names.empty() ? "" : ", ") + s;
  out << "result: FAIL (" << (names.empty() ? "verification" : names) << ")\n";
  return 1;
}

// robust

RobustTemplate ParseRobustTemplate(const std::string& spec) {
  if (spec == "energy") return EnergyRobustTemplate();
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string value = colon == std::string::npos ? "" : spec.substr(colon + 1);
  try {
    if (kind == "vmodified" && !value.empty()) {
      RobustTemplate t;
      t.vmodified_epsilon = std::stod(value);
      return t;
    }
    if (kind == "case" && !value.empty()) {
      RobustTemplate t;
      t.base = BuildTemplate(std::stoi(value));
      return t;
    }
  } catch (const std::exception& e) {
    throw InputError("--template: bad value in '" + spec + "': " + e.what());
  }
  throw InputError("--template must be energy, vmodified:<eps> or case:<N>, got '" + spec + "'");
}

struct RobustFlags {
  ModelFlags model;
  std::string bounds_path;
  std::string template_spec{"energy"};
  double re{0.0};
  bool bisect{false};
  double lo{1.0};
  double hi{200.0};
  double tol{0.1};
  bool verbose{false};
};

int CmdRobust(const RobustFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  const TailBounds bounds = AsInput([&] { return LoadTailBounds(f.bounds_path); });
  const QuadraticSystem sys = LoadModel(f.model);
  const RobustTemplate tmpl = ParseRobustTemplate(f.template_spec);
  AsInput([&] {
    tmpl.Validate(sys.n);
    return 0;
  });
  if (f.bisect == (f.re > 0.0)) throw InputError("give exactly one of --re or --bisect");
  out << Header(sys, args);
  out << "template: " << tmpl.Describe() << "\n";
  out << "bounds: kappa_s " << Fmt(bounds.kappa_s) << "  c1 " << Fmt(bounds.c1) << "  c2 "
      << Fmt(bounds.c2) << "  c3 " << Fmt(bounds.c3) << "  d " << Fmt(bounds.d) << "  chi_zero "
      << (bounds.chi_zero ? "yes" : "no") << "\n";
  if (f.bisect) {
    RobustBisectOptions o;
    o.re_lo = f.lo;
    o.re_hi = f.hi;
    o.tol = f.tol;
    o.verbose = f.verbose;
    RobustBisectResult r;
    try {
      r = BisectRobust(sys, bounds, tmpl, o);
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    } catch (const std::runtime_error& e) {
      out << "bisection failed: " << e.what() << "\n";
      return 1;
    }
    double seconds = 0.0;
    for (const auto& s : r.steps) seconds += s.seconds;
    out << "Re_max = " << Fmt(r.re_max) << "  (" << r.steps.size() << " solves, " << Fmt(seconds)
        << " s)\n";
    if (r.hit_upper) out << "note: feasible at the upper end of the bracket\n";
    return 0;
  }
  RobustSolveResult r;
  try {
    r = CheckRobust(sys, bounds, tmpl, f.re);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  out << "Re " << Fmt(f.re) << ": " << ToString(r.status) << "  (" << Fmt(r.seconds) << " s)\n";
  if (!r.checks.empty()) {
    out << "identity  residual  lambda_min\n";
    for (const auto& c : r.checks) {
      out << c.name << "  " << Fmt(c.residual) << "  " << Fmt(c.lambda_min) << "\n";
    }
    out << "eps1 " << Fmt(r.eps1) << "  eps2 " << Fmt(r.eps2) << "\n";
  }
  return r.status == FeasibilityStatus::kFeasible ? 0 : 1;
}

// probe

std::vector<double> ParseGrid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const std::string trimmed = item.substr(b, item.find_last_not_of(" \t") - b + 1);
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(trimmed, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != trimmed.size()) throw InputError("--re-grid: bad number '" + trimmed + "'");
    grid.push_back(v);
  }
  return grid;
}

struct ProbeFlags {
  ModelFlags model;
  std::string grid;
  int samples{50};
  double t_final{1000.0};
  double dt{1e-2};
  double radius{2.0};
  unsigned long long seed{1};
  std::string out_path;
};

int CmdProbe(const ProbeFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  const QuadraticSystem sys = LoadModel(f.model);
  const std::vector<double> grid = ParseGrid(f.grid);
  ProbeOptions o;
  o.t_final = f.t_final;
  o.dt = f.dt;
  o.radius = f.radius;
  o.seed = f.seed;
  if (!(o.dt > 0.0) || !(o.t_final >= o.dt)) throw InputError("need dt > 0 and T >= dt");
  if (!(o.radius > 0.0)) throw InputError("--radius must be positive");
  const ProbeReport rep = AsInput([&] { return StabilityProbe(sys, grid, f.samples, o); });
  out << Header(sys, args);
  out << "T " << Fmt(o.t_final) << "  dt " << Fmt(o.dt) << "  radius " << Fmt(o.radius)
      << "  converged when |a(T)| < " << Fmt(o.tolerance) << "\n";
  out << "Re  samples  converged  fraction  seed\n";
  for (const ProbeRow& r : rep.rows) {
    out << Fmt(r.re) << "  " << r.samples << "  " << r.converged << "  " << Fmt(r.fraction())
        << "  " << rep.seed << "\n";
  }
  if (!f.out_path.empty()) {
    Json j = Json::parse(ProbeReportToJson(rep));
    j["version"] = kVersion;
    j["model_hash"] = ModelHash(sys);
    j["flags"] = Join(args);
    AsInput([&] {
      internal::WriteTextFile(f.out_path, j.dump(2) + "\n");
      return 0;
    });
  }
  return 0;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sum-of-squares stability certificates for quadratic flow models", "flowsos"};
  app.set_version_flag("--version", std::string("flowsos ") + kVersion);
  app.require_subcommand(1);

  ModelFlags energy_model;
  CLI::App* energy = app.add_subcommand("energy-limit", "Energy-method stability limit Re_e");
  energy->add_option("model_path", energy_model.path, "Model file (qsys-v1)");
  energy->add_flag("--mfe", energy_model.mfe, "Use the built-in nine-mode shear-flow model");

  BisectFlags bf;
  CLI::App* bisect = app.add_subcommand("bisect", "Largest certified Re of a Lyapunov template");
  AddModelFlags(bisect, &bf.model);
  CLI::Option* case_opt = bisect->add_option("--case", bf.case_id, "Table case 1-5");
  CLI::Option* tmpl_opt = bisect->add_option("--template", bf.template_path, "Template file (template-v1)");
  case_opt->excludes(tmpl_opt);
  bisect->add_option("--lo", bf.lo, "Lower end of the Re bracket")->capture_default_str();
  bisect->add_option("--hi", bf.hi, "Upper end of the Re bracket")->capture_default_str();
  bisect->add_option("--tol", bf.tol, "Bisection tolerance")->capture_default_str();
  bisect->add_flag("--low-re", bf.low_re, "Add the low-Re block H3");
  bisect->add_option("--seed", bf.seed, "Recorded in the report (the solver is deterministic)");
  bisect->add_option("--out", bf.out_path, "Certificate output path")->capture_default_str();
  bisect->add_flag("--verbose", bf.verbose, "Print one line per solve to stderr");

  VerifyFlags vf;
  CLI::App* verify = app.add_subcommand("verify", "Independent check of a certificate file");
  verify->add_option("cert_path", vf.cert_path, "Certificate file (cert-v1)")->required();
  AddModelFlags(verify, &vf.model);
  verify->add_option("--re", vf.re, "Re to verify at (default: the certificate's)");

  RobustFlags rf;
  CLI::App* robust = app.add_subcommand("robust", "Tail-robust certificate at one Re or by bisection");
  AddModelFlags(robust, &rf.model);
  robust->add_option("--bounds", rf.bounds_path, "Tail bounds file (tail-v1)")->required();
  robust->add_option("--template", rf.template_spec, "energy, vmodified:<eps> or case:<N>")
      ->capture_default_str();
  robust->add_option("--re", rf.re, "Check a single Re");
  robust->add_flag("--bisect", rf.bisect, "Bisect for the largest certified Re");
  robust->add_option("--lo", rf.lo, "Lower end of the Re bracket")->capture_default_str();
  robust->add_option("--hi", rf.hi, "Upper end of the Re bracket")->capture_default_str();
  robust->add_option("--tol", rf.tol, "Bisection tolerance")->capture_default_str();
  robust->add_flag("--verbose", rf.verbose, "Print one line per solve to stderr");

  ProbeFlags pf;
  CLI::App* probe = app.add_subcommand("probe", "Fraction of random trajectories decaying to zero");
  AddModelFlags(probe, &pf.model);
  probe->add_option("--re-grid", pf.grid, "Comma-separated Re values");
  probe->add_option("--samples", pf.samples, "Trajectories per Re")->capture_default_str();
  probe->add_option("-T", pf.t_final, "Integration time")->capture_default_str();
  probe->add_option("--dt", pf.dt, "RK4 step")->capture_default_str();
  probe->add_option("--radius", pf.radius, "Largest initial norm")->capture_default_str();
  probe->add_option("--seed", pf.seed, "Random seed")->capture_default_str();
  probe->add_option("--out", pf.out_path, "Probe report output path (probe-v1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);

  try {
    if (energy->parsed()) return CmdEnergyLimit(energy_model, args, out);
    if (bisect->parsed()) return CmdBisect(bf, args, out);
    if (verify->parsed()) return CmdVerify(vf, args, out);
    if (robust->parsed()) return CmdRobust(rf, args, out);
    if (probe->parsed()) return CmdProbe(pf, args, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace flowsos
