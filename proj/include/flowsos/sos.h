#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsos/energy.h"
#include "flowsos/model.h"
#include "flowsos/poly.h"
#include "flowsos/sdp.h"
#include "flowsos/sos_program.h"

namespace flowsos {

/// Symmetric boolean pattern.
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// The non-energy part A of a Lyapunov candidate V = A + B.
enum class VariableTerm {
  kNone,
  /// a^T P a.
  kQuadratic,
  /// m2(a)^T P m2(a) over m2 with constant, keeping terms of degree >= 2.
  kQuadraticM2,
  /// p^T m4(a) over monomials of degree 2..4.
  kFreeM4,
};

/// V = A + w * prod_i E_{theta_i} with E_theta = |a + theta c|^2 / 2.
struct LyapunovTemplate {
  /// Table case 1..5, or 0 for a custom template.
  int case_id{0};
  VariableTerm variable_term{VariableTerm::kNone};
  /// Allowed entries of P: n x n for kQuadratic, over m2 with constant for
  /// kQuadraticM2. Empty means all entries.
  Mask mask;
  /// Allowed monomials of p for kFreeM4; empty means all of degree 2..4.
  std::vector<Monomial> free_monomials;
  std::vector<double> shifts;
  double energy_weight{1.0};

  /// Degree of the energy product, 2 * (number of shifts).
  int degree() const { return 2 * static_cast<int>(shifts.size()); }
  int variable_degree() const;
  /// Checks the structural rules: at least one shift; with two or more
  /// shifts the first is 0 and their mean is 1; deg A < deg B; mask sizes.
  /// @throws std::invalid_argument on violation.
  void Validate(int n) const;
  /// Formula such as "a^T P a + E0*E2".
  std::string Describe() const;
};

/// The template of a table case with full masks.
/// @throws std::invalid_argument unless 1 <= case_id <= 5.
LyapunovTemplate BuildTemplate(int case_id);

/// The energy product prod_i E_{theta_i} (times @p weight) in a.
/// @throws std::invalid_argument if a nonzero shift needs an absent c.
MultiPoly EnergyProduct(const QuadraticSystem& sys, const std::vector<double>& shifts,
                        double weight = 1.0);

/// Sign-flip symmetries a -> s .* a (s in {+1,-1}^n) that commute with the
/// dynamics and leave given polynomials invariant, represented by the
/// GF(2) span S of exponent parities of the monomials of a_i f_i(a) and of
/// the invariant polynomials. A monomial is invariant iff its parity lies in
/// S; two monomials share an isotypic class iff their parities differ by an
/// element of S.
class SignSymmetry {
 public:
  SignSymmetry(const QuadraticSystem& sys, const std::vector<MultiPoly>& invariants);
  /// Symmetries of the given polynomials alone, in @p num_vars variables.
  SignSymmetry(int num_vars, const std::vector<MultiPoly>& invariants);

  bool IsInvariant(const Monomial& m) const;
  /// Canonical representative of the parity class of m modulo S.
  std::uint64_t ClassKey(const Monomial& m) const;
  /// Class labels 0, 1, ... of the basis entries, numbered by first
  /// appearance.
  std::vector<int> Labels(const MonomialBasis& basis) const;
  /// Number of group elements, 2^(n - dim S).
  long long group_order() const;

 private:
  std::uint64_t Reduce(std::uint64_t v) const;
  void Insert(std::uint64_t v);
  void AddInvariants(const std::vector<MultiPoly>& invariants);

  int n_;
  // Echelon basis of S, each with a distinct leading bit.
  std::vector<std::uint64_t> rows_;
};

struct CompileOptions {
  /// Lower bound on the coefficients of l_1 and l_2.
  double eps_bar{1e-5};
  /// Adds the condition -dV/da . Lambda a SOS, which makes a certificate
  /// valid for all smaller Re.
  bool low_re{false};
  /// Splits Gram matrices by sign-symmetry classes.
  bool use_symmetry{true};
  /// Target coefficients on monomials no Gram pair can produce are dropped
  /// when at most this times the largest fixed coefficient.
  double drop_tolerance{1e-12};
};

/// The compiled SOS program of the Lyapunov conditions at one Re:
///   V - l1 = m^T H1 m,   -dV/da . f - l2 = m^T H2 m,   [-dV/da . Lambda a =
///   m^T H3 m],   with l_i = sum_j eps_ij a_j^2, eps_ij >= eps_bar.
struct LyapunovProgram {
  SosProgram program;
  LyapunovTemplate tmpl;
  CompileOptions options;
  double re{0.0};
  /// V in terms of the decision variables.
  ParamPoly v;
  /// Gram basis shared by all identities and its class labels.
  MonomialBasis basis;
  std::vector<int> block_of;
  std::vector<AffineExpr> eps1;
  std::vector<AffineExpr> eps2;
  int id_h1{-1};
  int id_h2{-1};
  int id_h3{-1};
  /// Basis of P (a, or m2 with constant) and the entries that are variables.
  MonomialBasis p_basis;
  std::vector<std::pair<int, int>> p_entries;
  /// Number of free template coefficients after symmetry reduction: one per
  /// distinct monomial the allowed entries of P produce.
  int num_template_variables{0};
};

/// @throws std::invalid_argument if re <= 0, eps_bar <= 0, or the template
/// is invalid for the system.
LyapunovProgram CompileFeasibility(const QuadraticSystem& sys, const LyapunovTemplate& tmpl,
                                   double re, const CompileOptions& options = {});

/// A Lyapunov certificate: V with its Gram matrices over a stated basis.
struct Certificate {
  int n{0};
  std::string description;
  MultiPoly v;
  MonomialBasis basis;
  std::vector<int> block_of;
  Eigen::MatrixXd h1;
  Eigen::MatrixXd h2;
  std::optional<Eigen::MatrixXd> h3;
  Eigen::VectorXd eps1;
  Eigen::VectorXd eps2;
  double re{0.0};
  double eps_bar{1e-5};
  std::string model_hash;
};

struct VerifyTolerances {
  double residual{1e-7};
  double min_eigenvalue{-1e-9};
};

/// Independent re-check of a certificate at a given Re.
struct VerificationReport {
  double re{0.0};
  /// Max abs coefficient of V - l1 - m^T H1 m, and so on.
  double residual_h1{0.0};
  double residual_h2{0.0};
  double residual_h3{0.0};
  double lambda_min_h1{0.0};
  double lambda_min_h2{0.0};
  double lambda_min_h3{0.0};
  bool has_h3{false};
  double min_eps{0.0};
  bool passed{false};

  double max_residual() const;
  double min_eigenvalue() const;
};

/// Recomputes every identity from V, the system and the Gram matrices. At
/// re != cert.re the H2 identity uses H2 + (1/re - 1/cert.re) H3 when H3 is
/// present, and H2 unchanged otherwise.
VerificationReport VerifyCertificate(const Certificate& cert, const QuadraticSystem& sys,
                                     double re, const VerifyTolerances& tol = {});

/// The certificate for re: H2 + (1/re - 1/cert.re) H3.
/// @throws std::invalid_argument without H3.
Certificate TransportCertificate(const Certificate& cert, double re);

struct LyapunovSolveResult {
  /// Feasible only when the extracted certificate verifies.
  FeasibilityStatus status{FeasibilityStatus::kIndeterminate};
  SolveOutcome outcome;
  std::optional<Certificate> certificate;
  VerificationReport report;
  double seconds{0.0};
};

LyapunovSolveResult SolveLyapunovProgram(const LyapunovProgram& prog, const QuadraticSystem& sys,
                                         const SolverOptions& solver = {});

/// Compiles and solves at one Re.
LyapunovSolveResult CheckLyapunov(const QuadraticSystem& sys, const LyapunovTemplate& tmpl,
                                  double re, const CompileOptions& options = {},
                                  const SolverOptions& solver = {});

struct BisectOptions {
  double re_lo{1.0};
  double re_hi{200.0};
  double tol{0.1};
  CompileOptions compile;
  SolverOptions solver;
  /// Prints one line per evaluation to stderr.
  bool verbose{false};
};

struct BisectStep {
  double re{0.0};
  FeasibilityStatus status{FeasibilityStatus::kIndeterminate};
  double slack{0.0};
  int iterations{0};
  double seconds{0.0};
};

struct BisectResult {
  double re_max{0.0};
  /// True when re_hi itself was feasible.
  bool hit_upper{false};
  /// True for V = E0, solved by the matrix test without an SDP.
  bool matrix_shortcut{false};
  std::optional<Certificate> certificate;
  std::vector<BisectStep> steps;
};

/// Largest Re within tol at which the template yields a verified
/// certificate. Indeterminate solves count as infeasible. The template
/// V = E0 uses the energy-limit matrix test instead.
/// @throws std::runtime_error if re_lo is not feasible.
/// @throws std::invalid_argument if re_lo >= re_hi or tol <= 0.
BisectResult BisectMaxRe(const QuadraticSystem& sys, const LyapunovTemplate& tmpl,
                         const BisectOptions& options = {});

struct ReWindow {
  ReLimit re_min{ReLimit::Finite(0.0)};
  ReLimit re_max{ReLimit::Infinite()};
  /// True when the lower end reached the cap, i.e. the condition holds for
  /// all Re in (0, re_max].
  bool lower_unbounded{false};
};

struct ReWindowOptions {
  double eps_bar{1e-5};
  bool use_symmetry{true};
  /// Largest 1/Re explored for the lower end.
  double s_cap{1e3};
  SolverOptions solver;
};

/// Range of Re over which the fixed V satisfies the derivative condition,
/// from two SDPs in s = 1/Re (the condition is affine in s).
/// @throws std::runtime_error if V - l1 is not SOS or no Re works.
ReWindow ComputeReWindow(const MultiPoly& v, const QuadraticSystem& sys,
                         const ReWindowOptions& options = {});

/// Pattern of the solution of L^T P + P L = -I: entries with |P_ij| above
/// relative_threshold * max |P|.
/// @throws std::invalid_argument if L is not Hurwitz.
Mask SparsityFromLyapunovEquation(const Eigen::MatrixXd& l, double relative_threshold = 1e-10);

/// Entries with |P_ij| > threshold * max |P|; threshold <= 0 keeps every entry.
Mask RefineSparsity(const Eigen::MatrixXd& p, double threshold = 1e-7);

/// Connected components of the graph of a symmetric mask, each sorted, in
/// order of their smallest index.
/// @throws std::invalid_argument if the mask is not square and symmetric.
std::vector<std::vector<int>> BlockPartition(const Mask& mask);

/// Minimum-Frobenius-norm P over the masked entries of @p p_basis that
/// reproduces the coefficients of @p a (entries whose product has degree
/// < 2 are excluded).
Eigen::MatrixXd MinNormGram(const MultiPoly& a, const MonomialBasis& p_basis, const Mask& mask);

/// Facts recorded while preparing a table case.
struct CasePreparation {
  LyapunovTemplate tmpl;
  /// Gram basis size (monomial count).
  int basis_size{0};
  /// nnz(P) for cases 2-4, dim(p) for case 5.
  int num_template_entries{0};
  /// Re of the first trial for cases 4-5, 0 otherwise.
  double phase1_re{0.0};
  /// Monomial groups of m2 from block_partition of the case-4 mask.
  std::vector<std::vector<Monomial>> groups;
};

/// Template of a table case with its sparsity: cases 2-3 use the pattern of
/// the Lyapunov equation for L = Lambda + W; cases 4-5 first solve case 4
/// with the full pattern at phase1_re and keep coefficients above 1e-7
/// relative.
/// @throws std::runtime_error if the first trial is not feasible.
CasePreparation PrepareCase(const QuadraticSystem& sys, int case_id,
                            const CompileOptions& options = {},
                            const SolverOptions& solver = {}, double phase1_re = 10.0);

/// Certificate file text (format tag "cert-v1"); the report is embedded
/// when given.
std::string CertificateToJson(const Certificate& cert,
                              const std::optional<VerificationReport>& report = std::nullopt);
/// @throws std::runtime_error with line/column or field information.
Certificate CertificateFromJson(const std::string& text);
void SaveCertificate(const Certificate& cert, const std::string& path,
                     const std::optional<VerificationReport>& report = std::nullopt);
Certificate LoadCertificate(const std::string& path);

}  // namespace flowsos
