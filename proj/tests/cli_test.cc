#include "flowsos/cli.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "flowsos/model.h"
#include "flowsos/sos.h"

namespace flowsos {
namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult RunTool(std::vector<std::string> args) {
  args.insert(args.begin(), "flowsos");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("flowsos_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string Write(const std::string& name, const std::string& text) {
    const std::string path = (dir_ / name).string();
    std::ofstream(path) << text;
    return path;
  }
  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  std::filesystem::path dir_;
};

QuadraticSystem Diagonal(double lambda, const Eigen::MatrixXd& w) {
  QuadraticSystem sys;
  sys.n = static_cast<int>(w.rows());
  sys.lambda_mat = lambda * Eigen::MatrixXd::Identity(sys.n, sys.n);
  sys.w_mat = w;
  sys.q_tensors.assign(sys.n, Eigen::MatrixXd::Zero(sys.n, sys.n));
  return sys;
}

TEST_F(CliTest, EnergyLimitMfe) {
  const CliResult r = RunTool({"energy-limit", "--mfe"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Re_e = 7.46604"), std::string::npos);
  EXPECT_NE(r.out.find("# flowsos 1.0.0  model " + ModelHash(MakeMfeModel())), std::string::npos);
  EXPECT_NE(r.out.find("flags: energy-limit --mfe"), std::string::npos);
}

TEST_F(CliTest, EnergyLimitSmallModels) {
  // da/dt = -a / Re + a is energy stable up to Re = 1.
  const std::string one = Write("one.json", QuadraticSystemToJson(Diagonal(-1.0, Eigen::MatrixXd::Ones(1, 1))));
  CliResult r = RunTool({"energy-limit", one});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Re_e = 1\n"), std::string::npos);
  Eigen::MatrixXd skew(2, 2);
  skew << 0.0, 1.0, -1.0, 0.0;
  const std::string s = Write("skew.json", QuadraticSystemToJson(Diagonal(-1.0, skew)));
  r = RunTool({"energy-limit", s});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Re_e = inf"), std::string::npos);
}

TEST_F(CliTest, InputErrorsExitTwo) {
  EXPECT_EQ(RunTool({"energy-limit", Write("bad.json", "{not json")}).code, 2);
  EXPECT_EQ(RunTool({"energy-limit", Path("missing.json")}).code, 2);
  EXPECT_EQ(RunTool({"energy-limit", Write("m.json", "{}"), "--mfe"}).code, 2);
  EXPECT_EQ(RunTool({"no-such-command"}).code, 2);
  EXPECT_EQ(RunTool({}).code, 2);
  EXPECT_EQ(RunTool({"bisect"}).code, 2);
  EXPECT_EQ(RunTool({"bisect", "--case", "7"}).code, 2);
  EXPECT_EQ(RunTool({"bisect", "--case", "2", "--lo", "5", "--hi", "4"}).code, 2);
  EXPECT_EQ(RunTool({"verify", Path("missing.json")}).code, 2);
  EXPECT_EQ(RunTool({"probe", "--re-grid", "10,abc"}).code, 2);
  EXPECT_EQ(RunTool({"probe", "--re-grid", "-3"}).code, 2);
  EXPECT_EQ(RunTool({"--help"}).code, 0);
  EXPECT_EQ(RunTool({"--version"}).code, 0);
}

TEST_F(CliTest, BisectCaseOneUsesMatrixTest) {
  const CliResult r = RunTool({"bisect", "--case", "1"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("case  Re_max  time_s  monomials  nnz\n1  7.46604  -  -  -"), std::string::npos);
}

TEST_F(CliTest, BisectCaseTwoRoundTripsThroughVerify) {
  const std::string cert = Path("c2.json");
  const CliResult b = RunTool({"bisect", "--case", "2", "--out", cert});
  ASSERT_EQ(b.code, 0) << b.out << b.err;
  std::istringstream lines(b.out);
  std::string line;
  bool found = false;
  while (std::getline(lines, line)) {
    if (line.rfind("2  ", 0) != 0) continue;
    std::istringstream row(line);
    int id, monomials, nnz;
    double re, seconds;
    ASSERT_TRUE(row >> id >> re >> seconds >> monomials >> nnz);
    EXPECT_GE(re, 22.5);
    EXPECT_LE(re, 25.5);
    EXPECT_EQ(monomials, 54);
    EXPECT_EQ(nnz, 19);
    found = true;
  }
  EXPECT_TRUE(found) << b.out;
  const CliResult v = RunTool({"verify", cert, "--mfe"});
  EXPECT_EQ(v.code, 0) << v.out;
  EXPECT_NE(v.out.find("result: PASS"), std::string::npos);

  // At a larger Re the stored Gram matrices no longer match the identity.
  const Certificate c = LoadCertificate(cert);
  const CliResult far = RunTool({"verify", cert, "--re", std::to_string(2.0 * c.re)});
  EXPECT_EQ(far.code, 1);
  EXPECT_NE(far.out.find("result: FAIL (H2 identity residual"), std::string::npos) << far.out;
}

TEST_F(CliTest, TamperedCertificateFails) {
  const std::string path = Path("c2.json");
  ASSERT_EQ(RunTool({"bisect", "--case", "2", "--out", path}).code, 0);
  Certificate c = LoadCertificate(path);
  c.h1(0, 0) += 1e-3;
  SaveCertificate(c, path);
  CliResult r = RunTool({"verify", path});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("H1 identity residual"), std::string::npos) << r.out;

  c = LoadCertificate(path);
  c.model_hash = "0000000000000000";
  c.h1(0, 0) -= 1e-3;
  SaveCertificate(c, path);
  r = RunTool({"verify", path});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("model hash"), std::string::npos) << r.out;
}

TEST_F(CliTest, TemplateFile) {
  const std::string tmpl = Write("t.json",
                                 R"({"format": "template-v1", "variable_term": "none", "shifts": [0]})");
  const CliResult r = RunTool({"bisect", "--template", tmpl, "--lo", "1", "--hi", "20", "--tol", "0.05",
                           "--out", Path("c.json")});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("custom  7.4"), std::string::npos) << r.out;
  EXPECT_EQ(RunTool({"bisect", "--template", Write("u.json", R"({"format": "template-v1"})")}).code, 2);
  EXPECT_EQ(RunTool({"bisect", "--template", tmpl, "--case", "2"}).code, 2);
}

TEST_F(CliTest, BisectInfeasibleBracketExitsOne) {
  const CliResult r = RunTool({"bisect", "--case", "2", "--lo", "40", "--hi", "60", "--out", Path("c.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(std::filesystem::exists(Path("c.json")));
}

constexpr const char* kBounds =
    R"({"format": "tail-v1", "kappa_s": -1, "c1": 0.5, "c2": 0.2, "c3": 0.3, "d": 0, "chi_zero": true})";

TEST_F(CliTest, RobustBisectNearEnergyLimit) {
  const CliResult r = RunTool({"robust", "--bounds", Write("b.json", kBounds), "--bisect", "--lo", "1",
                           "--hi", "20", "--tol", "0.05"});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  const auto pos = r.out.find("Re_max = ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(r.out.substr(pos + 9)), 7.5, 0.2);
}

TEST_F(CliTest, RobustSingleRe) {
  const std::string b = Write("b.json", kBounds);
  CliResult r = RunTool({"robust", "--bounds", b, "--re", "7"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("Feasible"), std::string::npos);
  EXPECT_NE(r.out.find("s0  "), std::string::npos);
  r = RunTool({"robust", "--bounds", b, "--re", "9"});
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_EQ(RunTool({"robust", "--bounds", b}).code, 2);
  EXPECT_EQ(RunTool({"robust", "--bounds", b, "--re", "7", "--bisect"}).code, 2);
  EXPECT_EQ(RunTool({"robust", "--bounds", b, "--re", "7", "--template", "cubic"}).code, 2);
}

TEST_F(CliTest, RobustRejectsNonNegativeKappa) {
  for (const char* kappa : {"0", "0.5"}) {
    std::string text = kBounds;
    text.replace(text.find("-1"), 2, kappa);
    const CliResult r = RunTool({"robust", "--bounds", Write("b.json", text), "--re", "5"});
    EXPECT_EQ(r.code, 2) << kappa;
    EXPECT_NE(r.err.find("kappa_s"), std::string::npos);
  }
}

TEST_F(CliTest, RobustZeroTailMatchesEnergyMethod) {
  const std::string b = Write(
      "b.json", R"({"format": "tail-v1", "kappa_s": -1, "c1": 0, "c2": 0, "c3": 0, "d": 0, "chi_zero": true})");
  EXPECT_EQ(RunTool({"robust", "--bounds", b, "--re", "7.4"}).code, 0);
  EXPECT_EQ(RunTool({"robust", "--bounds", b, "--re", "7.6"}).code, 1);
}

TEST_F(CliTest, ProbeEmptyGrid) {
  const CliResult r = RunTool({"probe", "--re-grid", ""});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Re  samples  converged  fraction  seed\n"), std::string::npos);
}

TEST_F(CliTest, ProbeIsDeterministic) {
  const std::vector<std::string> args = {"probe", "--re-grid", "10, 150", "--samples", "4",
                                         "-T",    "100",       "--seed",  "11"};
  std::vector<std::string> a1 = args, a2 = args;
  a1.insert(a1.end(), {"--out", Path("p1.json")});
  a2.insert(a2.end(), {"--out", Path("p2.json")});
  const CliResult r1 = RunTool(a1);
  const CliResult r2 = RunTool(a2);
  ASSERT_EQ(r1.code, 0) << r1.err;
  ASSERT_EQ(r2.code, 0);
  auto body = [](const std::string& s) { return s.substr(s.find('\n')); };
  EXPECT_EQ(body(r1.out), body(r2.out));
  EXPECT_NE(r1.out.find("10  4  4  1  11"), std::string::npos) << r1.out;
  auto read = [](const std::string& p) {
    std::stringstream ss;
    ss << std::ifstream(p).rdbuf();
    // The flags differ only in the output path.
    std::string kept, line;
    while (std::getline(ss, line)) {
      if (line.find("\"flags\"") == std::string::npos) kept += line + "\n";
    }
    return kept;
  };
  EXPECT_EQ(read(Path("p1.json")), read(Path("p2.json")));
}

}  // namespace
}  // namespace flowsos
