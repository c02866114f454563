#include "flowsos/model.h"

#include <cmath>
#include <random>
#include <sstream>

#include "json_util.h"

namespace flowsos {

using internal::Json;

void ValidateSystem(const QuadraticSystem& sys) {
  const int n = sys.n;
  if (n < 1) throw std::invalid_argument("system: n must be positive");
  if (sys.lambda_mat.rows() != n || sys.lambda_mat.cols() != n) {
    throw std::invalid_argument("system: Lambda must be n x n");
  }
  if (sys.w_mat.rows() != n || sys.w_mat.cols() != n) {
    throw std::invalid_argument("system: W must be n x n");
  }
  if (static_cast<int>(sys.q_tensors.size()) != n) {
    throw std::invalid_argument("system: expected n Q tensors");
  }
  for (const auto& q : sys.q_tensors) {
    if (q.rows() != n || q.cols() != n) {
      throw std::invalid_argument("system: each Q^j must be n x n");
    }
  }
  if (sys.c && sys.c->size() != n) {
    throw std::invalid_argument("system: c must have length n");
  }
  const Eigen::MatrixXd& L = sys.lambda_mat;
  if ((L - L.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * (1.0 + L.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("system: Lambda must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(-L);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("system: Lambda must be negative definite");
  }
}

Eigen::MatrixXd NonlinearMatrix(const QuadraticSystem& sys,
                                const Eigen::VectorXd& a) {
  if (a.size() != sys.n) throw std::invalid_argument("state size mismatch");
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero(sys.n, sys.n);
  for (int j = 0; j < sys.n; ++j) {
    if (a[j] != 0.0) N += a[j] * sys.q_tensors[j];
  }
  return N;
}

Eigen::VectorXd NonlinearTerm(const QuadraticSystem& sys,
                              const Eigen::VectorXd& a) {
  return NonlinearMatrix(sys, a) * a;
}

Eigen::VectorXd Rhs(const QuadraticSystem& sys, const Eigen::VectorXd& a,
                    double re) {
  if (!(re > 0.0)) throw std::invalid_argument("Rhs: Re must be positive");
  return sys.lambda_mat * a / re + sys.w_mat * a + NonlinearTerm(sys, a);
}

Eigen::VectorXd RhsShifted(const QuadraticSystem& sys, const Eigen::VectorXd& a,
                           double re) {
  if (!sys.c) throw std::invalid_argument("RhsShifted: system has no c");
  if (!(re > 0.0)) throw std::invalid_argument("RhsShifted: Re must be positive");
  const Eigen::VectorXd& c = *sys.c;
  const Eigen::VectorXd ac = a + c;
  return sys.lambda_mat * a / re + NonlinearTerm(sys, ac) - NonlinearTerm(sys, c);
}

Eigen::MatrixXd InteractionMatrix(const QuadraticSystem& sys,
                                  const Eigen::VectorXd& d) {
  const Eigen::MatrixXd Nd = NonlinearMatrix(sys, d);
  Eigen::MatrixXd W(sys.n, sys.n);
  for (int k = 0; k < sys.n; ++k) W.col(k) = sys.q_tensors[k] * d + Nd.col(k);
  return W;
}

QuadraticSystem MakeMfeModel(const FlowGeometry& geom) {
  if (!(geom.lx > 0.0) || !(geom.lz > 0.0)) {
    throw std::invalid_argument("MakeMfeModel: box lengths must be positive");
  }
  const int n = 9;
  const double al = geom.alpha(), be = geom.beta(), ga = geom.gamma();
  const double kab = std::sqrt(al * al + be * be);
  const double kag = std::sqrt(al * al + ga * ga);
  const double kbg = std::sqrt(be * be + ga * ga);
  const double kabg = std::sqrt(al * al + be * be + ga * ga);
  const double s6 = std::sqrt(6.0), s32 = std::sqrt(1.5), s23 = std::sqrt(2.0 / 3.0);

  QuadraticSystem sys;
  sys.n = n;
  Eigen::VectorXd diag(n);
  diag << be * be, 4.0 * be * be / 3.0 + ga * ga, kbg * kbg,
      (3.0 * al * al + 4.0 * be * be) / 3.0, kab * kab,
      (3.0 * al * al + 4.0 * be * be + 3.0 * ga * ga) / 3.0, kabg * kabg,
      kabg * kabg, 9.0 * be * be;
  sys.lambda_mat = Eigen::MatrixXd((-diag).asDiagonal());
  sys.q_tensors.assign(n, Eigen::MatrixXd::Zero(n, n));
  // Adds coef * a_j * a_k to [N(a) a]_i, 1-based indices.
  auto t = [&](int i, int j, int k, double coef) {
    sys.q_tensors[j - 1](i - 1, k - 1) += coef;
  };
  t(1, 2, 3, s32 * be * ga / kbg);
  t(1, 6, 8, -s32 * be * ga / kabg);

  t(2, 4, 6, 10.0 / (3.0 * s6) * ga * ga / kag);
  t(2, 5, 7, -ga * ga / (s6 * kag));
  t(2, 5, 8, -al * be * ga / (s6 * kag * kabg));
  t(2, 1, 3, -s32 * be * ga / kbg);
  t(2, 3, 9, -s32 * be * ga / kbg);

  t(3, 5, 6, s23 * al * be * ga / (kag * kbg));
  t(3, 4, 7, s23 * al * be * ga / (kag * kbg));
  t(3, 4, 8,
    (be * be * (3.0 * al * al + ga * ga) - 3.0 * ga * ga * kag * kag) /
        (s6 * kag * kbg * kabg));

  t(4, 1, 5, -al / s6);
  t(4, 5, 9, -al / s6);
  t(4, 2, 6, -10.0 / (3.0 * s6) * al * al / kag);
  t(4, 3, 7, -s32 * al * be * ga / (kag * kbg));
  t(4, 3, 8, -s32 * al * al * be * be / (kag * kbg * kabg));

  t(5, 1, 4, al / s6);
  t(5, 4, 9, al / s6);
  t(5, 3, 6, s23 * al * be * ga / (kag * kbg));
  t(5, 2, 7, al * al / (s6 * kag));
  t(5, 2, 8, -al * be * ga / (s6 * kag * kabg));

  t(6, 2, 4, 10.0 / (3.0 * s6) * (al * al - ga * ga) / kag);
  t(6, 3, 5, -2.0 * s23 * al * be * ga / (kag * kbg));
  t(6, 1, 7, al / s6);
  t(6, 7, 9, al / s6);
  t(6, 1, 8, s32 * be * ga / kabg);
  t(6, 8, 9, s32 * be * ga / kabg);

  t(7, 3, 4, al * be * ga / (s6 * kag * kbg));
  t(7, 2, 5, (ga * ga - al * al) / (s6 * kag));
  t(7, 1, 6, -al / s6);
  t(7, 6, 9, -al / s6);

  t(8, 3, 4,
    ga * ga * (3.0 * al * al - be * be + 3.0 * ga * ga) /
        (s6 * kag * kbg * kabg));
  t(8, 2, 5, s23 * al * be * ga / (kag * kabg));

  t(9, 2, 3, s32 * be * ga / kbg);
  t(9, 6, 8, -s32 * be * ga / kabg);

  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  c[0] = 1.0;
  sys.c = c;
  sys.w_mat = InteractionMatrix(sys, c);
  return sys;
}

double CheckEnergyConservation(const QuadraticSystem& sys, int samples,
                               std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> log_scale(std::log(0.1), std::log(10.0));
  double worst = 0.0;
  Eigen::VectorXd a(sys.n);
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < sys.n; ++i) a[i] = normal(rng);
    double norm = a.norm();
    if (norm == 0.0) continue;
    a *= std::exp(log_scale(rng)) / norm;
    norm = a.norm();
    const double r = std::abs(a.dot(NonlinearTerm(sys, a))) / (norm * norm * norm);
    worst = std::max(worst, r);
  }
  return worst;
}

std::vector<MultiPoly> SystemPolynomials::AtRe(double re) const {
  if (!(re > 0.0)) throw std::invalid_argument("AtRe: Re must be positive");
  std::vector<MultiPoly> f;
  for (size_t i = 0; i < viscous.size(); ++i) {
    MultiPoly fi = base[i] + nonlinear[i];
    fi.AddScaled(viscous[i], 1.0 / re);
    f.push_back(std::move(fi));
  }
  return f;
}

SystemPolynomials MakeSystemPolynomials(const QuadraticSystem& sys) {
  const int n = sys.n;
  SystemPolynomials p;
  for (int i = 0; i < n; ++i) {
    MultiPoly v(n), b(n), nl(n);
    for (int j = 0; j < n; ++j) {
      v.AddTerm(Monomial::Variable(n, j), sys.lambda_mat(i, j));
      b.AddTerm(Monomial::Variable(n, j), sys.w_mat(i, j));
      for (int k = 0; k < n; ++k) {
        const double q = sys.q_tensors[j](i, k);
        if (q != 0.0) {
          nl.AddTerm(Monomial::Variable(n, j) * Monomial::Variable(n, k), q);
        }
      }
    }
    p.viscous.push_back(std::move(v));
    p.base.push_back(std::move(b));
    p.nonlinear.push_back(std::move(nl));
  }
  return p;
}

namespace {

Json MatrixToJson(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd MatrixFromJson(const Json& j, int n, const std::string& field) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) {
    throw std::runtime_error("model: field \"" + field + "\" must have " +
                             std::to_string(n) + " rows");
  }
  Eigen::MatrixXd m(n, n);
  for (int r = 0; r < n; ++r) {
    if (!j[r].is_array() || static_cast<int>(j[r].size()) != n) {
      throw std::runtime_error("model: field \"" + field + "\" row " +
                               std::to_string(r + 1) + " must have " +
                               std::to_string(n) + " entries");
    }
    for (int c = 0; c < n; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::string QuadraticSystemToJson(const QuadraticSystem& sys) {
  Json j;
  j["format"] = "qsys-v1";
  j["n"] = sys.n;
  const Eigen::MatrixXd& L = sys.lambda_mat;
  const bool diagonal =
      (L - Eigen::MatrixXd(L.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  if (diagonal) {
    Json d = Json::array();
    for (int i = 0; i < sys.n; ++i) d.push_back(L(i, i));
    j["lambda"] = std::move(d);
  } else {
    j["lambda"] = MatrixToJson(L);
  }
  j["w"] = MatrixToJson(sys.w_mat);
  Json qs = Json::array();
  for (int t = 0; t < sys.n; ++t) {
    Json trip = Json::array();
    for (int i = 0; i < sys.n; ++i) {
      for (int k = 0; k < sys.n; ++k) {
        const double v = sys.q_tensors[t](i, k);
        if (v != 0.0) trip.push_back(Json::array({i + 1, k + 1, v}));
      }
    }
    qs.push_back(std::move(trip));
  }
  j["q_tensors"] = std::move(qs);
  if (sys.c) {
    Json c = Json::array();
    for (int i = 0; i < sys.n; ++i) c.push_back((*sys.c)[i]);
    j["c"] = std::move(c);
  }
  return j.dump(2) + "\n";
}

QuadraticSystem QuadraticSystemFromJson(const std::string& text) {
  const Json j = internal::ParseJsonText(text, "model");
  internal::CheckFormatTag(j, "qsys-v1", "model");
  QuadraticSystem sys;
  try {
    if (!j.contains("n")) throw std::runtime_error("model: missing field \"n\"");
    sys.n = j["n"].get<int>();
    const int n = sys.n;
    if (n < 1) throw std::runtime_error("model: \"n\" must be positive");
    if (!j.contains("lambda")) {
      throw std::runtime_error("model: missing field \"lambda\"");
    }
    const Json& lam = j["lambda"];
    if (lam.is_array() && static_cast<int>(lam.size()) == n &&
        (n == 0 || lam[0].is_number())) {
      Eigen::VectorXd d(n);
      for (int i = 0; i < n; ++i) d[i] = lam[i].get<double>();
      sys.lambda_mat = d.asDiagonal();
    } else {
      sys.lambda_mat = MatrixFromJson(lam, n, "lambda");
    }
    sys.q_tensors.assign(n, Eigen::MatrixXd::Zero(n, n));
    if (!j.contains("q_tensors")) {
      throw std::runtime_error("model: missing field \"q_tensors\"");
    }
    const Json& qs = j["q_tensors"];
    if (!qs.is_array() || static_cast<int>(qs.size()) != n) {
      throw std::runtime_error("model: \"q_tensors\" must list n tensors");
    }
    for (int t = 0; t < n; ++t) {
      for (const Json& trip : qs[t]) {
        if (!trip.is_array() || trip.size() != 3) {
          throw std::runtime_error(
              "model: q_tensors entries must be [i, k, value] triplets");
        }
        const int i = trip[0].get<int>(), k = trip[1].get<int>();
        if (i < 1 || i > n || k < 1 || k > n) {
          throw std::runtime_error("model: q_tensors index out of range in Q^" +
                                   std::to_string(t + 1));
        }
        sys.q_tensors[t](i - 1, k - 1) += trip[2].get<double>();
      }
    }
    if (j.contains("c") && !j["c"].is_null()) {
      const auto c = j["c"].get<std::vector<double>>();
      if (static_cast<int>(c.size()) != n) {
        throw std::runtime_error("model: \"c\" must have length n");
      }
      sys.c = Eigen::Map<const Eigen::VectorXd>(c.data(), n);
    }
    if (j.contains("w")) {
      sys.w_mat = MatrixFromJson(j["w"], n, "w");
    } else if (sys.c) {
      sys.w_mat = InteractionMatrix(sys, *sys.c);
    } else {
      sys.w_mat = Eigen::MatrixXd::Zero(n, n);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model: ") + e.what());
  }
  try {
    ValidateSystem(sys);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("model: ") + e.what());
  }
  return sys;
}

QuadraticSystem LoadQuadraticSystem(const std::string& path) {
  return QuadraticSystemFromJson(internal::ReadTextFile(path));
}

std::string ModelHash(const QuadraticSystem& sys) {
  const std::string text = QuadraticSystemToJson(sys);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace flowsos
