#include <cmath>
#include <stdexcept>

#include "flowsos/sos.h"
#include "json_util.h"

namespace flowsos {

using internal::Json;

namespace {

Json LowerTriangle(const Eigen::MatrixXd& h) {
  Json rows = Json::array();
  for (int i = 0; i < h.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j <= i; ++j) row.push_back(h(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd FromLowerTriangle(const Json& j, int n, const std::string& field) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) {
    throw std::runtime_error("certificate: " + field + " must have " + std::to_string(n) + " rows");
  }
  Eigen::MatrixXd h(n, n);
  for (int i = 0; i < n; ++i) {
    const Json& row = j[i];
    if (!row.is_array() || static_cast<int>(row.size()) != i + 1) {
      throw std::runtime_error("certificate: " + field + " row " + std::to_string(i) +
                               " must have " + std::to_string(i + 1) + " entries");
    }
    for (int k = 0; k <= i; ++k) h(i, k) = h(k, i) = row[k].get<double>();
  }
  return h;
}

Eigen::VectorXd VectorFromJson(const Json& j, int n, const std::string& field) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != n) {
    throw std::runtime_error("certificate: " + field + " must have " + std::to_string(n) + " entries");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

// Non-finite values are written as null.
Json Number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

std::string CertificateToJson(const Certificate& cert,
                              const std::optional<VerificationReport>& report) {
  Json j;
  j["format"] = "cert-v1";
  j["n"] = cert.n;
  j["description"] = cert.description;
  j["re"] = cert.re;
  j["eps_bar"] = cert.eps_bar;
  j["model_hash"] = cert.model_hash;
  j["v"] = internal::PolyToJsonValue(cert.v);
  Json basis = Json::array();
  for (const auto& m : cert.basis.entries) basis.push_back(m.exponents());
  j["basis"] = std::move(basis);
  j["block_of"] = cert.block_of;
  j["h1"] = LowerTriangle(cert.h1);
  j["h2"] = LowerTriangle(cert.h2);
  if (cert.h3.has_value()) j["h3"] = LowerTriangle(*cert.h3);
  j["eps1"] = std::vector<double>(cert.eps1.data(), cert.eps1.data() + cert.eps1.size());
  j["eps2"] = std::vector<double>(cert.eps2.data(), cert.eps2.data() + cert.eps2.size());
  if (report.has_value()) {
    Json r;
    r["re"] = report->re;
    r["residual_h1"] = Number(report->residual_h1);
    r["residual_h2"] = Number(report->residual_h2);
    if (report->has_h3) r["residual_h3"] = Number(report->residual_h3);
    r["lambda_min_h1"] = Number(report->lambda_min_h1);
    r["lambda_min_h2"] = Number(report->lambda_min_h2);
    if (report->has_h3) r["lambda_min_h3"] = Number(report->lambda_min_h3);
    r["min_eps"] = report->min_eps;
    r["passed"] = report->passed;
    j["verification"] = std::move(r);
  }
  return j.dump(2) + "\n";
}

Certificate CertificateFromJson(const std::string& text) {
  const Json j = internal::ParseJsonText(text, "certificate");
  internal::CheckFormatTag(j, "cert-v1", "certificate");
  Certificate cert;
  try {
    cert.n = j.at("n").get<int>();
    if (cert.n <= 0) throw std::runtime_error("certificate: n must be positive");
    cert.description = j.value("description", std::string());
    cert.re = j.at("re").get<double>();
    cert.eps_bar = j.at("eps_bar").get<double>();
    cert.model_hash = j.value("model_hash", std::string());
    cert.v = internal::PolyFromJsonValue(j.at("v"));
    if (cert.v.num_vars() != cert.n) throw std::runtime_error("certificate: v has wrong num_vars");
    cert.basis.n = cert.n;
    for (const auto& e : j.at("basis")) {
      auto ex = e.get<std::vector<int>>();
      if (static_cast<int>(ex.size()) != cert.n) {
        throw std::runtime_error("certificate: basis exponent length mismatch");
      }
      cert.basis.entries.emplace_back(std::move(ex));
    }
    const int nb = cert.basis.size();
    cert.block_of = j.at("block_of").get<std::vector<int>>();
    if (!cert.block_of.empty() && static_cast<int>(cert.block_of.size()) != nb) {
      throw std::runtime_error("certificate: block_of length mismatch");
    }
    cert.h1 = FromLowerTriangle(j.at("h1"), nb, "h1");
    cert.h2 = FromLowerTriangle(j.at("h2"), nb, "h2");
    if (j.contains("h3")) cert.h3 = FromLowerTriangle(j["h3"], nb, "h3");
    cert.eps1 = VectorFromJson(j.at("eps1"), cert.n, "eps1");
    cert.eps2 = VectorFromJson(j.at("eps2"), cert.n, "eps2");
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("certificate: ") + e.what());
  }
  return cert;
}

void SaveCertificate(const Certificate& cert, const std::string& path,
                     const std::optional<VerificationReport>& report) {
  internal::WriteTextFile(path, CertificateToJson(cert, report));
}

Certificate LoadCertificate(const std::string& path) {
  return CertificateFromJson(internal::ReadTextFile(path));
}

}  // namespace flowsos
