#include <fstream>
#include <sstream>

#include "flowsos/poly.h"
#include "json_util.h"

namespace flowsos {
namespace internal {

Json ParseJsonText(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // e.byte is the 1-based offset of the offending character.
    size_t line = 1, column = 1;
    const size_t stop = std::min(text.size(), e.byte > 0 ? e.byte - 1 : 0);
    for (size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream os;
    os << what << ": parse error at line " << line << ", column " << column
       << ": " << e.what();
    throw std::runtime_error(os.str());
  }
}

void CheckFormatTag(const Json& json, const std::string& tag,
                    const std::string& what) {
  if (!json.is_object() || !json.contains("format") ||
      !json["format"].is_string() || json["format"].get<std::string>() != tag) {
    throw std::runtime_error(what + ": expected \"format\": \"" + tag + "\"");
  }
}

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

Json PolyToJsonValue(const MultiPoly& p) {
  Json j;
  j["format"] = "poly-v1";
  j["num_vars"] = p.num_vars();
  Json terms = Json::array();
  for (const auto& [m, c] : p.terms()) {
    terms.push_back(Json::array({m.exponents(), c}));
  }
  j["terms"] = std::move(terms);
  return j;
}

MultiPoly PolyFromJsonValue(const Json& j) {
  CheckFormatTag(j, "poly-v1", "polynomial");
  try {
    const int n = j.at("num_vars").get<int>();
    if (n < 0) throw std::runtime_error("negative num_vars");
    MultiPoly p(n);
    for (const auto& t : j.at("terms")) {
      auto e = t.at(0).get<std::vector<int>>();
      if (static_cast<int>(e.size()) != n) {
        throw std::runtime_error("exponent vector length mismatch");
      }
      p.AddTerm(Monomial(std::move(e)), t.at(1).get<double>());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("polynomial: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("polynomial: ") + e.what());
  }
}

}  // namespace internal

std::string PolyToJson(const MultiPoly& p) {
  return internal::PolyToJsonValue(p).dump(2) + "\n";
}

MultiPoly PolyFromJson(const std::string& text) {
  return internal::PolyFromJsonValue(internal::ParseJsonText(text, "polynomial"));
}

}  // namespace flowsos
