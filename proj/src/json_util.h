#pragma once

#include <string>

#include "flowsos/poly.h"
#include "json.hpp"

namespace flowsos {
namespace internal {

using Json = nlohmann::ordered_json;

/// Parses JSON text, rethrowing syntax errors as std::runtime_error with a
/// 1-based line and column.
Json ParseJsonText(const std::string& text, const std::string& what);

/// Throws std::runtime_error unless json["format"] equals @p tag.
void CheckFormatTag(const Json& json, const std::string& tag,
                    const std::string& what);

/// Reads a whole file; throws std::runtime_error if it cannot be opened.
std::string ReadTextFile(const std::string& path);

/// Writes text to a file; throws std::runtime_error on failure.
void WriteTextFile(const std::string& path, const std::string& text);

/// Polynomial as a JSON value in the poly-v1 layout.
Json PolyToJsonValue(const MultiPoly& p);
/// @throws std::runtime_error on malformed input.
MultiPoly PolyFromJsonValue(const Json& j);

}  // namespace internal
}  // namespace flowsos
