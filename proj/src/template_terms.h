#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "flowsos/poly.h"
#include "flowsos/sos.h"
#include "flowsos/sos_program.h"

namespace flowsos {
namespace internal {

/// Adds the variable term of @p tmpl to @p v with one free decision variable
/// per allowed monomial, filling the P basis and entries for the quadratic
/// forms. @returns the number of template variables.
int AddVariableTerm(const LyapunovTemplate& tmpl, int n,
                    const std::function<bool(const Monomial&)>& allowed, SosProgram* sp,
                    ParamPoly* v, MonomialBasis* p_basis,
                    std::vector<std::pair<int, int>>* p_entries);

}  // namespace internal
}  // namespace flowsos
