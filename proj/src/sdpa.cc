#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <tuple>

#include "flowsos/sdp.h"

namespace flowsos {

namespace {

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void WriteSdpa(const SdpProblem& prob, std::ostream& out) {
  prob.Validate();
  const int m = prob.num_constraints();
  const int nf = prob.num_free;
  const int nblocks = static_cast<int>(prob.block_sizes.size()) + (nf > 0 ? 1 : 0);
  const int lp_block = static_cast<int>(prob.block_sizes.size()) + 1;

  // (matno, blkno, i, j) -> value, all 1-based with i <= j.
  std::map<std::tuple<int, int, int, int>, double> ents;
  auto add = [&](int mat, int blk, int i, int j, double v) {
    if (v == 0.0) return;
    if (i > j) std::swap(i, j);
    ents[{mat, blk, i, j}] += v;
  };
  // SDPA minimizes c^T x with F(x) = sum_i F_i x_i - F_0 >= 0; its dual
  // max <F_0, Y> s.t. <F_i, Y> = c_i, Y >= 0 is our primal with F_0 = -C.
  for (const auto& e : prob.objective) add(0, e.block + 1, e.col + 1, e.row + 1, -e.value);
  for (const auto& [k, g] : prob.free_objective) {
    add(0, lp_block, 2 * k + 1, 2 * k + 1, -g);
    add(0, lp_block, 2 * k + 2, 2 * k + 2, g);
  }
  for (int i = 0; i < m; ++i) {
    const auto& c = prob.constraints[i];
    for (const auto& e : c.entries) add(i + 1, e.block + 1, e.col + 1, e.row + 1, e.value);
    for (const auto& [k, g] : c.free_terms) {
      add(i + 1, lp_block, 2 * k + 1, 2 * k + 1, g);
      add(i + 1, lp_block, 2 * k + 2, 2 * k + 2, -g);
    }
  }

  out << "* flowsos SDP export\n";
  out << m << "\n" << nblocks << "\n";
  for (size_t k = 0; k < prob.block_sizes.size(); ++k) {
    if (k > 0) out << " ";
    out << prob.block_sizes[k];
  }
  if (nf > 0) out << (prob.block_sizes.empty() ? "" : " ") << -2 * nf;
  out << "\n";
  for (int i = 0; i < m; ++i) {
    if (i > 0) out << " ";
    out << FormatDouble(prob.constraints[i].rhs);
  }
  out << "\n";
  for (const auto& [key, v] : ents) {
    if (v == 0.0) continue;
    const auto& [mat, blk, i, j] = key;
    out << mat << " " << blk << " " << i << " " << j << " " << FormatDouble(v) << "\n";
  }
}

void WriteSdpaFile(const SdpProblem& prob, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  WriteSdpa(prob, f);
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace flowsos
