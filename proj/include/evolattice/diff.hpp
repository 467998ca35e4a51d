#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "evolattice/lattice.hpp"

namespace evolattice {

struct StructuralDiff {
  std::string text;  // unified diff between the two snapshot serializations
  std::vector<std::string> changed_nodes;

  bool empty() const { return text.empty(); }
};

namespace detail {

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) {
      out.emplace_back(text.substr(pos));
      break;
    }
    out.emplace_back(text.substr(pos, eol - pos));
    pos = eol + 1;
  }
  return out;
}

struct DiffOp {
  char tag;  // ' ', '-', '+'
  const std::string* line;
};

// Longest-common-subsequence edit script. Snapshots are small, so the
// quadratic table is fine.
inline std::vector<DiffOp> edit_script(const std::vector<std::string>& a,
                                       const std::vector<std::string>& b) {
  size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = n; i-- > 0;)
    for (size_t j = m; j-- > 0;)
      lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  std::vector<DiffOp> ops;
  size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[i] == b[j]) {
      ops.push_back({' ', &a[i]});
      ++i;
      ++j;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      ops.push_back({'-', &a[i]});
      ++i;
    } else {
      ops.push_back({'+', &b[j]});
      ++j;
    }
  }
  while (i < n) ops.push_back({'-', &a[i++]});
  while (j < m) ops.push_back({'+', &b[j++]});
  return ops;
}

inline std::string format_range(size_t start, size_t len) {
  // Unified-diff convention: empty ranges report the line before the hunk,
  // and ",1" is omitted.
  std::string out = std::to_string(len == 0 ? start : start + 1);
  if (len != 1) out += "," + std::to_string(len);
  return out;
}

}  // namespace detail

// Unified diff with the given number of context lines. Empty when a == b.
inline std::string unified_diff(const std::vector<std::string>& a,
                                const std::vector<std::string>& b, int context = 1) {
  auto ops = detail::edit_script(a, b);
  bool any_change = false;
  for (const auto& op : ops)
    if (op.tag != ' ') any_change = true;
  if (!any_change) return "";

  std::string out;
  size_t i = 0;
  size_t a_line = 0, b_line = 0;  // 0-based counters into a and b
  while (i < ops.size()) {
    if (ops[i].tag == ' ') {
      ++i;
      ++a_line;
      ++b_line;
      continue;
    }
    // Found a change; open a hunk that extends while gaps between changes
    // stay within 2*context equal lines.
    size_t hunk_begin = i;
    size_t lead = 0;
    while (lead < static_cast<size_t>(context) && hunk_begin > 0 &&
           ops[hunk_begin - 1].tag == ' ') {
      --hunk_begin;
      ++lead;
    }
    size_t a_start = a_line - lead;
    size_t b_start = b_line - lead;

    size_t j = i;
    size_t last_change = i;
    while (j < ops.size()) {
      if (ops[j].tag != ' ') {
        last_change = j;
        ++j;
        continue;
      }
      size_t runsz = 0;
      size_t k = j;
      while (k < ops.size() && ops[k].tag == ' ') {
        ++k;
        ++runsz;
      }
      if (k == ops.size() || runsz > 2 * static_cast<size_t>(context)) break;
      j = k;
    }
    size_t hunk_end = std::min(last_change + 1 + static_cast<size_t>(context), ops.size());
    // Trim hunk_end so trailing lines are only context.
    size_t trail = 0;
    while (last_change + 1 + trail < hunk_end && ops[last_change + 1 + trail].tag == ' ') ++trail;
    hunk_end = last_change + 1 + trail;

    size_t a_len = 0, b_len = 0;
    for (size_t k = hunk_begin; k < hunk_end; ++k) {
      if (ops[k].tag != '+') ++a_len;
      if (ops[k].tag != '-') ++b_len;
    }
    out += "@@ -" + detail::format_range(a_start, a_len) + " +" +
           detail::format_range(b_start, b_len) + " @@\n";
    for (size_t k = hunk_begin; k < hunk_end; ++k) {
      out.push_back(ops[k].tag);
      out += *ops[k].line;
      out.push_back('\n');
    }
    for (size_t k = i; k < hunk_end; ++k) {
      if (ops[k].tag != '+') ++a_line;
      if (ops[k].tag != '-') ++b_line;
    }
    i = hunk_end;
  }
  return out;
}

inline StructuralDiff structural_diff(const Lattice& before, const Lattice& after) {
  StructuralDiff d;
  d.text = unified_diff(detail::split_lines(serialize_snapshot(before)),
                        detail::split_lines(serialize_snapshot(after)), 1);
  for (const auto& n : before.nodes) {
    const Node* other = after.find(n.name);
    if (other == nullptr || serialize_node(*other) != serialize_node(n))
      d.changed_nodes.push_back(n.name);
  }
  for (const auto& n : after.nodes)
    if (before.find(n.name) == nullptr) d.changed_nodes.push_back(n.name);
  return d;
}

}  // namespace evolattice
