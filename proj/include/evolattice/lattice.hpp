#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "evolattice/expr.hpp"

namespace evolattice {

inline constexpr const char* kOutputNode = "output";

struct AltStats {
  double mean = 0.0;
  double stdev = 0.0;
  double max = 0.0;
  int count = 0;

  bool operator==(const AltStats&) const = default;
};

struct Alternative {
  std::string name;
  std::string source;                // single-line, whitespace-normalized at intake
  std::vector<std::string> params;   // declared parameter list from the source
  int age = 0;
  std::optional<AltStats> stats;
  ExprPtr body;
  Digest source_sig{};  // collision-proof signature of the normalized source

  // Parses `raw` and builds the alternative. Throws on parse failure.
  static Alternative make(std::string name, std::string_view raw, int age = 0,
                          std::optional<AltStats> stats = std::nullopt) {
    Alternative alt;
    alt.name = std::move(name);
    alt.source = flatten_source(raw);
    ParsedLambda parsed = parse_lambda(alt.source);
    alt.params = std::move(parsed.params);
    alt.body = std::move(parsed.body);
    alt.age = age;
    alt.stats = stats;
    alt.source_sig = Sha256::hash(canonical_source(alt.source));
    return alt;
  }

  // Sources are stored single-line so snapshots serialize one alternative per line.
  static std::string flatten_source(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool in_ws = false;
    for (char c : raw) {
      if (c == '\n' || c == '\r' || c == '\t' || c == ' ') {
        in_ws = true;
        continue;
      }
      if (in_ws && !out.empty()) out.push_back(' ');
      in_ws = false;
      out.push_back(c);
    }
    return out;
  }
};

struct Node {
  std::string name;
  std::vector<Alternative> alternatives;  // creation order

  const Alternative* find(const std::string& alt_name) const {
    for (const auto& a : alternatives)
      if (a.name == alt_name) return &a;
    return nullptr;
  }
};

struct Lattice {
  std::vector<Node> nodes;  // creation order
  std::vector<std::string> task_inputs;

  const Node* find(const std::string& name) const {
    for (const auto& n : nodes)
      if (n.name == name) return &n;
    return nullptr;
  }

  Node* find(const std::string& name) {
    for (auto& n : nodes)
      if (n.name == name) return &n;
    return nullptr;
  }

  bool is_input(const std::string& name) const {
    return std::find(task_inputs.begin(), task_inputs.end(), name) != task_inputs.end();
  }

  // A parameter resolves to a node first, then to a task input.
  bool resolves(const std::string& name) const { return find(name) != nullptr || is_input(name); }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
  std::string node;
  int alt_index = -1;  // -1 for node- or lattice-level violations
  std::string invariant;
  std::string message;

  bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

struct ValidateOptions {
  bool allow_unreachable = false;
};

namespace detail {

// Dependency edges: u -> v iff some alternative of u has a parameter naming node v.
inline std::map<std::string, std::set<std::string>> node_edges(const Lattice& l) {
  std::map<std::string, std::set<std::string>> edges;
  for (const auto& n : l.nodes) {
    auto& out = edges[n.name];
    for (const auto& a : n.alternatives)
      for (const auto& p : a.params)
        if (l.find(p) != nullptr) out.insert(p);
  }
  return edges;
}

// Nodes participating in at least one dependency cycle.
inline std::set<std::string> nodes_on_cycles(const Lattice& l) {
  auto edges = node_edges(l);
  // Tarjan SCC over the node names.
  std::map<std::string, int> index, low;
  std::map<std::string, bool> on_stack;
  std::vector<std::string> stack;
  std::set<std::string> cyclic;
  int counter = 0;

  struct Frame {
    std::string node;
    std::vector<std::string> succ;
    size_t next = 0;
  };

  for (const auto& n : l.nodes) {
    if (index.count(n.name)) continue;
    std::vector<Frame> work;
    auto push_node = [&](const std::string& v) {
      index[v] = low[v] = counter++;
      stack.push_back(v);
      on_stack[v] = true;
      Frame f;
      f.node = v;
      f.succ.assign(edges[v].begin(), edges[v].end());
      work.push_back(std::move(f));
    };
    push_node(n.name);
    while (!work.empty()) {
      Frame& f = work.back();
      if (f.next < f.succ.size()) {
        const std::string& w = f.succ[f.next++];
        if (!index.count(w)) {
          push_node(w);
        } else if (on_stack[w]) {
          low[f.node] = std::min(low[f.node], index[w]);
        }
      } else {
        if (low[f.node] == index[f.node]) {
          std::vector<std::string> scc;
          while (true) {
            std::string w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            scc.push_back(w);
            if (w == f.node) break;
          }
          bool self_loop = edges[f.node].count(f.node) > 0;
          if (scc.size() > 1 || self_loop)
            for (const auto& v : scc) cyclic.insert(v);
        }
        std::string done = f.node;
        work.pop_back();
        if (!work.empty()) low[work.back().node] = std::min(low[work.back().node], low[done]);
      }
    }
  }
  return cyclic;
}

// Nodes reachable from "output" by following any alternative's node references.
inline std::set<std::string> reachable_from_output(const Lattice& l) {
  std::set<std::string> seen;
  if (l.find(kOutputNode) == nullptr) return seen;
  std::vector<std::string> todo = {kOutputNode};
  seen.insert(kOutputNode);
  auto edges = node_edges(l);
  while (!todo.empty()) {
    std::string cur = todo.back();
    todo.pop_back();
    for (const auto& next : edges[cur])
      if (seen.insert(next).second) todo.push_back(next);
  }
  return seen;
}

}  // namespace detail

inline ValidationReport validate(const Lattice& l, const ValidateOptions& opts = {}) {
  ValidationReport report;
  auto add = [&](const std::string& node, int alt, const std::string& inv, std::string msg) {
    report.push_back({node, alt, inv, std::move(msg)});
  };

  const Node* output = l.find(kOutputNode);
  if (output == nullptr) {
    add(kOutputNode, -1, "output_missing", "node \"output\" does not exist");
  } else if (output->alternatives.empty()) {
    add(kOutputNode, -1, "output_empty", "node \"output\" has no alternatives");
  }

  std::set<std::string> seen_nodes;
  for (const auto& n : l.nodes) {
    if (!valid_identifier(n.name))
      add(n.name, -1, "bad_name", "node name violates [a-z][a-z0-9_]*");
    if (!seen_nodes.insert(n.name).second)
      add(n.name, -1, "duplicate_node_name", "node name appears more than once");
    if (n.alternatives.empty() && n.name != kOutputNode)
      add(n.name, -1, "empty_node", "node has no alternatives");
    std::set<std::string> seen_alts;
    for (size_t i = 0; i < n.alternatives.size(); ++i) {
      const auto& a = n.alternatives[i];
      if (!seen_alts.insert(a.name).second)
        add(n.name, static_cast<int>(i), "duplicate_alt_name",
            "alternative name \"" + a.name + "\" repeats within node");
      for (const auto& p : a.params) {
        if (p == kOutputNode)
          add(n.name, static_cast<int>(i), "references_output",
              "alternative \"" + a.name + "\" references output");
        else if (!l.resolves(p))
          add(n.name, static_cast<int>(i), "unresolved_param",
              "parameter \"" + p + "\" resolves to neither a node nor a task input");
      }
    }
  }

  for (const auto& name : detail::nodes_on_cycles(l))
    add(name, -1, "cycle", "node participates in a dependency cycle");

  if (output != nullptr && !opts.allow_unreachable) {
    auto reach = detail::reachable_from_output(l);
    for (const auto& n : l.nodes)
      if (!reach.count(n.name))
        add(n.name, -1, "unreachable", "node is not reachable from output");
  }

  std::sort(report.begin(), report.end(), [](const Violation& a, const Violation& b) {
    return std::tie(a.node, a.alt_index, a.invariant) < std::tie(b.node, b.alt_index, b.invariant);
  });
  return report;
}

// ---------------------------------------------------------------------------
// Snapshot text format
// ---------------------------------------------------------------------------
//
//   <node>:
//   - "<source> # name: <alt>"
//   - "<source> # name: <alt> # mean=<m> std=<s> max=<x> age=<a>"
//
// Stats floats print with 4 decimal places; the stats comment is omitted for
// alternatives that have never been scored.

struct SnapshotError : std::runtime_error {
  SnapshotError(int line_, int column_, const std::string& reason_)
      : std::runtime_error("snapshot syntax error at line " + std::to_string(line_) + ":" +
                           std::to_string(column_) + ": " + reason_),
        line(line_),
        column(column_),
        reason(reason_) {}
  int line;
  int column;
  std::string reason;
};

struct DuplicateName : std::runtime_error {
  DuplicateName(const std::string& name_, int line_)
      : std::runtime_error("duplicate name \"" + name_ + "\" at line " + std::to_string(line_)),
        name(name_),
        line(line_) {}
  std::string name;
  int line;
};

namespace detail {

inline std::string format_stat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace detail

inline std::string serialize_alternative(const Alternative& a) {
  std::string line = "- \"" + a.source + " # name: " + a.name;
  if (a.stats.has_value()) {
    line += " # mean=" + detail::format_stat(a.stats->mean) +
            " std=" + detail::format_stat(a.stats->stdev) +
            " max=" + detail::format_stat(a.stats->max) + " age=" + std::to_string(a.age);
  }
  line += "\"";
  return line;
}

inline std::string serialize_node(const Node& n) {
  std::string out = n.name + ":\n";
  for (const auto& a : n.alternatives) out += serialize_alternative(a) + "\n";
  return out;
}

inline std::string serialize_snapshot(const Lattice& l) {
  std::string out;
  for (const auto& n : l.nodes) out += serialize_node(n);
  return out;
}

inline Lattice deserialize_snapshot(std::string_view text, std::vector<std::string> task_inputs) {
  Lattice lattice;
  lattice.task_inputs = std::move(task_inputs);

  std::set<std::string> node_names;
  std::set<std::string> alt_names;
  Node* current = nullptr;

  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                           : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (pos > text.size() && line.empty()) break;

    // Trailing whitespace is tolerated; blank lines are skipped.
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty()) continue;

    if (line.rfind("- \"", 0) == 0) {
      if (current == nullptr)
        throw SnapshotError(line_no, 1, "alternative before any node header");
      if (line.size() < 4 || line.back() != '"')
        throw SnapshotError(line_no, static_cast<int>(line.size()),
                            "alternative entry is not closed by '\"'");
      std::string_view body = line.substr(3, line.size() - 4);
      size_t name_at = body.find(" # name: ");
      if (name_at == std::string_view::npos)
        throw SnapshotError(line_no, 4, "missing '# name:' comment");
      std::string_view source = body.substr(0, name_at);
      std::string_view rest = body.substr(name_at + 9);

      std::string alt_name;
      std::optional<AltStats> stats;
      int age = 0;
      size_t stats_at = rest.find(" # mean=");
      if (stats_at == std::string_view::npos) {
        alt_name = std::string(rest);
      } else {
        alt_name = std::string(rest.substr(0, stats_at));
        std::string stats_text(rest.substr(stats_at + 3));  // "mean=... std=... max=... age=..."
        AltStats s;
        int consumed = 0;
        int got = std::sscanf(stats_text.c_str(), "mean=%lf std=%lf max=%lf age=%d%n", &s.mean,
                              &s.stdev, &s.max, &age, &consumed);
        if (got != 4 || consumed != static_cast<int>(stats_text.size()))
          throw SnapshotError(line_no, static_cast<int>(name_at + stats_at), "malformed stats comment");
        stats = s;
      }
      if (!valid_identifier(alt_name))
        throw SnapshotError(line_no, static_cast<int>(name_at),
                            "alternative name \"" + alt_name + "\" violates [a-z][a-z0-9_]*");
      if (!alt_names.insert(alt_name).second) throw DuplicateName(alt_name, line_no);

      Alternative alt;
      try {
        alt = Alternative::make(alt_name, source, age, stats);
      } catch (const SyntaxError& e) {
        throw SnapshotError(line_no, 4 + e.column - 1,
                            "unparseable alternative \"" + alt_name + "\": " + e.reason);
      } catch (const std::runtime_error& e) {
        throw SnapshotError(line_no, 4, "unparseable alternative \"" + alt_name + "\": " + e.what());
      }
      if (stats.has_value()) {
        // Counts are not stored in the text form; a scored multiset of size >= 1
        // is implied. std == 0 keeps the count-1 invariant representable.
        alt.stats->count = alt.stats->stdev == 0.0 ? 1 : 2;
      }
      current->alternatives.push_back(std::move(alt));
      continue;
    }

    if (line.back() == ':') {
      std::string name(line.substr(0, line.size() - 1));
      if (!valid_identifier(name))
        throw SnapshotError(line_no, 1, "node name \"" + name + "\" violates [a-z][a-z0-9_]*");
      if (!node_names.insert(name).second) throw DuplicateName(name, line_no);
      lattice.nodes.push_back(Node{name, {}});
      current = &lattice.nodes.back();
      continue;
    }

    throw SnapshotError(line_no, 1, "expected node header or alternative entry");
  }

  if (lattice.find(kOutputNode) == nullptr)
    throw SnapshotError(line_no, 1, "missing output node");
  return lattice;
}

// Structural equality used by round-trip checks: everything the snapshot
// format carries, at the snapshot's printed precision.
inline bool snapshot_equal(const Lattice& a, const Lattice& b) {
  return serialize_snapshot(a) == serialize_snapshot(b);
}

}  // namespace evolattice
