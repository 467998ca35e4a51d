#pragma once

#include <set>
#include <string>
#include <vector>

#include "evolattice/lattice.hpp"

namespace evolattice {

struct RepairAction {
  enum class Kind { RemovedAlternative, RemovedNode };
  Kind kind;
  std::string node;
  std::string alt;  // empty for RemovedNode
  std::string reason;  // references_output | unresolved_dependency | cycle | empty_node | unreachable

  bool operator==(const RepairAction&) const = default;
};

struct RepairLog {
  std::vector<RepairAction> actions;

  bool empty() const { return actions.empty(); }
};

struct RepairResult {
  bool ok = false;  // false means the output node could not be preserved
  Lattice lattice;  // meaningful only when ok
  RepairLog log;
};

struct RepairOptions {
  bool retain_unreachable = false;
};

namespace detail {

inline void remove_alt(Lattice& l, RepairLog& log, const std::string& node_name, size_t idx,
                       const char* reason) {
  Node* node = l.find(node_name);
  log.actions.push_back({RepairAction::Kind::RemovedAlternative, node_name,
                         node->alternatives[idx].name, reason});
  node->alternatives.erase(node->alternatives.begin() + static_cast<long>(idx));
}

inline void remove_node(Lattice& l, RepairLog& log, const std::string& node_name,
                        const char* reason) {
  log.actions.push_back({RepairAction::Kind::RemovedNode, node_name, "", reason});
  for (size_t i = 0; i < l.nodes.size(); ++i) {
    if (l.nodes[i].name == node_name) {
      l.nodes.erase(l.nodes.begin() + static_cast<long>(i));
      return;
    }
  }
}

// Pass 1: no alternative may reference output.
inline bool pass_references_output(Lattice& l, RepairLog& log) {
  bool changed = false;
  for (auto& node : l.nodes) {
    for (size_t i = 0; i < node.alternatives.size();) {
      bool bad = false;
      for (const auto& p : node.alternatives[i].params)
        if (p == kOutputNode) bad = true;
      if (bad) {
        remove_alt(l, log, node.name, i, "references_output");
        changed = true;
      } else {
        ++i;
      }
    }
  }
  return changed;
}

// Pass 2: every parameter must resolve to a node or a declared task input.
inline bool pass_unresolved(Lattice& l, RepairLog& log) {
  bool changed = false;
  for (size_t n = 0; n < l.nodes.size(); ++n) {
    Node& node = l.nodes[n];
    for (size_t i = 0; i < node.alternatives.size();) {
      bool bad = false;
      for (const auto& p : node.alternatives[i].params)
        if (!l.resolves(p)) bad = true;
      if (bad) {
        remove_alt(l, log, node.name, i, "unresolved_dependency");
        changed = true;
      } else {
        ++i;
      }
    }
  }
  return changed;
}

// Pass 3: break cycles by removing the youngest contributing alternative,
// ties broken toward the lexicographically greatest node name, then the
// greatest alternative index. Older structure is preserved.
inline bool pass_cycles(Lattice& l, RepairLog& log) {
  bool changed = false;
  while (true) {
    std::set<std::string> cyclic = nodes_on_cycles(l);
    if (cyclic.empty()) return changed;

    int victim_age = 0;
    std::string victim_node;
    int victim_idx = -1;
    for (const auto& node : l.nodes) {
      if (!cyclic.count(node.name)) continue;
      for (size_t i = 0; i < node.alternatives.size(); ++i) {
        const auto& alt = node.alternatives[i];
        bool contributes = false;
        for (const auto& p : alt.params)
          if (cyclic.count(p) && l.find(p) != nullptr) contributes = true;
        if (!contributes) continue;
        bool better = false;
        if (victim_idx < 0) {
          better = true;
        } else if (alt.age != victim_age) {
          better = alt.age < victim_age;
        } else if (node.name != victim_node) {
          better = node.name > victim_node;
        } else {
          better = static_cast<int>(i) > victim_idx;
        }
        if (better) {
          victim_age = alt.age;
          victim_node = node.name;
          victim_idx = static_cast<int>(i);
        }
      }
    }
    if (victim_idx < 0) return changed;  // unreachable: a cycle implies a contributing edge
    remove_alt(l, log, victim_node, static_cast<size_t>(victim_idx), "cycle");
    changed = true;
  }
}

// Pass 4: drop nodes with no alternatives (output excluded; its loss is a
// repair failure handled by the caller).
inline bool pass_empty_nodes(Lattice& l, RepairLog& log) {
  bool changed = false;
  for (size_t i = 0; i < l.nodes.size();) {
    if (l.nodes[i].alternatives.empty() && l.nodes[i].name != kOutputNode) {
      remove_node(l, log, l.nodes[i].name, "empty_node");
      changed = true;
    } else {
      ++i;
    }
  }
  return changed;
}

// Pass 5: prune nodes unreachable from output.
inline bool pass_unreachable(Lattice& l, RepairLog& log) {
  if (l.find(kOutputNode) == nullptr) return false;
  std::set<std::string> reach = reachable_from_output(l);
  bool changed = false;
  for (size_t i = 0; i < l.nodes.size();) {
    if (!reach.count(l.nodes[i].name)) {
      remove_node(l, log, l.nodes[i].name, "unreachable");
      changed = true;
    } else {
      ++i;
    }
  }
  return changed;
}

}  // namespace detail

// Deterministic self-repair: restores every lattice invariant or reports
// failure when the output node cannot be preserved. The caller reverts to the
// previous valid lattice on failure.
inline RepairResult repair(const Lattice& input, const RepairOptions& opts = {}) {
  RepairResult result;
  result.lattice = input;
  Lattice& l = result.lattice;

  // Fixed pass order, applied until fixpoint:
  //   (1) alternatives referencing output, (2) unresolved parameters,
  //   (3) cycle breaking, (4) empty nodes (re-running (2) as references
  //   dangle), (5) unreachable nodes.
  bool changed = true;
  while (changed) {
    changed = false;
    changed |= detail::pass_references_output(l, result.log);
    changed |= detail::pass_unresolved(l, result.log);
    changed |= detail::pass_cycles(l, result.log);
    bool inner = true;
    while (inner) {
      inner = detail::pass_empty_nodes(l, result.log);
      if (inner) inner |= detail::pass_unresolved(l, result.log);
      changed |= inner;
    }
    if (!opts.retain_unreachable) changed |= detail::pass_unreachable(l, result.log);
  }

  const Node* output = l.find(kOutputNode);
  result.ok = output != nullptr && !output->alternatives.empty();
  return result;
}

}  // namespace evolattice
