#pragma once

// Shared test machinery: fixture loading, random lattice generation,
// corruption injectors, and the independent counting/statistics oracles.

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evolattice/analytics.hpp"
#include "evolattice/lattice.hpp"
#include "evolattice/path_engine.hpp"
#include "evolattice/rng.hpp"

namespace testutil {

using namespace evolattice;

inline std::string fixtures_dir() {
#ifdef EVOLATTICE_FIXTURES_DIR
  return EVOLATTICE_FIXTURES_DIR;
#else
  return "tests/fixtures";
#endif
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline const std::vector<std::string>& zerolm_fixture_inputs() {
  static const std::vector<std::string> inputs = {"spec_vec", "spec_topk_mean", "cov_sum",
                                                  "spectral_cv_abs", "spectral_entropy"};
  return inputs;
}

inline std::string zerolm_fixture_text() {
  return read_file(fixtures_dir() + "/zerolm_proxy.lattice");
}

inline Lattice zerolm_fixture_lattice() {
  return deserialize_snapshot(zerolm_fixture_text(), zerolm_fixture_inputs());
}

// Reference discovered proxy over the ranking task's inputs: top-k spectral
// aggregation with a geometric-mean floor, a CV-based reliability gate
// blended with the covariance signal, and a low-weight entropy tie-breaker.
inline std::string discovered_proxy_source() {
  return "lambda spec_vec, cov_sum: "
         "tanh(0.6 * mean(topk(spec_vec, 3.0)) + "
         "0.4 * exp(mean(log(clamp(topk(spec_vec, 3.0), 0.000001, 1000000.0))))) * "
         "(0.7 / (1.0 + abs(sqrt(var(spec_vec) + 0.000001) / (abs(mean(spec_vec)) + 0.001))) + "
         "0.3 * sigmoid(log1p(cov_sum))) + 0.1 * entropy(spec_vec)";
}

// ---------------------------------------------------------------------------
// Random valid lattices
// ---------------------------------------------------------------------------

// Levels force acyclicity (references go strictly downward) and creation-on-
// demand forces reachability, so the result always passes validate.
inline Lattice random_valid_lattice(Rng& rng, int max_nodes = 10, int max_alts = 3) {
  Lattice l;
  l.task_inputs = {"x1", "x2", "x3"};

  struct Pending {
    std::string name;
    int level;
  };
  std::vector<Pending> queue = {{kOutputNode, 0}};
  std::map<std::string, int> level = {{kOutputNode, 0}};
  int created = 1;

  auto leaf_expr = [&](const std::string& p) { return p; };
  auto make_source = [&](const std::vector<std::string>& params, Rng& r) {
    if (params.empty()) {
      static const char* lits[] = {"0.5", "1.0", "2.0", "-1.5"};
      return std::string("lambda: ") + lits[r.below(4)];
    }
    std::string body = leaf_expr(params[0]);
    for (size_t i = 1; i < params.size(); ++i) {
      switch (r.below(3)) {
        case 0: body = body + " + " + params[i]; break;
        case 1: body = body + " * " + params[i]; break;
        default: body = "tanh(" + body + ") + 0.5 * " + params[i]; break;
      }
    }
    if (r.below(3) == 0) body = "sigmoid(" + body + ")";
    std::string out = "lambda";
    for (size_t i = 0; i < params.size(); ++i) out += (i == 0 ? " " : ", ") + params[i];
    return out + ": " + body;
  };

  while (!queue.empty()) {
    Pending cur = queue.back();
    queue.pop_back();
    Node node;
    node.name = cur.name;
    int alts = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_alts)));
    for (int a = 0; a < alts; ++a) {
      std::vector<std::string> params;
      int refs = static_cast<int>(rng.below(3));  // 0..2
      for (int k = 0; k < refs; ++k) {
        uint64_t kind = rng.below(3);
        if (kind == 0 && created < max_nodes) {
          std::string name = "n" + std::to_string(created);
          ++created;
          level[name] = cur.level + 1;
          queue.push_back({name, cur.level + 1});
          params.push_back(name);
        } else if (kind == 1) {
          // Existing strictly deeper node keeps the graph acyclic.
          std::vector<std::string> deeper;
          for (const auto& [n, lv] : level)
            if (lv > cur.level) deeper.push_back(n);
          if (!deeper.empty()) {
            params.push_back(deeper[rng.below(deeper.size())]);
          } else {
            params.push_back(l.task_inputs[rng.below(3)]);
          }
        } else {
          params.push_back(l.task_inputs[rng.below(3)]);
        }
      }
      std::sort(params.begin(), params.end());
      params.erase(std::unique(params.begin(), params.end()), params.end());
      std::string alt_name = cur.name + "_" + std::to_string(a);
      node.alternatives.push_back(
          Alternative::make(alt_name, make_source(params, rng), static_cast<int>(rng.below(6))));
    }
    l.nodes.push_back(std::move(node));
  }
  return l;
}

// Structural corruption for repair fuzzing. Returns a description of what was
// injected (useful on failure).
inline std::string corrupt_lattice(Lattice& l, Rng& rng) {
  std::string what;
  int kinds = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < kinds; ++k) {
    switch (rng.below(6)) {
      case 0: {  // two-node cycle
        if (l.nodes.size() < 2) break;
        size_t a = rng.below(l.nodes.size());
        size_t b = rng.below(l.nodes.size());
        if (a == b) break;
        const std::string& na = l.nodes[a].name;
        const std::string& nb = l.nodes[b].name;
        if (na == kOutputNode || nb == kOutputNode) break;
        l.nodes[a].alternatives.push_back(Alternative::make(
            na + "_cyc", "lambda " + nb + ": tanh(" + nb + ")", static_cast<int>(rng.below(4))));
        l.nodes[b].alternatives.push_back(Alternative::make(
            nb + "_cyc", "lambda " + na + ": tanh(" + na + ")", static_cast<int>(rng.below(4))));
        what += "cycle(" + na + "," + nb + ") ";
        break;
      }
      case 1: {  // self-loop
        size_t a = rng.below(l.nodes.size());
        const std::string& na = l.nodes[a].name;
        if (na == kOutputNode) break;
        l.nodes[a].alternatives.push_back(
            Alternative::make(na + "_self", "lambda " + na + ": " + na + " * 0.5", 0));
        what += "self(" + na + ") ";
        break;
      }
      case 2: {  // dangling reference
        size_t a = rng.below(l.nodes.size());
        l.nodes[a].alternatives.push_back(Alternative::make(
            l.nodes[a].name + "_ghost", "lambda ghost_node: ghost_node + 1.0", 0));
        what += "dangling(" + l.nodes[a].name + ") ";
        break;
      }
      case 3: {  // empty a node
        size_t a = rng.below(l.nodes.size());
        if (l.nodes[a].name == kOutputNode && rng.below(4) != 0) break;  // rarely kill output
        l.nodes[a].alternatives.clear();
        what += "empty(" + l.nodes[a].name + ") ";
        break;
      }
      case 4: {  // reference to output
        size_t a = rng.below(l.nodes.size());
        l.nodes[a].alternatives.push_back(Alternative::make(
            l.nodes[a].name + "_oref", "lambda output: output * 2.0", 0));
        what += "oref(" + l.nodes[a].name + ") ";
        break;
      }
      default: {  // unreachable island
        std::string name = "island" + std::to_string(rng.below(1000));
        if (l.find(name) != nullptr) break;
        Node node;
        node.name = name;
        node.alternatives.push_back(Alternative::make(name + "_0", "lambda x1: x1 + 1.0", 0));
        l.nodes.push_back(std::move(node));
        what += "island(" + name + ") ";
        break;
      }
    }
  }
  return what;
}

// ---------------------------------------------------------------------------
// Independent counting oracles
// ---------------------------------------------------------------------------

// Exhaustive oracle: walk the full per-node choice product, restrict each
// combination to the closure reachable from output, and count distinct
// restrictions. Exact for every lattice shape.
inline uint64_t brute_force_path_count(const Lattice& l) {
  std::vector<const Node*> nodes;
  for (const auto& n : l.nodes) nodes.push_back(&n);
  std::set<std::string> seen;
  std::vector<size_t> choice(nodes.size(), 0);
  while (true) {
    std::map<std::string, size_t> pick;
    for (size_t i = 0; i < nodes.size(); ++i) pick[nodes[i]->name] = choice[i];
    // closure from output under this full assignment
    std::set<std::string> closure;
    std::vector<std::string> todo;
    if (l.find(kOutputNode) != nullptr) {
      closure.insert(kOutputNode);
      todo.push_back(kOutputNode);
    }
    while (!todo.empty()) {
      std::string cur = todo.back();
      todo.pop_back();
      const Node* node = l.find(cur);
      const auto& alt = node->alternatives[pick[cur]];
      for (const auto& p : alt.params)
        if (l.find(p) != nullptr && closure.insert(p).second) todo.push_back(p);
    }
    std::string canon;
    for (const auto& name : closure) canon += name + "=" + std::to_string(pick[name]) + ";";
    seen.insert(canon);
    // next mixed-radix combination
    size_t i = 0;
    for (; i < nodes.size(); ++i) {
      if (++choice[i] < nodes[i]->alternatives.size()) break;
      choice[i] = 0;
    }
    if (i == nodes.size()) break;
  }
  return seen.size();
}

// The memoized product recurrence. Exact whenever no multi-alternative node
// is shared by two branches of one path closure (tree-shaped closures).
inline uint64_t recurrence_path_count(const Lattice& l) {
  std::map<std::string, uint64_t> memo;
  std::function<uint64_t(const std::string&)> count = [&](const std::string& name) -> uint64_t {
    auto it = memo.find(name);
    if (it != memo.end()) return it->second;
    const Node* node = l.find(name);
    uint64_t total = 0;
    for (const auto& alt : node->alternatives) {
      uint64_t prod = 1;
      for (const auto& p : alt.params)
        if (l.find(p) != nullptr) prod *= count(p);
      total += prod;
    }
    memo[name] = total;
    return total;
  };
  return count(kOutputNode);
}

// ---------------------------------------------------------------------------
// Minimal batch task for execution and statistics tests
// ---------------------------------------------------------------------------

// Scores a path as the mean (over a fixed random batch) of the scalarized
// output. Inputs x1..x3.
class EnvBatchTask : public Task {
 public:
  explicit EnvBatchTask(uint64_t seed, int batch = 4) {
    Rng rng(seed);
    for (int i = 0; i < batch; ++i) {
      Env env;
      env.emplace("x1", Value(rng.normal()));
      env.emplace("x2", Value(rng.normal()));
      env.emplace("x3", Value(std::vector<double>{rng.normal(), rng.normal(), rng.normal()}));
      batch_.emplace_back(std::move(env), Rng::derive(seed, static_cast<uint64_t>(i)));
    }
  }

  std::string name() const override { return "env_batch"; }
  std::vector<std::string> input_names() const override { return {"x1", "x2", "x3"}; }
  std::vector<std::pair<std::string, std::string>> input_kinds() const override {
    return {{"x1", "scalar"}, {"x2", "scalar"}, {"x3", "vector"}};
  }
  std::string output_kind() const override { return "scalar"; }
  std::string default_seed_source() const override { return "lambda x1: x1"; }
  std::string summary() const override { return "mean output over a fixed batch"; }

  ScoreOutcome score(const PathExecutorFn& exec) const override {
    double total = 0.0;
    for (const auto& [env, token] : batch_) {
      Value v;
      try {
        v = exec(env, token);
      } catch (const EvalError& e) {
        return ScoreOutcome::fail(e.what());
      }
      if (v.is_scalar()) {
        total += v.scalar();
      } else {
        double m = 0.0;
        for (double x : v.vec()) m += x;
        total += m / static_cast<double>(v.vec().size());
      }
    }
    return ScoreOutcome::ok(total / static_cast<double>(batch_.size()));
  }

  uint64_t batch_digest() const override { return 0; }
  void export_csv(std::ostream&) const override {}

 private:
  std::vector<std::pair<Env, uint64_t>> batch_;
};

// Brute-force group-by over (path, score) pairs, independent of
// alternative_stats' implementation.
inline std::map<std::pair<std::string, int>, AltStats> brute_force_stats(
    const EvaluationReport& report) {
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  for (const auto& ps : report.scored)
    for (const auto& [node, idx] : ps.path.assignment) groups[{node, idx}].push_back(ps.score);
  std::map<std::pair<std::string, int>, AltStats> out;
  for (auto& [key, scores] : groups) {
    AltStats s;
    s.count = static_cast<int>(scores.size());
    double sum = 0.0;
    for (double v : scores) sum += v;
    s.mean = sum / scores.size();
    double sq = 0.0;
    for (double v : scores) sq += (v - s.mean) * (v - s.mean);
    s.stdev = std::sqrt(sq / scores.size());
    s.max = *std::max_element(scores.begin(), scores.end());
    out[key] = s;
  }
  return out;
}

}  // namespace testutil
