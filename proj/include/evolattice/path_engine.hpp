#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "evolattice/lattice.hpp"
#include "evolattice/rng.hpp"
#include "evolattice/sha256.hpp"

namespace evolattice {

// One alternative chosen per node reachable from output under those choices.
struct Path {
  std::map<std::string, int> assignment;

  bool operator==(const Path& other) const { return assignment == other.assignment; }
  bool operator<(const Path& other) const { return assignment < other.assignment; }

  std::string to_string() const {
    std::string out;
    for (const auto& [node, idx] : assignment) {
      if (!out.empty()) out.push_back(' ');
      out += node + "=" + std::to_string(idx);
    }
    return out;
  }
};

// True when the path is a closed, in-range assignment over the lattice.
inline bool path_valid(const Lattice& l, const Path& path) {
  if (!path.assignment.count(kOutputNode)) return false;
  for (const auto& [name, idx] : path.assignment) {
    const Node* node = l.find(name);
    if (node == nullptr || idx < 0 || static_cast<size_t>(idx) >= node->alternatives.size())
      return false;
    for (const auto& p : node->alternatives[idx].params)
      if (l.find(p) != nullptr && !path.assignment.count(p)) return false;
  }
  // Every assigned node must be needed: reachable from output under the choices.
  std::set<std::string> needed = {kOutputNode};
  std::vector<std::string> todo = {kOutputNode};
  while (!todo.empty()) {
    std::string cur = todo.back();
    todo.pop_back();
    const Node* node = l.find(cur);
    const auto& alt = node->alternatives[path.assignment.at(cur)];
    for (const auto& p : alt.params)
      if (l.find(p) != nullptr && needed.insert(p).second) todo.push_back(p);
  }
  return needed.size() == path.assignment.size();
}

struct EnumerationResult {
  std::vector<Path> paths;
  uint64_t total = 0;
  bool sampled = false;
};

namespace detail {

template <typename Visitor>
void enumerate_rec(const Lattice& l, std::map<std::string, int>& assignment,
                   std::set<std::string>& frontier, Visitor&& visit) {
  if (frontier.empty()) {
    visit(assignment);
    return;
  }
  std::string node_name = *frontier.begin();
  frontier.erase(frontier.begin());
  const Node* node = l.find(node_name);
  for (size_t idx = 0; idx < node->alternatives.size(); ++idx) {
    const auto& alt = node->alternatives[idx];
    std::vector<std::string> added;
    for (const auto& p : alt.params) {
      if (l.find(p) == nullptr) continue;
      if (assignment.count(p) || frontier.count(p)) continue;
      frontier.insert(p);
      added.push_back(p);
    }
    assignment[node_name] = static_cast<int>(idx);
    enumerate_rec(l, assignment, frontier, visit);
    assignment.erase(node_name);
    for (const auto& p : added) frontier.erase(p);
  }
  frontier.insert(node_name);
}

}  // namespace detail

// Recursive path enumeration from "output". Returns every path in the
// deterministic depth-first order (nodes by name, alternative indices
// ascending) when the count fits the budget; otherwise a seeded uniform
// sample without replacement, always containing `must_include` when the
// caller supplies one that is still valid.
inline EnumerationResult enumerate_paths(const Lattice& l, uint64_t budget, uint64_t seed,
                                         const Path* must_include = nullptr) {
  EnumerationResult result;
  if (budget == 0) budget = 1;
  Rng rng(Rng::derive(seed, "path-sample"));

  std::map<std::string, int> assignment;
  std::set<std::string> frontier = {kOutputNode};
  detail::enumerate_rec(l, assignment, frontier, [&](const std::map<std::string, int>& a) {
    // Reservoir of `budget` paths, uniform without replacement.
    if (result.total < budget) {
      result.paths.push_back(Path{a});
    } else {
      uint64_t j = rng.below(result.total + 1);
      if (j < budget) result.paths[j] = Path{a};
    }
    ++result.total;
  });

  result.sampled = result.total > budget;
  if (result.sampled) {
    std::sort(result.paths.begin(), result.paths.end());
    if (must_include != nullptr && path_valid(l, *must_include)) {
      bool present = false;
      for (const auto& p : result.paths)
        if (p == *must_include) present = true;
      if (!present) {
        result.paths.back() = *must_include;
        std::sort(result.paths.begin(), result.paths.end());
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Global subpath cache
// ---------------------------------------------------------------------------

struct CacheKey {
  Digest subpath_sig{};
  uint64_t input_token = 0;

  bool operator==(const CacheKey& other) const {
    return input_token == other.input_token && subpath_sig == other.subpath_sig;
  }
};

struct CacheKeyHash {
  size_t operator()(const CacheKey& k) const {
    uint64_t h;
    std::memcpy(&h, k.subpath_sig.data(), sizeof(h));
    return static_cast<size_t>(h ^ k.input_token);
  }
};

// Bounded LRU map of subpath results. Linearizable: one lock guards the
// table, counters are atomic, and hits never change stored values.
class GlobalCache {
 public:
  explicit GlobalCache(size_t capacity = size_t{1} << 20) : capacity_(capacity ? capacity : 1) {}

  std::optional<Value> lookup(const CacheKey& key) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) {
      misses_.fetch_add(1, std::memory_order_relaxed);
      return std::nullopt;
    }
    lru_.splice(lru_.begin(), lru_, it->second);
    hits_.fetch_add(1, std::memory_order_relaxed);
    return it->second->second;
  }

  void insert(const CacheKey& key, const Value& value) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it != map_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return;
    }
    lru_.emplace_front(key, value);
    map_[key] = lru_.begin();
    if (map_.size() > capacity_) {
      map_.erase(lru_.back().first);
      lru_.pop_back();
    }
  }

  uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
  uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }
  size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return map_.size();
  }

 private:
  size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::pair<CacheKey, Value>> lru_;
  std::unordered_map<CacheKey, std::list<std::pair<CacheKey, Value>>::iterator, CacheKeyHash> map_;
  std::atomic<uint64_t> hits_{0};
  std::atomic<uint64_t> misses_{0};
};

// ---------------------------------------------------------------------------
// Path execution
// ---------------------------------------------------------------------------

struct PathExecError : EvalError {
  PathExecError(const std::string& node_, const std::string& alt_, const std::string& why)
      : EvalError("node \"" + node_ + "\" alternative \"" + alt_ + "\": " + why),
        node(node_),
        alt(alt_) {}
  std::string node;
  std::string alt;
};

// Replaces one node's computed value before it flows downstream. Used by the
// node-importance estimator; the global cache is bypassed while a tap is set.
struct NodeTap {
  std::string node;
  std::function<Value(const Value&)> transform;
};

namespace detail {

struct PathExecContext {
  const Lattice& lattice;
  const Path& path;
  const Env& inputs;
  uint64_t input_token;
  GlobalCache* cache;
  const NodeTap* tap;
  std::map<std::string, int>* eval_counts;
  std::map<std::string, Value> local;
  std::map<std::string, Digest> sigs;

  const Digest& subpath_sig(const std::string& node_name) {
    auto it = sigs.find(node_name);
    if (it != sigs.end()) return it->second;
    const Node* node = lattice.find(node_name);
    const auto& alt = node->alternatives[static_cast<size_t>(path.assignment.at(node_name))];
    Sha256 h;
    h.update(node_name);
    h.update("\0", 1);
    h.update(alt.source_sig.data(), alt.source_sig.size());
    for (const auto& p : alt.params) {
      if (lattice.find(p) != nullptr) {
        const Digest& child = subpath_sig(p);
        h.update(child.data(), child.size());
      } else {
        h.update("i:", 2);
        h.update(p);
        h.update("\0", 1);
      }
    }
    return sigs.emplace(node_name, h.finish()).first->second;
  }

  const Value& eval(const std::string& node_name) {
    auto it = local.find(node_name);
    if (it != local.end()) return it->second;

    bool use_cache = cache != nullptr && tap == nullptr;
    CacheKey key;
    if (use_cache) {
      key = CacheKey{subpath_sig(node_name), input_token};
      if (auto hit = cache->lookup(key))
        return local.emplace(node_name, std::move(*hit)).first->second;
    }

    const Node* node = lattice.find(node_name);
    const auto& alt = node->alternatives[static_cast<size_t>(path.assignment.at(node_name))];
    Env env;
    for (const auto& p : alt.params) {
      if (lattice.find(p) != nullptr) {
        env.emplace(p, eval(p));
      } else {
        auto in = inputs.find(p);
        if (in == inputs.end()) throw MissingInput(p);
        env.emplace(p, in->second);
      }
    }
    Value v;
    try {
      v = evaluate(*alt.body, env);
    } catch (const MissingInput&) {
      throw;
    } catch (const EvalError& e) {
      throw PathExecError(node_name, alt.name, e.what());
    }
    if (eval_counts != nullptr) ++(*eval_counts)[node_name];
    if (tap != nullptr && tap->node == node_name) v = tap->transform(v);
    auto stored = local.emplace(node_name, std::move(v)).first;
    if (use_cache) cache->insert(key, stored->second);
    return stored->second;
  }
};

}  // namespace detail

// Evaluates the path's output value for one input binding. Node values are
// computed at most once per call (local memoization) and shared upstream
// subgraphs are reused from the global cache across paths.
inline Value execute_path(const Lattice& lattice, const Path& path, const Env& inputs,
                          uint64_t input_token, GlobalCache* cache = nullptr,
                          const NodeTap* tap = nullptr,
                          std::map<std::string, int>* eval_counts = nullptr) {
  detail::PathExecContext ctx{lattice, path, inputs, input_token, cache, tap, eval_counts, {}, {}};
  return ctx.eval(kOutputNode);
}

// ---------------------------------------------------------------------------
// Task interface and lattice evaluation
// ---------------------------------------------------------------------------

// Executable view of one path: callable on (inputs, input batch token).
using PathExecutorFn = std::function<Value(const Env&, uint64_t)>;

struct ScoreOutcome {
  std::optional<double> score;
  std::string error;

  static ScoreOutcome ok(double s) { return {s, {}}; }
  static ScoreOutcome fail(std::string why) { return {std::nullopt, std::move(why)}; }
};

class Task {
 public:
  virtual ~Task() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> input_names() const = 0;
  // "name:scalar" / "name:vector" pairs, for prompts and scripted oracles.
  virtual std::vector<std::pair<std::string, std::string>> input_kinds() const = 0;
  virtual std::string output_kind() const = 0;
  virtual std::string default_seed_source() const = 0;
  virtual std::string summary() const = 0;
  virtual ScoreOutcome score(const PathExecutorFn& exec) const = 0;
  virtual uint64_t batch_digest() const = 0;
  virtual void export_csv(std::ostream& out) const = 0;
};

struct PathScore {
  Path path;
  double score;
};

struct PathFailure {
  Path path;
  std::string error;
};

struct EvaluationReport {
  std::vector<PathScore> scored;
  std::vector<PathFailure> failed;
  uint64_t cache_hits = 0;
  uint64_t cache_misses = 0;
  uint64_t enumerated_total = 0;
  bool sampled = false;

  std::optional<double> best() const {
    std::optional<double> b;
    for (const auto& s : scored)
      if (!b || s.score > *b) b = s.score;
    return b;
  }

  const Path* best_path() const {
    const PathScore* best_entry = nullptr;
    for (const auto& s : scored)
      if (best_entry == nullptr || s.score > best_entry->score ||
          (s.score == best_entry->score && s.path < best_entry->path))
        best_entry = &s;
    return best_entry == nullptr ? nullptr : &best_entry->path;
  }
};

inline EvaluationReport evaluate_lattice(const Lattice& lattice, const Task& task,
                                         uint64_t budget, uint64_t seed,
                                         const Path* best_hint = nullptr,
                                         GlobalCache* cache = nullptr) {
  EvaluationReport report;
  auto en = enumerate_paths(lattice, budget, seed, best_hint);
  report.enumerated_total = en.total;
  report.sampled = en.sampled;
  uint64_t h0 = cache ? cache->hits() : 0;
  uint64_t m0 = cache ? cache->misses() : 0;
  for (const auto& path : en.paths) {
    PathExecutorFn exec = [&lattice, &path, cache](const Env& inputs, uint64_t token) {
      return execute_path(lattice, path, inputs, token, cache);
    };
    ScoreOutcome outcome;
    try {
      outcome = task.score(exec);
    } catch (const std::exception& e) {
      outcome = ScoreOutcome::fail(std::string("task error: ") + e.what());
    }
    if (outcome.score.has_value() && std::isfinite(*outcome.score)) {
      report.scored.push_back({path, *outcome.score});
    } else {
      report.failed.push_back({path, outcome.error.empty() ? "non-finite score" : outcome.error});
    }
  }
  if (cache != nullptr) {
    report.cache_hits = cache->hits() - h0;
    report.cache_misses = cache->misses() - m0;
  }
  return report;
}

}  // namespace evolattice
