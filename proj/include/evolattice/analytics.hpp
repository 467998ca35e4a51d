#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evolattice/path_engine.hpp"

namespace evolattice {

struct EmptyReport : std::runtime_error {
  EmptyReport() : std::runtime_error("evaluation report has no scored paths") {}
};

// Per-(node, alternative index) sample statistics over all scored paths that
// contain the alternative.
struct StatsTable {
  std::map<std::pair<std::string, int>, AltStats> entries;
  int step = 0;
};

inline StatsTable alternative_stats(const EvaluationReport& report, int step = 0) {
  if (report.scored.empty()) throw EmptyReport();
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  for (const auto& ps : report.scored)
    for (const auto& [node, idx] : ps.path.assignment) groups[{node, idx}].push_back(ps.score);

  StatsTable table;
  table.step = step;
  for (const auto& [key, scores] : groups) {
    AltStats s;
    s.count = static_cast<int>(scores.size());
    double sum = 0.0;
    for (double x : scores) sum += x;
    s.mean = sum / static_cast<double>(scores.size());
    double sq = 0.0;
    for (double x : scores) sq += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(sq / static_cast<double>(scores.size()));  // population convention
    s.max = *std::max_element(scores.begin(), scores.end());
    table.entries[key] = s;
  }
  return table;
}

// Copy of the lattice with the table's statistics attached to alternatives.
// Alternatives absent from the table keep whatever stats they already carry.
inline Lattice with_stats(Lattice lattice, const StatsTable& table) {
  for (auto& node : lattice.nodes) {
    for (size_t i = 0; i < node.alternatives.size(); ++i) {
      auto it = table.entries.find({node.name, static_cast<int>(i)});
      if (it != table.entries.end()) node.alternatives[i].stats = it->second;
    }
  }
  return lattice;
}

// ---------------------------------------------------------------------------
// Node importance via output perturbation
// ---------------------------------------------------------------------------

struct ImportanceEntry {
  double importance = 0.0;  // mean |score(perturbed) - score(base)|
  double sigma_rel = 0.0;
  int samples = 0;
  bool failed = false;
};

struct ImportanceTable {
  std::map<std::string, ImportanceEntry> entries;  // keyed by node name, output excluded
};

// Perturbs each best-path node's output with seeded Gaussian noise
// (sigma = sigma_rel * max(|value|_inf, 1), one draw per sample, broadcast
// over vector elements) and measures the mean shift of the task score.
inline ImportanceTable node_importance(const Lattice& lattice, const Path& best_path,
                                       const Task& task, double sigma_rel, int samples,
                                       uint64_t seed) {
  ImportanceTable table;

  PathExecutorFn base_exec = [&](const Env& inputs, uint64_t token) {
    return execute_path(lattice, best_path, inputs, token, nullptr);
  };
  ScoreOutcome base = task.score(base_exec);
  if (!base.score.has_value()) {
    // The caller is expected to pass a successfully scored path; record
    // everything as failed instead of crashing on the race anyway.
    for (const auto& [node, idx] : best_path.assignment)
      if (node != kOutputNode) table.entries[node] = {0.0, sigma_rel, 0, true};
    return table;
  }

  for (const auto& [node, idx] : best_path.assignment) {
    if (node == kOutputNode) continue;
    Rng rng(Rng::derive(Rng::derive(seed, "importance"), node));
    ImportanceEntry entry;
    entry.sigma_rel = sigma_rel;
    entry.samples = samples;
    double total = 0.0;
    for (int s = 0; s < samples && !entry.failed; ++s) {
      double z = rng.normal();
      NodeTap tap;
      tap.node = node;
      tap.transform = [sigma_rel, z](const Value& v) -> Value {
        double scale = std::max(v.max_abs(), 1.0);
        double delta = z * sigma_rel * scale;
        if (v.is_scalar()) return Value(v.scalar() + delta);
        std::vector<double> out = v.vec();
        for (double& x : out) x += delta;
        return Value(std::move(out));
      };
      PathExecutorFn exec = [&](const Env& inputs, uint64_t token) {
        return execute_path(lattice, best_path, inputs, token, nullptr, &tap);
      };
      ScoreOutcome perturbed = task.score(exec);
      if (!perturbed.score.has_value()) {
        entry.failed = true;
        break;
      }
      total += std::fabs(*perturbed.score - *base.score);
    }
    if (!entry.failed) entry.importance = total / static_cast<double>(samples);
    table.entries[node] = entry;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Per-step distribution metrics
// ---------------------------------------------------------------------------

struct StepMetrics {
  std::optional<double> best, mean, median, variance;
  std::optional<double> p10, p25, p75, p90;
  uint64_t path_total = 0;
  int scored = 0;
  int failed = 0;
  double best_so_far = -std::numeric_limits<double>::infinity();
};

namespace detail {

// Linear interpolation between closest ranks over a sorted sample.
inline double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.size() == 1) return sorted[0];
  double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  size_t lo = static_cast<size_t>(rank);
  double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

inline StepMetrics step_metrics(const EvaluationReport& report, double prev_best_so_far) {
  StepMetrics m;
  m.path_total = report.enumerated_total;
  m.scored = static_cast<int>(report.scored.size());
  m.failed = static_cast<int>(report.failed.size());
  m.best_so_far = prev_best_so_far;
  if (report.scored.empty()) return m;

  std::vector<double> xs;
  xs.reserve(report.scored.size());
  for (const auto& s : report.scored) xs.push_back(s.score);
  std::sort(xs.begin(), xs.end());

  double sum = 0.0;
  for (double x : xs) sum += x;
  double mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());

  m.best = xs.back();
  m.mean = mean;
  m.median = detail::percentile(xs, 50.0);
  m.variance = var;
  m.p10 = detail::percentile(xs, 10.0);
  m.p25 = detail::percentile(xs, 25.0);
  m.p75 = detail::percentile(xs, 75.0);
  m.p90 = detail::percentile(xs, 90.0);
  m.best_so_far = std::max(prev_best_so_far, xs.back());
  return m;
}

}  // namespace evolattice
