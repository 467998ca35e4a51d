#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "evolattice/evolution.hpp"

namespace evolattice {

// Overwrite-based single-candidate baselines over the same expression
// language, oracle interface, and tasks: FunSearch-style full regeneration
// and AlphaEvolve-style diff-of-one-expression. Exactly one candidate is
// live at any time; path_total is fixed at 1 in the logs.

struct BaselineHistoryEntry {
  int step = 0;
  std::string source;
  std::optional<double> score;
  bool accepted = false;
};

struct BaselineResult {
  std::string best_source;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<BaselineHistoryEntry> history;
};

namespace detail {

inline ScoreOutcome score_expression(const Task& task, const std::string& source) {
  ParsedLambda parsed;
  try {
    parsed = parse_lambda(Alternative::flatten_source(source));
  } catch (const std::exception& e) {
    return ScoreOutcome::fail(std::string("unparseable candidate: ") + e.what());
  }
  PathExecutorFn exec = [body = parsed.body](const Env& inputs, uint64_t) {
    return evaluate(*body, inputs);
  };
  try {
    return task.score(exec);
  } catch (const std::exception& e) {
    return ScoreOutcome::fail(std::string("task error: ") + e.what());
  }
}

}  // namespace detail

struct BaselineConfig {
  std::string mode = "regenerate";  // regenerate | diff
  int steps = 100;
  int oracle_retry_budget = 2;
};

// Greedy single-candidate loop: ask for a replacement (regenerate) or an
// edit of the current expression (diff), score it on the same task, accept
// on strict improvement. Logging mirrors the main engine.
inline BaselineResult run_baseline(Oracle& oracle, const Task& task, const BaselineConfig& config,
                                   const std::filesystem::path& out_dir,
                                   bool write_transcripts = true) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  RunLock lock(out_dir);

  BaselineResult result;
  std::string current = task.default_seed_source();
  double best = -std::numeric_limits<double>::infinity();
  ScoreOutcome initial = detail::score_expression(task, current);
  if (initial.score.has_value()) best = *initial.score;
  result.best_source = current;
  result.best_score = best;
  detail::write_file(out_dir / "step_000000.candidate", current + "\n");

  std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream steps(out_dir / "steps.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics || !steps) throw std::runtime_error("cannot open log files in " + out_dir.string());

  for (int t = 1; t <= config.steps; ++t) {
    PromptBundle bundle = make_baseline_bundle(config.mode, current, best, task.input_kinds(),
                                               task.output_kind(), task.summary(), t);
    std::string raw;
    std::optional<std::string> proposal;
    std::string parse_error = "no reply";
    for (int attempt = 0; attempt <= config.oracle_retry_budget && !proposal.has_value();
         ++attempt) {
      PromptBundle ask = bundle;
      if (attempt > 0)
        ask.user_prompt += "\nThe previous reply could not be parsed (" + parse_error +
                           "). Reply with only a fenced code block containing one lambda.\n";
      try {
        raw = oracle.expression_reply(ask, attempt);
      } catch (const MissingTranscript&) {
        throw;
      } catch (const std::exception& e) {
        parse_error = e.what();
        raw.clear();
        continue;
      }
      proposal = parse_expression_reply(raw);
      if (!proposal.has_value()) parse_error = "no lambda found in reply";
    }
    if (write_transcripts) detail::write_file(out_dir / transcript_filename(t, "expr"), raw);

    BaselineHistoryEntry entry;
    entry.step = t;
    entry.source = proposal.value_or("");
    ScoreOutcome outcome =
        proposal.has_value() ? detail::score_expression(task, *proposal)
                             : ScoreOutcome::fail("oracle error: " + parse_error);
    entry.score = outcome.score;
    entry.accepted = outcome.score.has_value() && *outcome.score > best;
    if (entry.accepted) {
      current = *proposal;
      best = *outcome.score;
      result.best_source = current;
      result.best_score = best;
      char buf[40];
      std::snprintf(buf, sizeof(buf), "step_%06d.candidate", t);
      detail::write_file(out_dir / buf, current + "\n");
    }
    result.history.push_back(entry);

    // Same metrics schema as the main engine with a single-path report.
    EvaluationReport rep;
    rep.enumerated_total = 1;
    Path trivial;
    trivial.assignment[kOutputNode] = 0;
    if (outcome.score.has_value() && std::isfinite(*outcome.score)) {
      rep.scored.push_back({trivial, *outcome.score});
    } else {
      rep.failed.push_back({trivial, outcome.error});
    }
    StepMetrics m = step_metrics(rep, best);
    m.best_so_far = best;  // acceptance-driven, as in the main engine
    metrics << metrics_line(t, m, entry.accepted).dump() << "\n";
    metrics.flush();

    nlohmann::ordered_json j;
    j["step"] = t;
    j["mode"] = config.mode;
    j["source"] = entry.source;
    j["score"] = entry.score.has_value() && std::isfinite(*entry.score)
                     ? nlohmann::ordered_json(*entry.score)
                     : nlohmann::ordered_json(nullptr);
    j["accepted"] = entry.accepted;
    steps << j.dump() << "\n";
    steps.flush();
  }
  detail::write_file(out_dir / "best.expr", result.best_source + "\n");
  return result;
}

}  // namespace evolattice
