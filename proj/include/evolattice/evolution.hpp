#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evolattice/analytics.hpp"
#include "evolattice/diff.hpp"
#include "evolattice/oracle.hpp"
#include "evolattice/plan.hpp"
#include "evolattice/repair.hpp"
#include "evolattice/tasks.hpp"

namespace evolattice {

// ---------------------------------------------------------------------------
// Plan application
// ---------------------------------------------------------------------------

struct ApplySkip {
  std::string edit;
  std::string reason;
};

namespace detail {

inline std::string next_alt_name(const Node& node) {
  int next = 0;
  std::string prefix = node.name + "_";
  for (const auto& a : node.alternatives) {
    if (a.name.rfind(prefix, 0) != 0) continue;
    std::string suffix = a.name.substr(prefix.size());
    if (suffix.empty() || suffix.find_first_not_of("0123456789") != std::string::npos) continue;
    next = std::max(next, std::stoi(suffix) + 1);
  }
  return prefix + std::to_string(next);
}

inline std::string describe(const MutationEdit& e) {
  switch (e.kind) {
    case MutationEdit::Kind::DeleteAlternative:
      return "delete_alternative " + e.node + "/" + e.name;
    case MutationEdit::Kind::AddAlternative:
      return "add_alternative " + e.node;
    case MutationEdit::Kind::AddNode:
      return "add_node " + e.name;
    case MutationEdit::Kind::ReplaceAlternative:
      return "replace_alternative " + e.node + "/" + e.name;
  }
  return "edit";
}

}  // namespace detail

// Applies edits in order on a copy. Oracle output is untrusted: unknown
// targets, bad names, and unparseable sources skip that single edit (logged)
// rather than failing the plan. The result may still violate invariants and
// must flow through repair.
inline Lattice apply_plan(const Lattice& input, const MutationPlan& plan,
                          std::vector<ApplySkip>* skips = nullptr) {
  Lattice l = input;
  auto skip = [&](const MutationEdit& e, const std::string& why) {
    if (skips != nullptr) skips->push_back({detail::describe(e), why});
  };

  for (const auto& e : plan.edits) {
    switch (e.kind) {
      case MutationEdit::Kind::DeleteAlternative: {
        Node* node = l.find(e.node);
        if (node == nullptr) {
          skip(e, "unknown node");
          break;
        }
        bool found = false;
        for (size_t i = 0; i < node->alternatives.size(); ++i) {
          if (node->alternatives[i].name == e.name) {
            node->alternatives.erase(node->alternatives.begin() + static_cast<long>(i));
            found = true;
            break;
          }
        }
        if (!found) skip(e, "unknown alternative");
        break;
      }
      case MutationEdit::Kind::AddAlternative: {
        Node* node = l.find(e.node);
        if (node == nullptr) {
          skip(e, "unknown node");
          break;
        }
        std::string name = e.name.empty() ? detail::next_alt_name(*node) : e.name;
        if (!valid_identifier(name)) {
          skip(e, "invalid alternative name");
          break;
        }
        if (node->find(name) != nullptr) {
          skip(e, "alternative name already exists");
          break;
        }
        try {
          node->alternatives.push_back(Alternative::make(name, e.source, 0));
        } catch (const std::exception& ex) {
          skip(e, std::string("unparseable source: ") + ex.what());
        }
        break;
      }
      case MutationEdit::Kind::AddNode: {
        if (!valid_identifier(e.name)) {
          skip(e, "invalid node name");
          break;
        }
        if (l.find(e.name) != nullptr) {
          skip(e, "node already exists");
          break;
        }
        Node node;
        node.name = e.name;
        for (const auto& src : e.sources) {
          std::string alt_name = e.name + "_" + std::to_string(node.alternatives.size());
          try {
            node.alternatives.push_back(Alternative::make(alt_name, src, 0));
          } catch (const std::exception&) {
            // Individual unparseable sources are dropped; the node survives
            // if at least one parses.
          }
        }
        if (node.alternatives.empty()) {
          skip(e, "no source parsed");
          break;
        }
        l.nodes.push_back(std::move(node));
        break;
      }
      case MutationEdit::Kind::ReplaceAlternative: {
        Node* node = l.find(e.node);
        if (node == nullptr) {
          skip(e, "unknown node");
          break;
        }
        bool found = false;
        for (auto& alt : node->alternatives) {
          if (alt.name != e.name) continue;
          found = true;
          try {
            alt = Alternative::make(alt.name, e.source, 0);  // replacement is new code
          } catch (const std::exception& ex) {
            skip(e, std::string("unparseable source: ") + ex.what());
          }
          break;
        }
        if (!found) skip(e, "unknown alternative");
        break;
      }
    }
  }
  return l;
}

// ---------------------------------------------------------------------------
// Evolution loop
// ---------------------------------------------------------------------------

struct EvolutionConfig {
  int steps = 100;
  uint64_t path_budget = 64;
  uint64_t master_seed = 1;
  uint64_t sampler_seed = 3;
  bool retain_unreachable = false;
  size_t cache_capacity = size_t{1} << 20;
  double importance_sigma_rel = 0.01;
  int importance_samples = 16;
  int oracle_retry_budget = 2;
};

struct RunState {
  Lattice lattice;
  double best_so_far = -std::numeric_limits<double>::infinity();
  std::optional<Path> best_path;
  int step = 0;
  std::string prev_diff;
};

struct StepRecord {
  int step = 0;
  MutationPlan plan;
  bool oracle_error = false;
  std::vector<ApplySkip> skips;
  bool repair_failed = false;
  RepairLog repair_log;
  double pre_best = 0.0;   // best-so-far entering the step
  double post_best = 0.0;  // candidate's best scored path (-inf when none)
  bool accepted = false;
  std::string diff_text;
  std::vector<std::string> changed_nodes;
  uint64_t cache_hits = 0;
  uint64_t cache_misses = 0;
  StepMetrics metrics;
  std::string hypothesis_raw;
  std::string mutation_raw;
};

namespace detail {

inline Lattice bump_ages(Lattice l) {
  for (auto& node : l.nodes)
    for (auto& alt : node.alternatives) ++alt.age;
  return l;
}

}  // namespace detail

// One full evolutionary step: evaluate, analyze, prompt, mutate, repair,
// re-evaluate, accept or reject.
inline StepRecord evolve_step(RunState& state, Oracle& oracle, const Task& task,
                              const EvolutionConfig& config, GlobalCache& cache) {
  StepRecord rec;
  rec.step = state.step + 1;
  rec.pre_best = state.best_so_far;
  const uint64_t step_seed =
      Rng::derive(config.sampler_seed, static_cast<uint64_t>(rec.step));

  // (i) evaluate the current lattice
  const Path* hint = state.best_path.has_value() ? &*state.best_path : nullptr;
  EvaluationReport report =
      evaluate_lattice(state.lattice, task, config.path_budget, step_seed, hint, &cache);
  rec.cache_hits += report.cache_hits;
  rec.cache_misses += report.cache_misses;

  // (ii) statistics, importance
  Lattice annotated = state.lattice;
  if (!report.scored.empty())
    annotated = with_stats(state.lattice, alternative_stats(report, rec.step));
  ImportanceTable importance;
  if (state.best_path.has_value() && path_valid(state.lattice, *state.best_path) &&
      !report.scored.empty()) {
    importance = node_importance(
        state.lattice, *state.best_path, task, config.importance_sigma_rel,
        config.importance_samples,
        Rng::derive(config.master_seed, Rng::derive(0x696d70ULL, static_cast<uint64_t>(rec.step))));
  }

  // (iii) prompt the oracle: hypotheses, then the mutation plan
  BundleInputs bundle_in;
  bundle_in.snapshot = serialize_snapshot(annotated);
  bundle_in.input_kinds = task.input_kinds();
  bundle_in.output_kind = task.output_kind();
  bundle_in.importance_text = render_importance(importance);
  bundle_in.previous_diff = state.prev_diff;
  bundle_in.task_summary = task.summary();
  bundle_in.step = rec.step;

  try {
    rec.hypothesis_raw = oracle.hypothesis_reply(make_hypothesis_bundle(bundle_in));
  } catch (const std::exception&) {
    rec.hypothesis_raw.clear();  // the run never aborts on oracle failure
  }
  bundle_in.hypotheses = parse_hypothesis_reply(rec.hypothesis_raw);

  std::optional<MutationPlan> plan;
  {
    PromptBundle bundle = make_mutation_bundle(bundle_in);
    std::string parse_error;
    for (int attempt = 0; attempt <= config.oracle_retry_budget && !plan.has_value(); ++attempt) {
      PromptBundle ask = bundle;
      if (attempt > 0)
        ask.user_prompt += "\nThe previous reply could not be parsed (" + parse_error +
                           "). Reply with only a fenced ```json block containing the edit array.\n";
      try {
        rec.mutation_raw = oracle.mutation_reply(ask, attempt);
      } catch (const MissingTranscript&) {
        throw;  // incomplete recording: the replay must abort, not no-op
      } catch (const std::exception& e) {
        parse_error = e.what();
        rec.mutation_raw.clear();
        continue;
      }
      PlanParse parsed = parse_plan_reply(rec.mutation_raw);
      if (parsed.plan.has_value()) {
        plan = std::move(parsed.plan);
      } else {
        parse_error = parsed.error;
      }
    }
  }

  EvaluationReport cand_report;
  const EvaluationReport* metrics_report = &report;
  Lattice candidate;
  bool candidate_is_current = false;

  if (!plan.has_value()) {
    // OracleError: the step is a no-op record and evolution continues.
    rec.oracle_error = true;
    candidate = state.lattice;
    candidate_is_current = true;
  } else {
    rec.plan = *plan;
    // (iv) apply and (v) repair
    Lattice mutated = apply_plan(state.lattice, rec.plan, &rec.skips);
    RepairResult repaired = repair(mutated, {config.retain_unreachable});
    rec.repair_log = repaired.log;
    if (!repaired.ok) {
      rec.repair_failed = true;  // revert to the previous valid lattice
      candidate = state.lattice;
      candidate_is_current = true;
    } else {
      candidate = std::move(repaired.lattice);
      candidate_is_current = snapshot_equal(candidate, state.lattice);
    }
  }

  rec.diff_text.clear();
  if (!candidate_is_current) {
    StructuralDiff diff = structural_diff(state.lattice, candidate);
    rec.diff_text = diff.text;
    rec.changed_nodes = diff.changed_nodes;
  }

  // (vi) evaluate the candidate on the same step batch and accept on strict
  // improvement over the running best
  if (candidate_is_current) {
    cand_report = report;  // identical lattice, seed, and batch
  } else {
    cand_report =
        evaluate_lattice(candidate, task, config.path_budget, step_seed, hint, &cache);
    rec.cache_hits += cand_report.cache_hits;
    rec.cache_misses += cand_report.cache_misses;
  }
  std::optional<double> cand_best = cand_report.best();
  rec.post_best = cand_best.value_or(-std::numeric_limits<double>::infinity());
  // A structurally unchanged candidate is never accepted: there is no
  // mutation to accept, even if a re-sample surfaced a better existing path.
  rec.accepted =
      cand_best.has_value() && *cand_best > state.best_so_far && !candidate_is_current;

  if (rec.accepted) {
    Lattice with = with_stats(candidate, alternative_stats(cand_report, rec.step));
    state.lattice = detail::bump_ages(std::move(with));
    state.best_so_far = *cand_best;
    state.best_path = *cand_report.best_path();
    metrics_report = &cand_report;
  }

  rec.metrics = step_metrics(*metrics_report, rec.pre_best);
  // best_so_far increases exactly at accepted steps; a lucky re-sample on a
  // rejected step is recorded in `best` but does not move the running best.
  rec.metrics.best_so_far = state.best_so_far;

  state.prev_diff = rec.diff_text;
  state.step = rec.step;
  return rec;
}

// ---------------------------------------------------------------------------
// Run orchestration and on-disk layout
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json metrics_line(int step, const StepMetrics& m, bool accepted) {
  nlohmann::ordered_json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v.has_value() && std::isfinite(*v)) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  j["step"] = step;
  put("best", m.best);
  put("mean", m.mean);
  put("median", m.median);
  put("variance", m.variance);
  put("p10", m.p10);
  put("p25", m.p25);
  put("p75", m.p75);
  put("p90", m.p90);
  j["path_total"] = m.path_total;
  j["scored"] = m.scored;
  j["failed"] = m.failed;
  if (std::isfinite(m.best_so_far)) {
    j["best_so_far"] = m.best_so_far;
  } else {
    j["best_so_far"] = nullptr;
  }
  j["accepted"] = accepted;
  return j;
}

inline nlohmann::ordered_json step_record_json(const StepRecord& rec) {
  nlohmann::ordered_json j;
  j["step"] = rec.step;
  j["plan"] = plan_to_json(rec.plan);
  j["oracle_error"] = rec.oracle_error;
  nlohmann::ordered_json skips = nlohmann::ordered_json::array();
  for (const auto& s : rec.skips) skips.push_back({{"edit", s.edit}, {"reason", s.reason}});
  j["skipped_edits"] = std::move(skips);
  nlohmann::ordered_json actions = nlohmann::ordered_json::array();
  for (const auto& a : rec.repair_log.actions)
    actions.push_back({{"kind", a.kind == RepairAction::Kind::RemovedNode ? "removed_node"
                                                                          : "removed_alternative"},
                       {"node", a.node},
                       {"alt", a.alt},
                       {"reason", a.reason}});
  j["repair"] = {{"failed", rec.repair_failed}, {"actions", std::move(actions)}};
  j["pre_best"] = std::isfinite(rec.pre_best) ? nlohmann::ordered_json(rec.pre_best)
                                              : nlohmann::ordered_json(nullptr);
  j["post_best"] = std::isfinite(rec.post_best) ? nlohmann::ordered_json(rec.post_best)
                                                : nlohmann::ordered_json(nullptr);
  j["accepted"] = rec.accepted;
  j["diff"] = rec.diff_text;
  j["changed_nodes"] = rec.changed_nodes;
  j["cache"] = {{"hits", rec.cache_hits}, {"misses", rec.cache_misses}};
  return j;
}

struct RunLock {
  explicit RunLock(const std::filesystem::path& dir) : path(dir / ".lock") {
    std::FILE* f = std::fopen(path.string().c_str(), "wx");
    if (f == nullptr)
      throw std::runtime_error("run directory is locked (remove " + path.string() +
                               " if no other run is active)");
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
  std::filesystem::path path;
};

inline std::string snapshot_filename(int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06d.lattice", step);
  return buf;
}

inline std::string transcript_filename(int step, const char* kind) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "step_%06d_%s.txt", step, kind);
  return buf;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

}  // namespace detail

struct RunResult {
  RunState state;
  int accepted_steps = 0;
};

// Executes the loop for config.steps steps, writing snapshots for accepted
// steps, metrics JSONL and step records every step, and oracle transcripts.
inline RunResult run_evolution(const Lattice& initial, Oracle& oracle, const Task& task,
                               const EvolutionConfig& config,
                               const std::filesystem::path& out_dir,
                               bool write_transcripts = true) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  RunLock lock(out_dir);

  GlobalCache cache(config.cache_capacity);
  RunState state;
  state.lattice = initial;

  // Step 0: evaluate the starting lattice to seed best-so-far and stats.
  EvaluationReport report0 = evaluate_lattice(
      state.lattice, task, config.path_budget, Rng::derive(config.sampler_seed, uint64_t{0}),
      nullptr, &cache);
  if (!report0.scored.empty()) {
    state.lattice = with_stats(state.lattice, alternative_stats(report0, 0));
    state.best_so_far = *report0.best();
    state.best_path = *report0.best_path();
  }
  detail::write_file(out_dir / snapshot_filename(0), serialize_snapshot(state.lattice));

  std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream steps(out_dir / "steps.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics || !steps) throw std::runtime_error("cannot open log files in " + out_dir.string());

  RunResult result;
  for (int t = 1; t <= config.steps; ++t) {
    StepRecord rec = evolve_step(state, oracle, task, config, cache);
    if (write_transcripts) {
      detail::write_file(out_dir / transcript_filename(t, "hypo"), rec.hypothesis_raw);
      detail::write_file(out_dir / transcript_filename(t, "mut"), rec.mutation_raw);
    }
    metrics << metrics_line(t, rec.metrics, rec.accepted).dump() << "\n";
    metrics.flush();  // valid JSONL at every prefix
    steps << step_record_json(rec).dump() << "\n";
    steps.flush();
    if (rec.accepted) {
      detail::write_file(out_dir / snapshot_filename(t), serialize_snapshot(state.lattice));
      ++result.accepted_steps;
    }
  }
  result.state = std::move(state);
  return result;
}

}  // namespace evolattice
