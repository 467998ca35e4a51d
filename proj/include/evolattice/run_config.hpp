#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evolattice/baseline.hpp"
#include "evolattice/evolution.hpp"
#include "evolattice/oracle_http.hpp"
#include "evolattice/tasks.hpp"

namespace evolattice {

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& field_, const std::string& why)
      : std::runtime_error("config error at \"" + field_ + "\": " + why), field(field_) {}
  std::string field;
};

// Fully resolved run configuration. Every field has a default; the resolved
// form round-trips losslessly through JSON.
struct RunConfig {
  std::string engine = "evolattice";  // evolattice | baseline_regenerate | baseline_diff
  std::string task_name = "ranking";
  RankingTaskConfig ranking;
  OptimizerTaskConfig optimizer;
  RegressionTaskConfig regression;

  std::string oracle_kind = "grammar";  // grammar | replay | llm
  uint64_t oracle_seed = 7;
  std::vector<MutationPlan> replay_plans;
  std::vector<std::string> replay_expressions;
  std::vector<std::string> replay_hypotheses;
  OracleConfig llm;

  int steps = 100;
  uint64_t path_budget = 64;
  uint64_t seed_master = 1;
  uint64_t seed_batch = 2;
  uint64_t seed_sampler = 3;
  std::string output_dir = "runs/out";
  bool retain_unreachable = false;
  uint64_t cache_capacity = uint64_t{1} << 20;
  double importance_sigma_rel = 0.01;
  int importance_samples = 16;
  int oracle_retry_budget = 2;
  std::string initial_snapshot;  // optional path to a .lattice file

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;

  static RunConfig load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("(file)", "cannot read " + file.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("(file)", "not valid JSON: " + file.string());
    return from_json(j);
  }

  std::unique_ptr<Task> make_task() const {
    if (task_name == "ranking") {
      RankingTaskConfig cfg = ranking;
      cfg.batch_seed = seed_batch;
      return std::make_unique<RankingTask>(cfg);
    }
    if (task_name == "optimizer") {
      OptimizerTaskConfig cfg = optimizer;
      cfg.batch_seed = seed_batch;
      return std::make_unique<OptimizerTask>(cfg);
    }
    if (task_name == "regression") {
      RegressionTaskConfig cfg = regression;
      cfg.batch_seed = seed_batch;
      return std::make_unique<RegressionTask>(cfg);
    }
    throw ConfigError("task.name", "unknown task \"" + task_name + "\"");
  }

  std::unique_ptr<Oracle> make_oracle() const {
    if (oracle_kind == "grammar") return std::make_unique<GrammarSamplerOracle>(oracle_seed);
    if (oracle_kind == "replay")
      return std::make_unique<ReplayOracle>(replay_plans, replay_expressions, replay_hypotheses);
    if (oracle_kind == "llm") return std::make_unique<LlmOracle>(llm);
    throw ConfigError("oracle.kind", "unknown oracle \"" + oracle_kind + "\"");
  }

  EvolutionConfig evolution_config() const {
    EvolutionConfig cfg;
    cfg.steps = steps;
    cfg.path_budget = path_budget;
    cfg.master_seed = seed_master;
    cfg.sampler_seed = seed_sampler;
    cfg.retain_unreachable = retain_unreachable;
    cfg.cache_capacity = static_cast<size_t>(cache_capacity);
    cfg.importance_sigma_rel = importance_sigma_rel;
    cfg.importance_samples = importance_samples;
    cfg.oracle_retry_budget = oracle_retry_budget;
    return cfg;
  }

  Lattice initial_lattice(const Task& task) const {
    if (!initial_snapshot.empty()) {
      std::ifstream in(initial_snapshot, std::ios::binary);
      if (!in) throw ConfigError("initial_snapshot", "cannot read " + initial_snapshot);
      std::ostringstream buf;
      buf << in.rdbuf();
      Lattice l = deserialize_snapshot(buf.str(), task.input_names());
      auto violations = validate(l, {retain_unreachable});
      if (!violations.empty())
        throw ConfigError("initial_snapshot", "snapshot violates \"" + violations[0].invariant +
                                                  "\" at node \"" + violations[0].node + "\"");
      return l;
    }
    Lattice l;
    l.task_inputs = task.input_names();
    Node output;
    output.name = kOutputNode;
    output.alternatives.push_back(Alternative::make("output_0", task.default_seed_source(), 0));
    l.nodes.push_back(std::move(output));
    return l;
  }
};

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  auto get = [&](const nlohmann::json& obj, const char* key, auto& out, const char* field) {
    if (!obj.contains(key)) return;
    try {
      out = obj[key].get<std::decay_t<decltype(out)>>();
    } catch (const std::exception&) {
      throw ConfigError(field, "wrong type");
    }
  };

  get(j, "engine", c.engine, "engine");
  if (c.engine != "evolattice" && c.engine != "baseline_regenerate" && c.engine != "baseline_diff")
    throw ConfigError("engine", "unknown engine \"" + c.engine + "\"");

  if (j.contains("task")) {
    const auto& t = j["task"];
    get(t, "name", c.task_name, "task.name");
    get(t, "phase_a_size", c.ranking.phase_a_size, "task.phase_a_size");
    get(t, "phase_b_size", c.ranking.phase_b_size, "task.phase_b_size");
    get(t, "rho_min", c.ranking.rho_min, "task.rho_min");
    get(t, "noise_scale", c.ranking.noise_scale, "task.noise_scale");
    if (t.contains("teacher_weights")) {
      const auto& w = t["teacher_weights"];
      if (!w.is_array() || w.size() != 3) throw ConfigError("task.teacher_weights", "need [w_loss, w_spec, w_cov]");
      c.ranking.w_loss = w[0].get<double>();
      c.ranking.w_spec = w[1].get<double>();
      c.ranking.w_cov = w[2].get<double>();
    }
    if (t.contains("dim")) {
      int dim = 0;
      get(t, "dim", dim, "task.dim");
      if (c.task_name == "regression") {
        c.regression.dim = dim;
      } else {
        c.optimizer.dim = dim;
      }
    }
    get(t, "probes", c.optimizer.probes, "task.probes");
    get(t, "lambda_align", c.optimizer.lambda_align, "task.lambda_align");
    get(t, "lambda_sharp", c.optimizer.lambda_sharp, "task.lambda_sharp");
    get(t, "epsilon", c.optimizer.epsilon, "task.epsilon");
    get(t, "perturb_amplitude", c.optimizer.perturb_amplitude, "task.perturb_amplitude");
    get(t, "sharp_directions", c.optimizer.sharp_directions, "task.sharp_directions");
    get(t, "samples", c.regression.samples, "task.samples");
  }
  if (c.task_name != "ranking" && c.task_name != "optimizer" && c.task_name != "regression")
    throw ConfigError("task.name", "unknown task \"" + c.task_name + "\"");

  if (j.contains("oracle")) {
    const auto& o = j["oracle"];
    get(o, "kind", c.oracle_kind, "oracle.kind");
    get(o, "seed", c.oracle_seed, "oracle.seed");
    get(o, "endpoint", c.llm.endpoint, "oracle.endpoint");
    get(o, "model", c.llm.model, "oracle.model");
    get(o, "hypothesis_temperature", c.llm.hypothesis_temperature, "oracle.hypothesis_temperature");
    get(o, "mutation_temperature", c.llm.mutation_temperature, "oracle.mutation_temperature");
    get(o, "max_output_tokens", c.llm.max_output_tokens, "oracle.max_output_tokens");
    get(o, "timeout_seconds", c.llm.timeout_seconds, "oracle.timeout_seconds");
    if (o.contains("plans")) {
      if (!o["plans"].is_array()) throw ConfigError("oracle.plans", "must be an array of plans");
      for (const auto& p : o["plans"]) {
        PlanParse parsed = parse_plan_json(p.dump());
        if (!parsed.plan.has_value()) throw ConfigError("oracle.plans", parsed.error);
        c.replay_plans.push_back(std::move(*parsed.plan));
      }
    }
    if (o.contains("expressions")) {
      if (!o["expressions"].is_array()) throw ConfigError("oracle.expressions", "must be an array");
      for (const auto& s : o["expressions"]) c.replay_expressions.push_back(s.get<std::string>());
    }
    if (o.contains("hypotheses")) {
      for (const auto& s : o["hypotheses"]) c.replay_hypotheses.push_back(s.get<std::string>());
    }
    if (c.llm.hypothesis_temperature < 0.0 || c.llm.hypothesis_temperature > 2.0 ||
        c.llm.mutation_temperature < 0.0 || c.llm.mutation_temperature > 2.0)
      throw ConfigError("oracle.temperature", "temperatures must lie in [0, 2]");
  }
  if (c.oracle_kind != "grammar" && c.oracle_kind != "replay" && c.oracle_kind != "llm")
    throw ConfigError("oracle.kind", "unknown oracle \"" + c.oracle_kind + "\"");

  get(j, "steps", c.steps, "steps");
  if (c.steps < 0) throw ConfigError("steps", "must be >= 0");
  get(j, "path_budget", c.path_budget, "path_budget");
  if (c.path_budget == 0) throw ConfigError("path_budget", "must be >= 1");
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    get(s, "master", c.seed_master, "seeds.master");
    get(s, "batch", c.seed_batch, "seeds.batch");
    get(s, "sampler", c.seed_sampler, "seeds.sampler");
  }
  get(j, "output_dir", c.output_dir, "output_dir");
  if (j.contains("flags")) {
    const auto& f = j["flags"];
    get(f, "retain_unreachable", c.retain_unreachable, "flags.retain_unreachable");
    get(f, "cache_capacity", c.cache_capacity, "flags.cache_capacity");
    get(f, "importance_sigma_rel", c.importance_sigma_rel, "flags.importance_sigma_rel");
    get(f, "importance_samples", c.importance_samples, "flags.importance_samples");
    get(f, "oracle_retry_budget", c.oracle_retry_budget, "flags.oracle_retry_budget");
  }
  get(j, "initial_snapshot", c.initial_snapshot, "initial_snapshot");
  return c;
}

inline nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["engine"] = engine;
  nlohmann::ordered_json t;
  t["name"] = task_name;
  if (task_name == "ranking") {
    t["phase_a_size"] = ranking.phase_a_size;
    t["phase_b_size"] = ranking.phase_b_size;
    t["rho_min"] = ranking.rho_min;
    t["teacher_weights"] = {ranking.w_loss, ranking.w_spec, ranking.w_cov};
    t["noise_scale"] = ranking.noise_scale;
  } else if (task_name == "optimizer") {
    t["dim"] = optimizer.dim;
    t["probes"] = optimizer.probes;
    t["lambda_align"] = optimizer.lambda_align;
    t["lambda_sharp"] = optimizer.lambda_sharp;
    t["epsilon"] = optimizer.epsilon;
    t["perturb_amplitude"] = optimizer.perturb_amplitude;
    t["sharp_directions"] = optimizer.sharp_directions;
  } else {
    t["dim"] = regression.dim;
    t["samples"] = regression.samples;
  }
  j["task"] = std::move(t);

  nlohmann::ordered_json o;
  o["kind"] = oracle_kind;
  if (oracle_kind == "grammar") o["seed"] = oracle_seed;
  if (oracle_kind == "replay") {
    nlohmann::ordered_json plans = nlohmann::ordered_json::array();
    for (const auto& p : replay_plans) plans.push_back(plan_to_json(p));
    o["plans"] = std::move(plans);
    o["expressions"] = replay_expressions;
    o["hypotheses"] = replay_hypotheses;
  }
  if (oracle_kind == "llm") {
    o["endpoint"] = llm.endpoint;
    o["model"] = llm.model;
    o["hypothesis_temperature"] = llm.hypothesis_temperature;
    o["mutation_temperature"] = llm.mutation_temperature;
    o["max_output_tokens"] = llm.max_output_tokens;
    o["timeout_seconds"] = llm.timeout_seconds;
  }
  j["oracle"] = std::move(o);

  j["steps"] = steps;
  j["path_budget"] = path_budget;
  j["seeds"] = {{"master", seed_master}, {"batch", seed_batch}, {"sampler", seed_sampler}};
  j["output_dir"] = output_dir;
  j["flags"] = {{"retain_unreachable", retain_unreachable},
                {"cache_capacity", cache_capacity},
                {"importance_sigma_rel", importance_sigma_rel},
                {"importance_samples", importance_samples},
                {"oracle_retry_budget", oracle_retry_budget}};
  j["initial_snapshot"] = initial_snapshot;
  return j;
}

}  // namespace evolattice
