#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evolattice/analytics.hpp"
#include "evolattice/diff.hpp"
#include "evolattice/lattice.hpp"
#include "evolattice/plan.hpp"
#include "evolattice/rng.hpp"

namespace evolattice {

// ---------------------------------------------------------------------------
// Prompt bundles
// ---------------------------------------------------------------------------

struct PromptBundle {
  std::string system_prompt;  // constant across a run
  std::string user_prompt;    // regenerated each step
  int step = 0;
};

using Hypotheses = std::vector<std::string>;

inline std::string lattice_system_prompt() {
  return
      "You evolve a lattice: a DAG of named nodes where each node holds several "
      "alternative expressions and every consistent choice of one alternative per "
      "reachable node is an executable candidate.\n"
      "Structural rules:\n"
      "- expressions are pure lambdas: `lambda p1, p2: <expr>` over +, -, *, /, **, and the "
      "builtins tanh, sigmoid, exp, log, log1p, sqrt, abs, sign, clamp, mean, var, std, sum, "
      "min, max, topk, normalize, softmax, entropy, pow, stack\n"
      "- a parameter must name another node or a declared task input; never reference the "
      "node `output` itself\n"
      "- the dependency graph must stay acyclic; invalid structure is repaired by deleting "
      "offending alternatives\n"
      "- identifiers match [a-z][a-z0-9_]*\n"
      "Reply with a single fenced ```json block containing an array of edit objects:\n"
      "  {\"op\":\"add_alternative\",\"node\":N,\"source\":S[,\"name\":A]}\n"
      "  {\"op\":\"delete_alternative\",\"node\":N,\"name\":A}\n"
      "  {\"op\":\"replace_alternative\",\"node\":N,\"name\":A,\"source\":S}\n"
      "  {\"op\":\"add_node\",\"name\":N,\"sources\":[S,...]}\n"
      "Prefer small, targeted edits that keep strong alternatives intact.\n";
}

inline std::string hypothesis_system_prompt() {
  return
      "You analyze the statistics of an evolving lattice of expression alternatives. "
      "Propose short, concrete hypotheses about which alternatives to refine, combine, or "
      "prune, grounded in the per-alternative mean/std/max statistics and node importance. "
      "Reply with a numbered list, one hypothesis per line.\n";
}

inline std::string baseline_system_prompt() {
  return
      "You write one candidate expression for a scoring task. Expressions are pure lambdas "
      "`lambda p1, p2: <expr>` over +, -, *, /, ** and the builtins tanh, sigmoid, exp, log, "
      "log1p, sqrt, abs, sign, clamp, mean, var, std, sum, min, max, topk, normalize, softmax, "
      "entropy, pow, stack. Parameters must be declared task inputs.\n"
      "Reply with a single fenced code block containing exactly one lambda.\n";
}

struct BundleInputs {
  std::string snapshot;  // serialization of the current lattice with stats
  std::vector<std::pair<std::string, std::string>> input_kinds;
  std::string output_kind;
  std::string importance_text;
  Hypotheses hypotheses;
  std::string previous_diff;
  std::string task_summary;
  int step = 0;
};

inline std::string render_importance(const ImportanceTable& table) {
  std::ostringstream out;
  for (const auto& [node, e] : table.entries) {
    out << node << ": ";
    if (e.failed) {
      out << "failed";
    } else {
      out << e.importance;
    }
    out << " (sigma_rel=" << e.sigma_rel << ", samples=" << e.samples << ")\n";
  }
  return out.str();
}

inline PromptBundle make_mutation_bundle(const BundleInputs& in) {
  PromptBundle bundle;
  bundle.step = in.step;
  bundle.system_prompt = lattice_system_prompt();
  std::ostringstream u;
  u << "## step\n" << in.step << "\n";
  u << "## snapshot\n" << in.snapshot;
  if (!in.snapshot.empty() && in.snapshot.back() != '\n') u << "\n";
  u << "## inputs\n";
  for (size_t i = 0; i < in.input_kinds.size(); ++i)
    u << (i ? ", " : "") << in.input_kinds[i].first << ":" << in.input_kinds[i].second;
  u << "\n## output_kind\n" << in.output_kind << "\n";
  u << "## importance\n" << (in.importance_text.empty() ? "(none)\n" : in.importance_text);
  u << "## hypotheses\n";
  if (in.hypotheses.empty()) u << "(none)\n";
  for (size_t i = 0; i < in.hypotheses.size(); ++i)
    u << (i + 1) << ". " << in.hypotheses[i] << "\n";
  u << "## previous_diff\n" << (in.previous_diff.empty() ? "(none)\n" : in.previous_diff);
  if (!in.previous_diff.empty() && in.previous_diff.back() != '\n') u << "\n";
  u << "## task\n" << in.task_summary << "\n";
  bundle.user_prompt = u.str();
  return bundle;
}

inline PromptBundle make_hypothesis_bundle(const BundleInputs& in) {
  PromptBundle bundle = make_mutation_bundle(in);
  bundle.system_prompt = hypothesis_system_prompt();
  return bundle;
}

inline PromptBundle make_baseline_bundle(const std::string& mode, const std::string& current,
                                         double current_score,
                                         const std::vector<std::pair<std::string, std::string>>& inputs,
                                         const std::string& output_kind,
                                         const std::string& task_summary, int step) {
  PromptBundle bundle;
  bundle.step = step;
  bundle.system_prompt = baseline_system_prompt();
  std::ostringstream u;
  u << "## step\n" << step << "\n";
  u << "## mode\n" << mode << "\n";
  u << "## current\n" << current << "\n";
  u << "## current_score\n" << current_score << "\n";
  u << "## inputs\n";
  for (size_t i = 0; i < inputs.size(); ++i)
    u << (i ? ", " : "") << inputs[i].first << ":" << inputs[i].second;
  u << "\n## output_kind\n" << output_kind << "\n";
  u << "## task\n" << task_summary << "\n";
  if (mode == "diff") {
    u << "Edit the current expression; keep what works and change one thing.\n";
  } else {
    u << "Propose a complete replacement expression.\n";
  }
  bundle.user_prompt = u.str();
  return bundle;
}

// Section extraction for scripted oracles (they see the same prompt the LLM sees).
inline std::string extract_section(const std::string& prompt, const std::string& heading) {
  std::string marker = "## " + heading + "\n";
  size_t at = prompt.find(marker);
  if (at == std::string::npos) return "";
  size_t start = at + marker.size();
  size_t end = prompt.find("\n## ", start);
  if (end == std::string::npos) return prompt.substr(start);
  return prompt.substr(start, end - start + 1);
}

inline Hypotheses parse_hypothesis_reply(const std::string& raw) {
  Hypotheses out;
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    size_t i = line.find_first_not_of(" \t");
    if (i == std::string::npos) continue;
    std::string_view rest(line.c_str() + i, line.size() - i);
    size_t digits = 0;
    while (digits < rest.size() && std::isdigit(static_cast<unsigned char>(rest[digits]))) ++digits;
    if (digits > 0 && digits < rest.size() && (rest[digits] == '.' || rest[digits] == ')')) {
      rest.remove_prefix(digits + 1);
    } else if (!rest.empty() && (rest[0] == '-' || rest[0] == '*')) {
      rest.remove_prefix(1);
    } else {
      continue;
    }
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
    if (!rest.empty()) out.emplace_back(rest);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle interface
// ---------------------------------------------------------------------------

// Oracles return raw reply text; the loop persists it as a transcript and
// parses it through the shared plan/expression grammar. Replaying transcripts
// therefore reproduces a run exactly.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::string hypothesis_reply(const PromptBundle& bundle) = 0;
  virtual std::string mutation_reply(const PromptBundle& bundle, int attempt) = 0;
  virtual std::string expression_reply(const PromptBundle& bundle, int attempt) = 0;
};

// ---------------------------------------------------------------------------
// Scripted oracles
// ---------------------------------------------------------------------------

// Replays a fixed list of plans (or expressions); empty after exhaustion.
class ReplayOracle : public Oracle {
 public:
  explicit ReplayOracle(std::vector<MutationPlan> plans, std::vector<std::string> expressions = {},
                        Hypotheses hypotheses = {})
      : plans_(std::move(plans)),
        expressions_(std::move(expressions)),
        hypotheses_(std::move(hypotheses)) {}

  std::string hypothesis_reply(const PromptBundle&) override {
    std::string out;
    for (size_t i = 0; i < hypotheses_.size(); ++i)
      out += std::to_string(i + 1) + ". " + hypotheses_[i] + "\n";
    return out;
  }

  std::string mutation_reply(const PromptBundle& bundle, int) override {
    size_t idx = static_cast<size_t>(bundle.step) - 1;
    if (idx >= plans_.size()) return render_plan_reply(MutationPlan{});
    return render_plan_reply(plans_[idx]);
  }

  std::string expression_reply(const PromptBundle& bundle, int) override {
    size_t idx = static_cast<size_t>(bundle.step) - 1;
    if (idx >= expressions_.size()) return "";
    return render_expression_reply(expressions_[idx]);
  }

 private:
  std::vector<MutationPlan> plans_;
  std::vector<std::string> expressions_;
  Hypotheses hypotheses_;
};

// A replayed run is missing a required transcript file. Unlike ordinary
// oracle failures this aborts the run: the recording is incomplete.
struct MissingTranscript : std::runtime_error {
  explicit MissingTranscript(const std::string& path)
      : std::runtime_error("missing transcript: " + path) {}
};

// Replays persisted transcripts from a completed run directory.
class TranscriptOracle : public Oracle {
 public:
  explicit TranscriptOracle(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::string hypothesis_reply(const PromptBundle& bundle) override {
    return read(bundle.step, "hypo", false);
  }
  std::string mutation_reply(const PromptBundle& bundle, int attempt) override {
    if (attempt > 0) return "";  // recorded runs keep only the final accepted reply
    return read(bundle.step, "mut", true);
  }
  std::string expression_reply(const PromptBundle& bundle, int attempt) override {
    if (attempt > 0) return "";
    return read(bundle.step, "expr", true);
  }

 private:
  std::string read(int step, const char* kind, bool required) {
    char name[64];
    std::snprintf(name, sizeof(name), "step_%06d_%s.txt", step, kind);
    std::ifstream in(dir_ / name, std::ios::binary);
    if (!in) {
      if (required) throw MissingTranscript((dir_ / name).string());
      return "";
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Grammar sampler: random expression synthesis over the builtin vocabulary
// ---------------------------------------------------------------------------

struct ExprGenContext {
  std::vector<std::pair<std::string, std::string>> inputs;  // name -> scalar|vector
  std::vector<std::string> nodes;  // referencable nodes (never "output")
  std::string output_kind = "scalar";
};

namespace detail {

inline std::string signal_term(Rng& rng, const std::string& name, const std::string& kind);

class ExprGen {
 public:
  ExprGen(Rng& rng, const ExprGenContext& ctx) : rng_(rng), ctx_(ctx) {
    for (const auto& [name, kind] : ctx.inputs)
      (kind == "vector" ? vec_inputs_ : scalar_inputs_).push_back(name);
  }

  // Returns a full lambda source; `want_vector` forces a vector-typed body.
  std::string lambda_source(bool want_vector) {
    used_.clear();
    std::string body;
    if (want_vector && !vec_inputs_.empty()) {
      body = gen_vector(3);
    } else if (rng_.below(2) == 0 && ctx_.inputs.size() >= 2) {
      // Weighted blend of two distinct input signals.
      size_t a = rng_.below(ctx_.inputs.size());
      size_t b = rng_.below(ctx_.inputs.size() - 1);
      if (b >= a) ++b;
      static const char* weights[] = {"0.1", "0.2", "0.3", "0.5", "0.7"};
      body = "(" + signal_term(rng_, use(ctx_.inputs[a].first), ctx_.inputs[a].second) + ") + " +
             weights[rng_.below(5)] + " * (" +
             signal_term(rng_, use(ctx_.inputs[b].first), ctx_.inputs[b].second) + ")";
      if (rng_.below(3) == 0) body = "-(" + body + ")";
    } else {
      body = gen_scalar(3);
    }
    std::vector<std::string> params(used_.begin(), used_.end());
    std::string out = "lambda";
    for (size_t i = 0; i < params.size(); ++i) {
      out += i == 0 ? " " : ", ";
      out += params[i];
    }
    out += ": " + body;
    return out;
  }

 private:
  std::string literal() {
    static const char* pool[] = {"0.01", "0.1", "0.3", "0.5", "0.7", "1.0", "2.0", "3.0"};
    return pool[rng_.below(8)];
  }

  std::string scalar_leaf() {
    // Leaves: literals, scalar inputs, reduced vector inputs, reduced node refs.
    std::vector<std::function<std::string()>> options;
    options.push_back([this] { return literal(); });
    if (!scalar_inputs_.empty())
      options.push_back([this] { return use(scalar_inputs_[rng_.below(scalar_inputs_.size())]); });
    if (!vec_inputs_.empty())
      options.push_back([this] {
        static const char* reduce[] = {"mean", "sum", "std", "max", "min", "entropy"};
        return std::string(reduce[rng_.below(6)]) + "(" +
               use(vec_inputs_[rng_.below(vec_inputs_.size())]) + ")";
      });
    if (!vec_inputs_.empty())
      options.push_back([this] {
        return "mean(topk(" + use(vec_inputs_[rng_.below(vec_inputs_.size())]) + ", 3.0))";
      });
    if (!ctx_.nodes.empty())
      options.push_back([this] {
        // Node values may be scalar or vector; reductions make either usable.
        return "mean(" + use(ctx_.nodes[rng_.below(ctx_.nodes.size())]) + ")";
      });
    return options[rng_.below(options.size())]();
  }

  std::string gen_scalar(int depth) {
    if (depth <= 0 || rng_.below(4) == 0) return scalar_leaf();
    switch (rng_.below(6)) {
      case 0:
        return unary_safe(gen_scalar(depth - 1));
      case 1:
        return "(" + gen_scalar(depth - 1) + " + " + gen_scalar(depth - 1) + ")";
      case 2:
        return "(" + gen_scalar(depth - 1) + " - " + gen_scalar(depth - 1) + ")";
      case 3:
        return "(" + gen_scalar(depth - 1) + " * " + gen_scalar(depth - 1) + ")";
      case 4:
        // Division guarded against zero denominators.
        return "(" + gen_scalar(depth - 1) + " / (1.0 + abs(" + gen_scalar(depth - 1) + ")))";
      default:
        return scalar_leaf();
    }
  }

  std::string vector_leaf() {
    return use(vec_inputs_[rng_.below(vec_inputs_.size())]);
  }

  std::string gen_vector(int depth) {
    if (depth <= 0 || rng_.below(3) == 0) return vector_leaf();
    switch (rng_.below(5)) {
      case 0:
        return unary_safe(gen_vector(depth - 1));
      case 1:
        return "(" + gen_vector(depth - 1) + " * " + gen_scalar(depth - 1) + ")";
      case 2:
        return "(" + gen_vector(depth - 1) + " + " + gen_vector(depth - 1) + ")";
      case 3:
        return "(" + gen_vector(depth - 1) + " / (1.0 + abs(" + gen_vector(depth - 1) + ")))";
      default:
        return "sign(" + vector_leaf() + ")";
    }
  }

  std::string unary_safe(const std::string& inner) {
    switch (rng_.below(6)) {
      case 0: return "tanh(" + inner + ")";
      case 1: return "sigmoid(" + inner + ")";
      case 2: return "log1p(abs(" + inner + "))";
      case 3: return "sqrt(abs(" + inner + "))";
      case 4: return "abs(" + inner + ")";
      default: return "-(" + inner + ")";
    }
  }

  std::string use(const std::string& name) {
    used_.insert(name);
    return name;
  }

  Rng& rng_;
  const ExprGenContext& ctx_;
  std::vector<std::string> scalar_inputs_, vec_inputs_;
  std::set<std::string> used_;
};

}  // namespace detail

inline std::string generate_lambda_source(Rng& rng, const ExprGenContext& ctx, bool want_vector) {
  detail::ExprGen gen(rng, ctx);
  return gen.lambda_source(want_vector);
}

namespace detail {

// Splits a single-line lambda source into (params, body text).
inline std::pair<std::vector<std::string>, std::string> split_lambda(const std::string& source) {
  ParsedLambda parsed = parse_lambda(source);
  size_t colon = source.find(':');
  std::string body = source.substr(colon + 1);
  size_t b = body.find_first_not_of(' ');
  if (b != std::string::npos) body = body.substr(b);
  return {parsed.params, body};
}

// A small scalar signal over one input, typed by its kind.
inline std::string signal_term(Rng& rng, const std::string& name, const std::string& kind) {
  if (kind == "vector") {
    switch (rng.below(6)) {
      case 0: return "mean(" + name + ")";
      case 1: return "entropy(" + name + ")";
      case 2: return "tanh(mean(topk(" + name + ", 3.0)))";
      case 3: return "std(" + name + ")";
      case 4: return "mean(" + name + ") / (1.0 + std(" + name + "))";
      default: return "max(" + name + ")";
    }
  }
  switch (rng.below(6)) {
    case 0: return "sigmoid(log1p(abs(" + name + ")))";
    case 1: return "tanh(" + name + ")";
    case 2: return "-(" + name + ")";
    case 3: return "sqrt(abs(" + name + "))";
    case 4: return "sigmoid(" + name + ")";
    default: return name;
  }
}

// Refines an existing lambda by blending in one more signal, preserving the
// incumbent body. Returns a full lambda source.
inline std::string extend_lambda(Rng& rng, const std::string& source, const ExprGenContext& ctx) {
  auto [params, body] = split_lambda(source);
  // Choose a signal source: a task input or (for scalar use) a lattice node.
  // Inputs the incumbent does not consume yet are preferred; blending in an
  // untapped signal is the move the statistics point at.
  std::string name, kind;
  std::vector<std::pair<std::string, std::string>> unused;
  for (const auto& in : ctx.inputs)
    if (std::find(params.begin(), params.end(), in.first) == params.end()) unused.push_back(in);
  if (!ctx.nodes.empty() && rng.below(4) == 0) {
    name = ctx.nodes[rng.below(ctx.nodes.size())];
    kind = "node";
  } else if (!unused.empty() && rng.below(4) != 0) {
    const auto& pick = unused[rng.below(unused.size())];
    name = pick.first;
    kind = pick.second;
  } else {
    const auto& pick = ctx.inputs[rng.below(ctx.inputs.size())];
    name = pick.first;
    kind = pick.second;
  }
  std::string term =
      kind == "node" ? "mean(" + name + ")" : signal_term(rng, name, kind);
  static const char* weights[] = {"0.05", "0.1", "0.2", "0.3", "0.5"};
  std::string c = weights[rng.below(5)];
  std::string combined;
  switch (rng.below(4)) {
    case 0: combined = "(" + body + ") + " + c + " * " + term; break;
    case 1: combined = "(" + body + ") - " + c + " * " + term; break;
    case 2: combined = "(" + body + ") * (1.0 + " + c + " * " + term + ")"; break;
    default: combined = "(" + body + ") * sigmoid(" + term + ")"; break;
  }
  if (std::find(params.begin(), params.end(), name) == params.end()) params.push_back(name);
  std::string out = "lambda";
  for (size_t i = 0; i < params.size(); ++i) {
    out += i == 0 ? " " : ", ";
    out += params[i];
  }
  return out + ": " + combined;
}

}  // namespace detail

// Deterministic offline oracle: synthesizes bounded-depth expressions over
// the task inputs and existing nodes, driven entirely by (seed, step). It
// consumes the same prompt the LLM would see, steering refinements toward
// alternatives with strong statistics.
class GrammarSamplerOracle : public Oracle {
 public:
  explicit GrammarSamplerOracle(uint64_t seed) : seed_(seed) {}

  std::string hypothesis_reply(const PromptBundle&) override { return ""; }

  std::string mutation_reply(const PromptBundle& bundle, int attempt) override {
    Rng rng(Rng::derive(Rng::derive(seed_, static_cast<uint64_t>(bundle.step)),
                        static_cast<uint64_t>(attempt)));
    ExprGenContext ctx = context_from(bundle);
    Lattice lattice;
    try {
      std::vector<std::string> input_names;
      for (const auto& [n, k] : ctx.inputs) input_names.push_back(n);
      lattice = deserialize_snapshot(extract_section(bundle.user_prompt, "snapshot"), input_names);
    } catch (const std::exception&) {
      return render_plan_reply(MutationPlan{});
    }
    for (const auto& n : lattice.nodes)
      if (n.name != kOutputNode) ctx.nodes.push_back(n.name);

    MutationPlan plan;
    bool vector_output = ctx.output_kind == "vector";

    // Pure deletions can never pass the strict-improvement gate, so pruning
    // rides along with additions: crowded nodes drop their weakest
    // alternative in the same plan. This keeps the path count near the
    // evaluation budget, where improvements stay visible to sampling.
    std::map<std::string, int> pending_adds;
    auto prune_if_crowded = [&](const std::string& node_name) {
      const Node* node = lattice.find(node_name);
      if (node == nullptr) return;
      if (node->alternatives.size() + static_cast<size_t>(pending_adds[node_name]) < 4) return;
      std::string victim = weakest_name(*node, rng);
      for (const auto& e : plan.edits)
        if (e.kind == MutationEdit::Kind::DeleteAlternative && e.node == node_name &&
            e.name == victim)
          return;  // already pruned in this plan
      MutationEdit del;
      del.kind = MutationEdit::Kind::DeleteAlternative;
      del.node = node_name;
      del.name = victim;
      plan.edits.push_back(std::move(del));
    };

    auto extend_edit = [&](const std::string& node_name) {
      const Alternative* best = strongest(lattice.find(node_name));
      if (best == nullptr) return;
      prune_if_crowded(node_name);
      MutationEdit e;
      e.kind = MutationEdit::Kind::AddAlternative;
      e.node = node_name;
      e.source = detail::extend_lambda(rng, best->source, ctx);
      plan.edits.push_back(std::move(e));
      ++pending_adds[node_name];
    };

    auto fresh_edit = [&](const std::string& node_name) {
      prune_if_crowded(node_name);
      MutationEdit e;
      e.kind = MutationEdit::Kind::AddAlternative;
      e.node = node_name;
      e.source = generate_lambda_source(rng, ctx, vector_output && node_name == kOutputNode);
      plan.edits.push_back(std::move(e));
      ++pending_adds[node_name];
    };

    size_t non_output_nodes = lattice.nodes.size() - 1;

    // A plan is a small batch of compositional edits: the lattice hosts them
    // side by side, and the joint path evaluation sorts out what helps.
    uint64_t roll = rng.below(100);
    if (roll < 70) {
      extend_edit(pick_node(rng, lattice));
      if (rng.below(5) < 3) extend_edit(pick_node(rng, lattice));
      if (rng.below(4) == 0) fresh_edit(pick_node(rng, lattice));
    } else if (roll < 82 && non_output_nodes < 5) {
      // New node plus an output alternative that actually uses it.
      std::string name = "gen" + std::to_string(bundle.step);
      if (lattice.find(name) != nullptr) name += "b";
      MutationEdit node_edit;
      node_edit.kind = MutationEdit::Kind::AddNode;
      node_edit.name = name;
      size_t count = 1 + rng.below(2);
      for (size_t i = 0; i < count; ++i)
        node_edit.sources.push_back(generate_lambda_source(rng, ctx, false));
      plan.edits.push_back(std::move(node_edit));

      prune_if_crowded(kOutputNode);
      MutationEdit use_edit;
      use_edit.kind = MutationEdit::Kind::AddAlternative;
      use_edit.node = kOutputNode;
      if (vector_output) {
        std::string vec_leaf = ctx.inputs.front().first;
        for (const auto& [n, k] : ctx.inputs)
          if (k == "vector") vec_leaf = n;
        use_edit.source = "lambda " + name + ", " + vec_leaf + ": mean(" + name + ") * " +
                          (rng.below(2) ? "sign(" + vec_leaf + ")" : vec_leaf);
      } else {
        // Blend the new node into the current best output alternative when
        // one exists; otherwise consume it directly.
        const Alternative* best = strongest(lattice.find(kOutputNode));
        if (best != nullptr && rng.below(3) != 0) {
          ExprGenContext only_new = ctx;
          only_new.nodes = {name};
          use_edit.source = detail::extend_lambda(rng, best->source, only_new);
        } else {
          use_edit.source = "lambda " + name + ": mean(" + name + ")";
        }
      }
      plan.edits.push_back(std::move(use_edit));
      ++pending_adds[kOutputNode];
    } else if (roll < 90) {
      fresh_edit(pick_node(rng, lattice));
      if (rng.below(3) == 0) extend_edit(kOutputNode);
    } else {
      // Replace a weak alternative outright; repair and the acceptance rule
      // guard against regressions.
      std::string node_name = pick_node(rng, lattice);
      const Node* node = lattice.find(node_name);
      if (node != nullptr && !node->alternatives.empty()) {
        MutationEdit e;
        e.kind = MutationEdit::Kind::ReplaceAlternative;
        e.node = node_name;
        e.name = weakest_name(*node, rng);
        e.source = generate_lambda_source(rng, ctx, vector_output && node_name == kOutputNode);
        plan.edits.push_back(std::move(e));
      }
      if (rng.below(2) == 0) extend_edit(kOutputNode);
    }
    return render_plan_reply(plan);
  }

  std::string expression_reply(const PromptBundle& bundle, int attempt) override {
    Rng rng(Rng::derive(Rng::derive(seed_, static_cast<uint64_t>(bundle.step)),
                        0xbadcafeULL + static_cast<uint64_t>(attempt)));
    ExprGenContext ctx = context_from(bundle);
    std::string mode = extract_section(bundle.user_prompt, "mode");
    std::string current = extract_section(bundle.user_prompt, "current");
    while (!current.empty() && (current.back() == '\n' || current.back() == ' '))
      current.pop_back();
    if (mode.find("diff") != std::string::npos && !current.empty() && rng.below(4) != 0) {
      try {
        return render_expression_reply(detail::extend_lambda(rng, current, ctx));
      } catch (const std::exception&) {
        // fall through to a fresh sample on an unparseable current candidate
      }
    }
    return render_expression_reply(
        generate_lambda_source(rng, ctx, ctx.output_kind == "vector"));
  }

 private:
  static ExprGenContext context_from(const PromptBundle& bundle) {
    ExprGenContext ctx;
    std::string inputs_line = extract_section(bundle.user_prompt, "inputs");
    std::istringstream in(inputs_line);
    std::string item;
    while (std::getline(in, item, ',')) {
      size_t colon = item.find(':');
      if (colon == std::string::npos) continue;
      auto trim = [](std::string s) {
        size_t b = s.find_first_not_of(" \t\r\n");
        size_t e = s.find_last_not_of(" \t\r\n");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      ctx.inputs.emplace_back(trim(item.substr(0, colon)), trim(item.substr(colon + 1)));
    }
    std::string kind = extract_section(bundle.user_prompt, "output_kind");
    ctx.output_kind = kind.find("vector") != std::string::npos ? "vector" : "scalar";
    return ctx;
  }

  static std::string pick_node(Rng& rng, const Lattice& lattice) {
    // Output-weighted: over half the edits land on the root.
    if (rng.below(5) < 3 || lattice.nodes.size() <= 1) return kOutputNode;
    std::vector<std::string> others;
    for (const auto& n : lattice.nodes)
      if (n.name != kOutputNode) others.push_back(n.name);
    return others[rng.below(others.size())];
  }

  // Best-case contribution ranks incumbents, matching the exposed statistics.
  static const Alternative* strongest(const Node* node) {
    if (node == nullptr || node->alternatives.empty()) return nullptr;
    const Alternative* best = &node->alternatives.back();
    for (const auto& alt : node->alternatives) {
      if (!alt.stats.has_value()) continue;
      if (!best->stats.has_value() || alt.stats->max > best->stats->max) best = &alt;
    }
    return best;
  }

  static std::string weakest_name(const Node& node, Rng& rng) {
    const Alternative* worst = nullptr;
    for (const auto& alt : node.alternatives) {
      if (!alt.stats.has_value()) continue;
      if (worst == nullptr || alt.stats->mean < worst->stats->mean) worst = &alt;
    }
    if (worst != nullptr) return worst->name;
    return node.alternatives[rng.below(node.alternatives.size())].name;
  }

  uint64_t seed_;
};

// ---------------------------------------------------------------------------
// LLM oracle (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

struct OracleConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1";
  std::string model = "gpt-oss-120b";
  double hypothesis_temperature = 0.5;
  double mutation_temperature = 0.0;
  int max_output_tokens = 65536;
  int retry_budget = 2;
  int timeout_seconds = 120;
  std::string api_key_env = "EVOLATTICE_API_KEY";
};

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class LlmOracle : public Oracle {
 public:
  explicit LlmOracle(OracleConfig cfg) : cfg_(std::move(cfg)) {}

  std::string hypothesis_reply(const PromptBundle& bundle) override {
    return chat(bundle, cfg_.hypothesis_temperature);
  }
  std::string mutation_reply(const PromptBundle& bundle, int) override {
    return chat(bundle, cfg_.mutation_temperature);
  }
  std::string expression_reply(const PromptBundle& bundle, int) override {
    return chat(bundle, cfg_.mutation_temperature);
  }

  const OracleConfig& config() const { return cfg_; }

 private:
  std::string chat(const PromptBundle& bundle, double temperature);

  OracleConfig cfg_;
};

}  // namespace evolattice

// The HTTP client is pulled in by a separate header so unit tests that never
// touch the network do not pay the httplib compile cost.
