#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace evolattice {

// Structured edit list proposed by a mutation oracle. Edits apply in order;
// dependency adjustments are expressed as source replacement, since the
// dependency structure is induced by lambda parameters.
struct MutationEdit {
  enum class Kind { DeleteAlternative, AddAlternative, AddNode, ReplaceAlternative };
  Kind kind;
  std::string node;                  // target node (alternative edits)
  std::string name;                  // alternative name, or new node name for AddNode
  std::string source;                // expression text (add/replace)
  std::vector<std::string> sources;  // AddNode only, non-empty
};

struct MutationPlan {
  std::vector<MutationEdit> edits;

  bool empty() const { return edits.empty(); }
};

inline nlohmann::ordered_json plan_to_json(const MutationPlan& plan) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : plan.edits) {
    nlohmann::ordered_json obj;
    switch (e.kind) {
      case MutationEdit::Kind::DeleteAlternative:
        obj["op"] = "delete_alternative";
        obj["node"] = e.node;
        obj["name"] = e.name;
        break;
      case MutationEdit::Kind::AddAlternative:
        obj["op"] = "add_alternative";
        obj["node"] = e.node;
        if (!e.name.empty()) obj["name"] = e.name;
        obj["source"] = e.source;
        break;
      case MutationEdit::Kind::AddNode:
        obj["op"] = "add_node";
        obj["name"] = e.name;
        obj["sources"] = e.sources;
        break;
      case MutationEdit::Kind::ReplaceAlternative:
        obj["op"] = "replace_alternative";
        obj["node"] = e.node;
        obj["name"] = e.name;
        obj["source"] = e.source;
        break;
    }
    arr.push_back(std::move(obj));
  }
  return arr;
}

struct PlanParse {
  std::optional<MutationPlan> plan;
  std::string error;
};

inline PlanParse parse_plan_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) return {std::nullopt, "not valid JSON"};
  if (!doc.is_array()) return {std::nullopt, "plan must be a JSON array of edit objects"};
  MutationPlan plan;
  for (const auto& item : doc) {
    if (!item.is_object()) return {std::nullopt, "plan entries must be objects"};
    std::string op = item.value("op", "");
    MutationEdit e;
    auto str = [&](const char* key) { return item.contains(key) && item[key].is_string()
                                          ? item[key].get<std::string>() : std::string(); };
    if (op == "delete_alternative") {
      e.kind = MutationEdit::Kind::DeleteAlternative;
      e.node = str("node");
      e.name = str("name");
      if (e.node.empty() || e.name.empty())
        return {std::nullopt, "delete_alternative requires node and name"};
    } else if (op == "add_alternative") {
      e.kind = MutationEdit::Kind::AddAlternative;
      e.node = str("node");
      e.name = str("name");
      e.source = str("source");
      if (e.node.empty() || e.source.empty())
        return {std::nullopt, "add_alternative requires node and source"};
    } else if (op == "add_node") {
      e.kind = MutationEdit::Kind::AddNode;
      e.name = str("name");
      if (e.name.empty()) return {std::nullopt, "add_node requires name"};
      if (!item.contains("sources") || !item["sources"].is_array() || item["sources"].empty())
        return {std::nullopt, "add_node requires a non-empty sources array"};
      for (const auto& s : item["sources"]) {
        if (!s.is_string()) return {std::nullopt, "add_node sources must be strings"};
        e.sources.push_back(s.get<std::string>());
      }
    } else if (op == "replace_alternative") {
      e.kind = MutationEdit::Kind::ReplaceAlternative;
      e.node = str("node");
      e.name = str("name");
      e.source = str("source");
      if (e.node.empty() || e.name.empty() || e.source.empty())
        return {std::nullopt, "replace_alternative requires node, name, and source"};
    } else {
      return {std::nullopt, "unknown op \"" + op + "\""};
    }
    plan.edits.push_back(std::move(e));
  }
  return {plan, {}};
}

// Fenced code blocks (``` ... ```), tolerating a language tag and prose
// around them.
inline std::vector<std::string> extract_fenced_blocks(const std::string& text) {
  std::vector<std::string> blocks;
  size_t pos = 0;
  while (true) {
    size_t open = text.find("```", pos);
    if (open == std::string::npos) return blocks;
    size_t body_start = text.find('\n', open + 3);
    if (body_start == std::string::npos) return blocks;
    ++body_start;
    size_t close = text.find("```", body_start);
    if (close == std::string::npos) return blocks;
    blocks.push_back(text.substr(body_start, close - body_start));
    pos = close + 3;
  }
}

// Extracts the mutation plan from a raw oracle reply: the first fenced block
// that parses as an edit array wins. A bare JSON array with no fence is also
// accepted.
inline PlanParse parse_plan_reply(const std::string& raw) {
  std::string last_error = "no fenced plan block found";
  for (const auto& block : extract_fenced_blocks(raw)) {
    PlanParse p = parse_plan_json(block);
    if (p.plan.has_value()) return p;
    last_error = p.error;
  }
  std::string trimmed = raw;
  size_t b = trimmed.find_first_not_of(" \t\r\n");
  size_t e = trimmed.find_last_not_of(" \t\r\n");
  if (b != std::string::npos && trimmed[b] == '[') {
    PlanParse p = parse_plan_json(trimmed.substr(b, e - b + 1));
    if (p.plan.has_value()) return p;
    last_error = p.error;
  }
  return {std::nullopt, last_error};
}

inline std::string render_plan_reply(const MutationPlan& plan) {
  return "```json\n" + plan_to_json(plan).dump(2) + "\n```\n";
}

// Baseline replies carry one lambda expression in a fenced block.
inline std::optional<std::string> parse_expression_reply(const std::string& raw) {
  for (const auto& block : extract_fenced_blocks(raw)) {
    size_t at = block.find("lambda");
    if (at == std::string::npos) continue;
    std::string body = block.substr(at);
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r' || body.back() == ' '))
      body.pop_back();
    if (!body.empty()) return body;
  }
  size_t at = raw.find("lambda");
  if (at != std::string::npos) {
    std::string body = raw.substr(at);
    size_t eol = body.find('\n');
    if (eol != std::string::npos) body = body.substr(0, eol);
    while (!body.empty() && (body.back() == '\r' || body.back() == ' ')) body.pop_back();
    if (!body.empty()) return body;
  }
  return std::nullopt;
}

inline std::string render_expression_reply(const std::string& source) {
  return "```\n" + source + "\n```\n";
}

}  // namespace evolattice
