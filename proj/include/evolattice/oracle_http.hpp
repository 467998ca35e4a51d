#pragma once

// Defines LlmOracle::chat. Include this (not oracle.hpp alone) in binaries
// that talk to a live endpoint; it pulls in the HTTP client.

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "evolattice/oracle.hpp"

namespace evolattice {

namespace detail {

// Splits "http://host:port/base" into client target and base path.
inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  size_t scheme = endpoint.find("://");
  size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  size_t path_at = endpoint.find('/', host_start);
  if (path_at == std::string::npos) return {endpoint, ""};
  std::string base = endpoint.substr(path_at);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {endpoint.substr(0, path_at), base};
}

}  // namespace detail

inline std::string LlmOracle::chat(const PromptBundle& bundle, double temperature) {
  auto [host, base] = detail::split_endpoint(cfg_.endpoint);
  httplib::Client client(host);
  client.set_connection_timeout(cfg_.timeout_seconds, 0);
  client.set_read_timeout(cfg_.timeout_seconds, 0);
  client.set_write_timeout(cfg_.timeout_seconds, 0);

  httplib::Headers headers;
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (key != nullptr && key[0] != '\0')
    headers.emplace("Authorization", std::string("Bearer ") + key);

  nlohmann::json body = {
      {"model", cfg_.model},
      {"messages",
       {{{"role", "system"}, {"content", bundle.system_prompt}},
        {{"role", "user"}, {"content", bundle.user_prompt}}}},
      {"temperature", temperature},
      {"max_tokens", cfg_.max_output_tokens},
  };

  auto res = client.Post(base + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw TransportError("no response from " + cfg_.endpoint);
  if (res->status < 200 || res->status >= 300)
    throw TransportError("endpoint returned status " + std::to_string(res->status));
  nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty())
    throw TransportError("malformed chat completion response");
  const auto& msg = doc["choices"][0];
  if (msg.contains("message") && msg["message"].contains("content") &&
      msg["message"]["content"].is_string())
    return msg["message"]["content"].get<std::string>();
  throw TransportError("response carries no message content");
}

}  // namespace evolattice
