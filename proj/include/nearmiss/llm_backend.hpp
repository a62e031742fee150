#pragma once

// Model-mediated history search over a chat-completions endpoint.
//
// Requires cpp-httplib. Define CPPHTTPLIB_OPENSSL_SUPPORT before inclusion for https endpoints.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <semaphore>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "nearmiss/detector.hpp"
#include "nearmiss/error.hpp"
#include "nearmiss/resolution_prompt.hpp"
#include "nearmiss/resolver.hpp"
#include "nearmiss/trace.hpp"
#include "nearmiss/value.hpp"

namespace nearmiss {

struct LlmClientConfig {
  std::string endpoint;       // e.g. https://api.example.com/v1/chat/completions
  std::string model;
  std::string auth_env;       // name of the variable holding the bearer token; empty for none
  double timeout_seconds = 60;
  int max_retries = 3;
  int max_concurrent = 4;
  double temperature = 0;
  int initial_backoff_ms = 500;

  void validate() const {
    if (endpoint.empty()) throw Error(ErrorCode::InvalidConfig, "endpoint is required");
    if (model.empty()) throw Error(ErrorCode::InvalidConfig, "model is required");
    if (max_concurrent < 1) throw Error(ErrorCode::InvalidConfig, "max_concurrent must be >= 1");
    if (!(timeout_seconds > 0)) throw Error(ErrorCode::InvalidConfig, "timeout_seconds must be > 0");
    if (max_retries < 0) throw Error(ErrorCode::InvalidConfig, "max_retries must be >= 0");
    if (initial_backoff_ms < 0) throw Error(ErrorCode::InvalidConfig, "initial_backoff_ms must be >= 0");
  }
};

inline LlmClientConfig parse_llm_config_json(const Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "llm config must be an object");
  LlmClientConfig c;
  try {
    c.endpoint = doc.at("endpoint").get<std::string>();
    c.model = doc.at("model").get<std::string>();
    c.auth_env = doc.value("auth_env", c.auth_env);
    c.timeout_seconds = doc.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = doc.value("max_retries", c.max_retries);
    c.max_concurrent = doc.value("max_concurrent", c.max_concurrent);
    c.temperature = doc.value("temperature", c.temperature);
    c.initial_backoff_ms = doc.value("initial_backoff_ms", c.initial_backoff_ms);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

inline LlmClientConfig load_llm_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_llm_config_json(parse_json_text(ss.str(), ErrorCode::InvalidConfig));
}

struct PromptPayload {
  std::string system;
  std::string user;
};

namespace detail::llm {

inline std::string python_type(TypeTag tag) {
  switch (tag) {
    case TypeTag::string: return "str";
    case TypeTag::integer: return "int";
    case TypeTag::decimal: return "float";
    case TypeTag::boolean: return "bool";
    case TypeTag::timestamp: return "str  # ISO-8601 timestamp";
    case TypeTag::list: return "list";
    case TypeTag::object: return "dict";
  }
  return "object";
}

inline std::string render_call(const std::string& tool, const Json& args) {
  std::string out = tool + "(";
  bool first = true;
  for (auto it = args.begin(); it != args.end(); ++it) {
    if (!first) out += ", ";
    first = false;
    out += it.key() + "=" + canonical_dump(*it);
  }
  return out + ")";
}

// Completed, non-error read-only calls: the only admissible evidence.
inline History admissible(const History& history, const ToolCatalog& catalog) {
  History out;
  for (const auto& pair : history) {
    const ToolSpec* spec = catalog.find(pair.call->tool_name);
    if (spec == nullptr || spec->kind != ToolKind::read_only || pair.is_error()) continue;
    out.push_back(pair);
  }
  return out;
}

inline void collect_leaves(const Json& j, std::set<std::string>& out) {
  if (j.is_object() || j.is_array()) {
    for (const auto& v : j) collect_leaves(v, out);
  } else if (!j.is_null()) {
    out.insert(canonical_dump(j));
  }
}

inline bool all_leaves_in(const Json& j, const std::set<std::string>& pool) {
  if (j.is_object() || j.is_array()) {
    for (const auto& v : j)
      if (!all_leaves_in(v, pool)) return false;
    return true;
  }
  return j.is_null() || pool.count(canonical_dump(j)) > 0;
}

}  // namespace detail::llm

/// Renders the four prompt sections for one need. `required_args` are the bound canonical-read arguments.
inline PromptPayload build_resolution_prompt(const InformationNeed& need, const Json& required_args,
                                             const History& history, const ToolCatalog& catalog) {
  using namespace detail::llm;
  std::ostringstream u;
  u << "## 1. Data model\n\n";
  for (const auto& [name, schema] : catalog.schemas) {
    u << "class " << name << ":\n";
    for (const auto& [path, tag] : schema) u << "    " << path << ": " << python_type(tag) << "\n";
    u << "\n";
  }
  u << "## 2. Functions\n\n";
  for (const auto& [name, spec] : catalog.tools) {
    if (spec.kind != ToolKind::read_only) continue;
    u << "def " << name << "(";
    for (std::size_t i = 0; i < spec.params.size(); ++i) {
      if (i) u << ", ";
      u << spec.params[i].name << ": " << python_type(spec.params[i].type);
      if (!spec.params[i].required) u << " = None";
    }
    u << ") -> " << spec.return_schema << ": ...\n";
  }
  u << "\n## 3. Required tool call\n\n" << render_call(need.canonical_read.tool, required_args) << "\n";
  u << "Fields needed: ";
  for (std::size_t i = 0; i < need.required_fields.size(); ++i) u << (i ? ", " : "") << need.required_fields[i];
  u << "\n\n## 4. Previous tool calls\n\n";
  for (const auto& pair : admissible(history, catalog)) {
    u << "[#" << pair.call->index << "] " << render_call(pair.call->tool_name, pair.call->args.json()) << " -> "
      << canonical_dump(pair.result->value) << "\n";
  }
  return {std::string(kResolutionSystemPrompt), u.str()};
}

/// Accepts exactly one JSON object {reasoning, tool_call_result}; surrounding whitespace is tolerated.
inline ResolutionResult parse_llm_response(std::string_view text, const std::vector<std::string>& required_fields = {}) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos || text[first] != '{') {
    throw Error(ErrorCode::MalformedResponse, "response is not a bare JSON object");
  }
  Json doc;
  try {
    doc = parse_json_text(text, ErrorCode::MalformedResponse);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedResponse, e.what());
  }
  if (!doc.is_object() || doc.size() != 2 || !doc.contains("reasoning") || !doc.contains("tool_call_result")) {
    throw Error(ErrorCode::MalformedResponse, "expected exactly {reasoning, tool_call_result}");
  }
  const Json& reasoning = doc["reasoning"];
  const Json& result = doc["tool_call_result"];
  if (!reasoning.is_string()) throw Error(ErrorCode::MalformedResponse, "reasoning must be a string");
  if (!result.is_null() && !result.is_object()) {
    throw Error(ErrorCode::MalformedResponse, "tool_call_result must be an object or null");
  }
  ResolutionResult out;
  out.reasoning = reasoning.get<std::string>();
  out.object = PartialObject::from_json(result);
  for (const auto& f : required_fields) {
    if (!out.object.has_value(f)) out.missing_fields.push_back(f);
  }
  if (!result.is_null() && out.missing_fields.empty()) out.status = ResolutionStatus::resolved;
  return out;
}

/// Chat-completions client: bounded concurrency, retries with exponential backoff.
class LlmClient {
 public:
  explicit LlmClient(LlmClientConfig config)
      : config_((config.validate(), std::move(config))), slots_(config_.max_concurrent) {
    auto scheme = config_.endpoint.find("://");
    auto path_at = config_.endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    base_ = config_.endpoint.substr(0, path_at);
    path_ = path_at == std::string::npos ? "/v1/chat/completions" : config_.endpoint.substr(path_at);
  }

  [[nodiscard]] const LlmClientConfig& config() const { return config_; }

  struct Attempt {
    bool transport_ok = false;
    int status = 0;
    std::string body;
    std::string error;
  };

  /// One HTTP round trip; never throws for transport problems.
  Attempt send(const PromptPayload& prompt) {
    Json body = {{"model", config_.model},
                 {"temperature", config_.temperature},
                 {"messages", Json::array({{{"role", "system"}, {"content", prompt.system}},
                                           {{"role", "user"}, {"content", prompt.user}}})}};
    httplib::Headers headers;
    if (!config_.auth_env.empty()) {
      const char* token = std::getenv(config_.auth_env.c_str());
      if (token == nullptr || *token == '\0') {
        throw Error(ErrorCode::AuthMissing, "environment variable " + config_.auth_env + " is not set");
      }
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    SlotGuard guard(slots_);
    httplib::Client client(base_);
    auto secs = static_cast<time_t>(config_.timeout_seconds);
    auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    Attempt a;
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      a.error = httplib::to_string(res.error());
      return a;
    }
    a.transport_ok = true;
    a.status = res->status;
    a.body = res->body;
    return a;
  }

  /// choices[0].message.content
  static std::string extract_content(const std::string& body) {
    Json doc;
    try {
      doc = Json::parse(body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::MalformedResponse, std::string("bad completion envelope: ") + e.what());
    }
  }

  void backoff(int attempt) const {
    auto ms = static_cast<long long>(config_.initial_backoff_ms) << std::min(attempt, 10);
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }

 private:
  struct SlotGuard {
    explicit SlotGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
    std::counting_semaphore<>& sem;
  };

  LlmClientConfig config_;
  std::counting_semaphore<> slots_;
  std::string base_;
  std::string path_;
};

/// Prompt, send with retries, parse, then drop any field value not present in the prompt's history.
inline ResolutionResult llm_resolve(const InformationNeed& need, const History& history, const EvalEnv& env,
                                    const ToolCatalog& catalog, LlmClient& client) {
  using namespace detail::llm;
  std::vector<std::string> diags;
  auto bound = detail::bind_arguments(need.canonical_read, env, diags);
  if (!bound) {
    ResolutionResult out;
    out.missing_fields = need.required_fields;
    out.diagnostics = std::move(diags);
    return out;
  }
  PromptPayload prompt = build_resolution_prompt(need, bound->json(), history, catalog);
  const int max_attempts = 1 + client.config().max_retries;
  std::vector<std::string> raw;
  std::vector<std::string> failures;
  bool last_malformed = false;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) client.backoff(attempt - 2);
    auto a = client.send(prompt);
    if (!a.transport_ok) {
      failures.push_back("attempt " + std::to_string(attempt) + ": " + a.error);
      last_malformed = false;
      continue;
    }
    if (a.status == 429 || a.status >= 500) {
      failures.push_back("attempt " + std::to_string(attempt) + ": HTTP " + std::to_string(a.status));
      last_malformed = false;
      continue;
    }
    if (a.status < 200 || a.status >= 300) {
      throw Error(ErrorCode::Transport, "HTTP " + std::to_string(a.status) + " from " + client.config().endpoint);
    }
    raw.push_back(a.body);
    ResolutionResult out;
    try {
      out = parse_llm_response(LlmClient::extract_content(a.body), need.required_fields);
    } catch (const Error& e) {
      failures.push_back("attempt " + std::to_string(attempt) + ": " + e.what());
      last_malformed = true;
      continue;
    }

    // Provenance: every leaf of every field must occur in some admissible result.
    History pool_pairs = admissible(history, catalog);
    std::set<std::string> pool;
    for (const auto& pair : pool_pairs) collect_leaves(pair.result->value, pool);
    std::set<std::size_t> used;
    for (auto& [field, value] : out.object.fields) {
      if (value.is_null()) continue;
      if (!all_leaves_in(value, pool)) {
        out.diagnostics.push_back("Unsupported value dropped for '" + field + "': " + canonical_dump(value));
        value = Json();
        continue;
      }
      std::set<std::string> leaves;
      collect_leaves(value, leaves);
      for (auto it = pool_pairs.rbegin(); it != pool_pairs.rend(); ++it) {
        std::set<std::string> have;
        collect_leaves(it->result->value, have);
        if (std::any_of(leaves.begin(), leaves.end(), [&](const auto& l) { return have.count(l) > 0; })) {
          used.insert(it->call->index);
          break;
        }
      }
    }
    out.missing_fields.clear();
    for (const auto& f : need.required_fields) {
      if (!out.object.has_value(f)) out.missing_fields.push_back(f);
    }
    out.status = out.missing_fields.empty() && !out.object.fields.empty() ? ResolutionStatus::resolved
                                                                          : ResolutionStatus::unresolved;
    for (std::size_t idx : used) {
      for (const auto& pair : pool_pairs)
        if (pair.call->index == idx) out.evidence.push_back({idx, pair.call->tool_name});
    }
    out.diagnostics.insert(out.diagnostics.begin(), failures.begin(), failures.end());
    out.diagnostics.insert(out.diagnostics.begin(), diags.begin(), diags.end());
    out.raw_responses = std::move(raw);
    out.attempts = attempt;
    return out;
  }
  if (!last_malformed) {
    std::string detail;
    for (const auto& f : failures) detail += "; " + f;
    throw Error(ErrorCode::Transport, std::to_string(max_attempts) + " attempts failed" + detail);
  }
  ResolutionResult out;
  out.missing_fields = need.required_fields;
  out.diagnostics = std::move(failures);
  out.diagnostics.push_back("MalformedResponse: no parseable answer after " + std::to_string(max_attempts) +
                            " attempts");
  out.raw_responses = std::move(raw);
  out.attempts = max_attempts;
  return out;
}

class LlmBackend final : public ResolutionBackend {
 public:
  LlmBackend(const ToolCatalog& catalog, LlmClientConfig config) : catalog_(catalog), client_(std::move(config)) {}

  ResolutionResult resolve(const InformationNeed& need, const ArgMap&, const History& history,
                           const EvalEnv& env) override {
    return llm_resolve(need, history, env, catalog_, client_);
  }

  [[nodiscard]] std::string backend_id() const override { return "llm:" + client_.config().model; }

 private:
  const ToolCatalog& catalog_;
  LlmClient client_;
};

}  // namespace nearmiss
