#pragma once

// Code-based history search: decide whether a required read, or a declared
// equivalent, was already performed earlier in the trajectory, and rebuild
// the object it returned.

#include <optional>
#include <string>
#include <vector>

#include "nearmiss/eval.hpp"
#include "nearmiss/guard_spec.hpp"
#include "nearmiss/trace.hpp"
#include "nearmiss/value.hpp"

namespace nearmiss {

struct Evidence {
  std::size_t index = 0;  // tool_call event index
  std::string tool;

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

enum class ResolutionStatus { resolved, unresolved };

inline std::string_view to_string(ResolutionStatus s) { return s == ResolutionStatus::resolved ? "resolved" : "unresolved"; }

struct ResolutionResult {
  ResolutionStatus status = ResolutionStatus::unresolved;
  PartialObject object;
  std::vector<Evidence> evidence;
  std::vector<std::string> missing_fields;
  std::vector<std::string> diagnostics;

  // Audit trail for model-mediated resolution.
  std::string reasoning;
  std::vector<std::string> raw_responses;
  int attempts = 0;

  [[nodiscard]] bool resolved() const noexcept { return status == ResolutionStatus::resolved; }
};

struct ResolverOptions {
  // Drop evidence older than the last earlier mutating call that shares a binding value.
  bool strict_freshness = false;
};

/// True iff every (key, value) of `partial` appears identically in `actual`.
inline bool args_match(const ArgMap& actual, const ArgMap& partial) {
  for (auto it = partial.json().begin(); it != partial.json().end(); ++it) {
    const Json* v = actual.find(it.key());
    if (v == nullptr || !canonical_equal(*v, *it)) return false;
  }
  return true;
}

/// Every non-error call of `tool_name` whose arguments include `partial_args`, in trajectory order.
inline std::vector<CallResult> search_tool_calls(const History& history, std::string_view tool_name,
                                                 const ArgMap& partial_args) {
  std::vector<CallResult> out;
  for (const auto& pair : history) {
    if (pair.call->tool_name != tool_name || pair.is_error()) continue;
    if (args_match(pair.call->args, partial_args)) out.push_back(pair);
  }
  return out;
}

/// Applies the optional selector, then copies each mapped source path into its target.
/// Sources that are absent become null; values are never synthesized.
inline PartialObject map_fields(const Json& source, const std::map<std::string, std::string>& mapping,
                                const std::optional<ListSelector>& selector, const EvalEnv& env) {
  PartialObject out;
  const Json* item = &source;
  if (selector) {
    item = nullptr;
    const Json* list = find_path(source, selector->list_path);
    if (list != nullptr && !list->is_null() && !list->is_array()) {
      throw Error(ErrorCode::SelectorTypeError, "'" + selector->list_path + "' is not a list");
    }
    Evaluated key = eval_expression(*selector->key_expr, env);
    if (list != nullptr && list->is_array() && key) {
      std::size_t hits = 0;
      for (const auto& candidate : *list) {
        if (!candidate.is_object()) continue;
        auto field = candidate.find(selector->key_field);
        if (field == candidate.end()) continue;
        Evaluated v = from_json(*field);
        bool same = false;
        try {
          same = v && detail::equal_values(*v, *key);
        } catch (const Error&) {
          same = false;
        }
        if (same) {
          ++hits;
          item = &candidate;
        }
      }
      if (hits > 1) {
        throw Error(ErrorCode::SelectorAmbiguous,
                    std::to_string(hits) + " items of '" + selector->list_path + "' match the selector key");
      }
    }
  }
  for (const auto& [target, source_path] : mapping) {
    const Json* v = item == nullptr ? nullptr : find_path(*item, source_path);
    out.fields[target] = v == nullptr ? Json() : *v;
  }
  return out;
}

namespace detail {

inline std::map<std::string, std::string> effective_mapping(const ReadPattern& p, const ToolCatalog& catalog) {
  if (!p.mapping.empty()) return p.mapping;
  std::map<std::string, std::string> identity;
  if (const FieldSchema* schema = catalog.return_schema(p.tool)) {
    for (const auto& [path, _] : *schema) identity.emplace(path, path);
  }
  return identity;
}

// Evaluates bindings into call arguments; nullopt when any binding is Unresolved or ill-typed.
inline std::optional<ArgMap> bind_arguments(const ReadPattern& p, const EvalEnv& env, std::vector<std::string>& diags) {
  Json args = Json::object();
  for (const auto& [param, expr] : p.bindings) {
    Evaluated v;
    try {
      v = eval_expression(*expr, env);
    } catch (const Error& e) {
      diags.push_back(p.tool + "." + param + ": " + e.what());
      return std::nullopt;
    }
    if (!v) {
      diags.push_back("BindingUnresolved: " + p.tool + "." + param + " = " + print_expression(*expr));
      return std::nullopt;
    }
    args[param] = to_json(*v);
  }
  return canonicalize_args(args);
}

inline std::vector<CallResult> drop_stale(const std::vector<CallResult>& matches, const History& history,
                                          const ArgMap& bound, const ToolCatalog& catalog) {
  std::size_t cutoff = 0;
  for (const auto& pair : history) {
    const ToolSpec* spec = catalog.find(pair.call->tool_name);
    if (spec == nullptr || spec->kind != ToolKind::mutating) continue;
    bool shares = false;
    for (const auto& bound_value : bound.json()) {
      for (const auto& arg_value : pair.call->args.json()) {
        if (canonical_equal(bound_value, arg_value)) shares = true;
      }
    }
    if (shares) cutoff = std::max(cutoff, pair.call->index + 1);
  }
  std::vector<CallResult> out;
  for (const auto& m : matches) {
    if (m.call->index >= cutoff) out.push_back(m);
  }
  return out;
}

}  // namespace detail

/// Tries the canonical read, then each alternative. For each pattern only the most
/// recent matching result is consulted; the need resolves when every required field is populated.
inline ResolutionResult resolve_need(const InformationNeed& need, const History& history, const EvalEnv& env,
                                     const ToolCatalog& catalog, const ResolverOptions& options = {}) {
  ResolutionResult out;
  std::optional<PartialObject> last_attempt;
  for (const ReadPattern* pattern : need.patterns()) {
    auto bound = detail::bind_arguments(*pattern, env, out.diagnostics);
    if (!bound) continue;
    auto matches = search_tool_calls(history, pattern->tool, *bound);
    if (options.strict_freshness) matches = detail::drop_stale(matches, history, *bound, catalog);
    if (matches.empty()) continue;
    const CallResult& latest = matches.back();
    PartialObject obj;
    try {
      obj = map_fields(latest.result->value, detail::effective_mapping(*pattern, catalog), pattern->selector, env);
    } catch (const Error& e) {
      out.diagnostics.push_back(pattern->tool + " @" + std::to_string(latest.call->index) + ": " + e.what());
      continue;
    }
    std::vector<std::string> missing;
    for (const auto& f : need.required_fields) {
      if (!obj.has_value(f)) missing.push_back(f);
    }
    if (missing.empty()) {
      out.status = ResolutionStatus::resolved;
      out.object = std::move(obj);
      out.evidence = {{latest.call->index, latest.call->tool_name}};
      out.missing_fields.clear();
      return out;
    }
    last_attempt = std::move(obj);
    out.missing_fields = std::move(missing);
  }
  if (last_attempt) {
    out.object = std::move(*last_attempt);
  } else {
    out.missing_fields = need.required_fields;
  }
  return out;
}

}  // namespace nearmiss
