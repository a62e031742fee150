#pragma once

// Tool catalog and trajectory ingestion.
//
// Trace file layout:
//   {"id": "...", "reference_time": "2024-05-15T12:00:00Z", "outcome_matches_gold": true,
//    "events": [
//      {"kind": "user_msg", "text": "..."},
//      {"kind": "tool_call", "call_id": "c1", "name": "get_reservation_details",
//       "arguments": {"reservation_id": "R1"}},
//      {"kind": "tool_result", "call_id": "c1", "value": {...}, "is_error": false}]}
//
// `arguments` may also be a JSON-encoded string (chat-completions convention).

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nearmiss/error.hpp"
#include "nearmiss/value.hpp"

namespace nearmiss {

enum class ToolKind { mutating, read_only };

inline std::string_view to_string(ToolKind kind) {
  return kind == ToolKind::mutating ? "mutating" : "read_only";
}

enum class TypeTag { string, integer, decimal, boolean, timestamp, list, object };

inline std::optional<TypeTag> parse_type_tag(std::string_view s) {
  if (s == "string") return TypeTag::string;
  if (s == "integer") return TypeTag::integer;
  if (s == "decimal") return TypeTag::decimal;
  if (s == "boolean") return TypeTag::boolean;
  if (s == "timestamp") return TypeTag::timestamp;
  if (s == "list") return TypeTag::list;
  if (s == "object") return TypeTag::object;
  return std::nullopt;
}

inline std::string_view to_string(TypeTag tag) {
  switch (tag) {
    case TypeTag::string: return "string";
    case TypeTag::integer: return "integer";
    case TypeTag::decimal: return "decimal";
    case TypeTag::boolean: return "boolean";
    case TypeTag::timestamp: return "timestamp";
    case TypeTag::list: return "list";
    case TypeTag::object: return "object";
  }
  return "?";
}

struct ParamSpec {
  std::string name;
  TypeTag type = TypeTag::string;
  bool required = true;
};

struct ToolSpec {
  std::string name;
  ToolKind kind = ToolKind::read_only;
  std::vector<ParamSpec> params;  // declaration order
  std::string return_schema;      // empty only for mutating tools without a declared result

  [[nodiscard]] const ParamSpec* param(std::string_view p) const {
    auto it = std::find_if(params.begin(), params.end(), [&](const ParamSpec& s) { return s.name == p; });
    return it == params.end() ? nullptr : &*it;
  }
};

/// Field path ("a" or "a.b") to type tag.
using FieldSchema = std::map<std::string, TypeTag>;

class ToolCatalog {
 public:
  std::map<std::string, ToolSpec> tools;
  std::map<std::string, FieldSchema> schemas;

  [[nodiscard]] const ToolSpec* find(std::string_view name) const {
    auto it = tools.find(std::string(name));
    return it == tools.end() ? nullptr : &it->second;
  }

  [[nodiscard]] const FieldSchema* return_schema(std::string_view tool) const {
    const ToolSpec* spec = find(tool);
    if (spec == nullptr || spec->return_schema.empty()) return nullptr;
    auto it = schemas.find(spec->return_schema);
    return it == schemas.end() ? nullptr : &it->second;
  }
};

inline ToolCatalog parse_catalog_json(const Json& doc) {
  auto fail = [](const std::string& msg) -> void { throw Error(ErrorCode::MalformedCatalog, msg); };
  if (!doc.is_object()) fail("catalog must be an object");
  ToolCatalog catalog;

  auto schemas = doc.find("schemas");
  if (schemas != doc.end()) {
    if (!schemas->is_object()) fail("'schemas' must be an object");
    for (auto it = schemas->begin(); it != schemas->end(); ++it) {
      if (!it->is_object()) fail("schema '" + it.key() + "' must be an object");
      FieldSchema fields;
      for (auto f = it->begin(); f != it->end(); ++f) {
        auto tag = f->is_string() ? parse_type_tag(f->get<std::string>()) : std::nullopt;
        if (!tag) fail("schema '" + it.key() + "' field '" + f.key() + "' has no valid type tag");
        fields.emplace(f.key(), *tag);
      }
      catalog.schemas.emplace(it.key(), std::move(fields));
    }
  }

  auto tools = doc.find("tools");
  if (tools == doc.end() || !tools->is_array()) fail("'tools' must be an array");
  for (const auto& t : *tools) {
    if (!t.is_object() || !t.contains("name") || !t["name"].is_string()) fail("tool entry needs a string 'name'");
    ToolSpec spec;
    spec.name = t["name"].get<std::string>();
    std::string kind = t.value("kind", "");
    if (kind == "mutating") {
      spec.kind = ToolKind::mutating;
    } else if (kind == "read_only") {
      spec.kind = ToolKind::read_only;
    } else {
      fail("tool '" + spec.name + "' has invalid kind '" + kind + "'");
    }
    if (auto params = t.find("params"); params != t.end()) {
      if (!params->is_array()) fail("tool '" + spec.name + "' params must be an array");
      for (const auto& p : *params) {
        if (!p.is_object() || !p.contains("name") || !p["name"].is_string()) {
          fail("tool '" + spec.name + "' has a param without name");
        }
        ParamSpec param;
        param.name = p["name"].get<std::string>();
        auto tag = p.contains("type") && p["type"].is_string() ? parse_type_tag(p["type"].get<std::string>())
                                                                : std::nullopt;
        if (!tag) fail("param '" + spec.name + "." + param.name + "' has no valid type tag");
        param.type = *tag;
        param.required = p.value("required", true);
        if (spec.param(param.name) != nullptr) fail("duplicate param '" + spec.name + "." + param.name + "'");
        spec.params.push_back(std::move(param));
      }
    }
    if (auto ret = t.find("returns"); ret != t.end() && !ret->is_null()) {
      if (!ret->is_string()) fail("tool '" + spec.name + "' returns must name a schema");
      spec.return_schema = ret->get<std::string>();
      if (!catalog.schemas.contains(spec.return_schema)) {
        fail("tool '" + spec.name + "' returns undeclared schema '" + spec.return_schema + "'");
      }
    } else if (spec.kind == ToolKind::read_only) {
      fail("read-only tool '" + spec.name + "' must declare 'returns'");
    }
    if (catalog.tools.contains(spec.name)) fail("duplicate tool '" + spec.name + "'");
    catalog.tools.emplace(spec.name, std::move(spec));
  }
  return catalog;
}

inline ToolCatalog parse_catalog(std::string_view text) {
  return parse_catalog_json(parse_json_text(text, ErrorCode::MalformedCatalog));
}

inline Json catalog_to_json(const ToolCatalog& catalog) {
  Json tools = Json::array();
  for (const auto& [name, spec] : catalog.tools) {
    Json params = Json::array();
    for (const auto& p : spec.params) {
      params.push_back({{"name", p.name}, {"type", to_string(p.type)}, {"required", p.required}});
    }
    Json t = {{"name", name}, {"kind", to_string(spec.kind)}, {"params", params}};
    if (!spec.return_schema.empty()) t["returns"] = spec.return_schema;
    tools.push_back(std::move(t));
  }
  Json schemas = Json::object();
  for (const auto& [name, fields] : catalog.schemas) {
    Json f = Json::object();
    for (const auto& [path, tag] : fields) f[path] = to_string(tag);
    schemas[name] = std::move(f);
  }
  return {{"tools", tools}, {"schemas", schemas}};
}

/// Canonical argument object. Keys are sorted by construction.
class ArgMap {
 public:
  ArgMap() : entries_(Json::object()) {}

  [[nodiscard]] const Json& json() const noexcept { return entries_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

  [[nodiscard]] const Json* find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &*it;
  }

  friend bool operator==(const ArgMap& a, const ArgMap& b) { return canonical_equal(a.entries_, b.entries_); }

 private:
  friend ArgMap canonicalize_args(const Json& raw);
  Json entries_;
};

/// Sorted keys and canonical numbers. Idempotent.
inline ArgMap canonicalize_args(const Json& raw) {
  if (!raw.is_object()) throw Error(ErrorCode::NotAnObject, "arguments must be an object");
  ArgMap out;
  // Re-parsing the canonical text normalizes numbers the same way trace ingestion does.
  out.entries_ = Json::parse(canonical_dump(raw));
  return out;
}

enum class EventKind { user_msg, assistant_msg, tool_call, tool_result };

inline std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::user_msg: return "user_msg";
    case EventKind::assistant_msg: return "assistant_msg";
    case EventKind::tool_call: return "tool_call";
    case EventKind::tool_result: return "tool_result";
  }
  return "?";
}

struct Event {
  std::size_t index = 0;
  EventKind kind = EventKind::user_msg;
  std::string text;          // messages
  std::string call_id;       // tool_call, tool_result
  std::string tool_name;     // tool_call; copied onto the linked tool_result
  ArgMap args;               // tool_call
  Json value;                // tool_result
  bool is_error = false;     // tool_result
  std::optional<std::size_t> linked;  // call -> result index, result -> call index
};

struct Trajectory {
  std::string id;
  std::optional<Timestamp> reference_time;
  std::optional<bool> outcome_matches_gold;
  std::vector<Event> events;
};

namespace detail {

inline std::string require_string(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorCode::MalformedTrace, where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace detail

inline Trajectory parse_trajectory_json(const Json& doc, const ToolCatalog& catalog) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedTrace, "trace must be an object");
  Trajectory traj;
  traj.id = detail::require_string(doc, "id", "trace");
  if (auto rt = doc.find("reference_time"); rt != doc.end() && !rt->is_null()) {
    if (!rt->is_string()) throw Error(ErrorCode::MalformedTrace, "reference_time must be a string");
    traj.reference_time = parse_timestamp(rt->get<std::string>());
    if (!traj.reference_time) {
      throw Error(ErrorCode::MalformedTrace, "reference_time is not ISO-8601: " + rt->get<std::string>());
    }
  }
  if (auto og = doc.find("outcome_matches_gold"); og != doc.end() && !og->is_null()) {
    if (!og->is_boolean()) throw Error(ErrorCode::MalformedTrace, "outcome_matches_gold must be boolean");
    traj.outcome_matches_gold = og->get<bool>();
  }
  auto events = doc.find("events");
  if (events == doc.end() || !events->is_array()) {
    throw Error(ErrorCode::MalformedTrace, "'events' must be an array");
  }

  std::map<std::string, std::size_t> calls;
  for (const auto& raw : *events) {
    Event ev;
    ev.index = traj.events.size();
    std::string where = "events[" + std::to_string(ev.index) + "]";
    if (!raw.is_object()) throw Error(ErrorCode::MalformedTrace, where + " must be an object");
    if (auto idx = raw.find("index"); idx != raw.end()) {
      if (!idx->is_number_unsigned() || idx->get<std::size_t>() != ev.index) {
        throw Error(ErrorCode::MalformedTrace, where + ": index must be dense from 0");
      }
    }
    std::string kind = detail::require_string(raw, "kind", where);
    if (kind == "user_msg" || kind == "assistant_msg") {
      ev.kind = kind == "user_msg" ? EventKind::user_msg : EventKind::assistant_msg;
      ev.text = raw.value("text", "");
    } else if (kind == "tool_call") {
      ev.kind = EventKind::tool_call;
      ev.call_id = detail::require_string(raw, "call_id", where);
      ev.tool_name = detail::require_string(raw, "name", where);
      if (catalog.find(ev.tool_name) == nullptr) {
        throw Error(ErrorCode::UnknownTool, where + ": tool '" + ev.tool_name + "' is not in the catalog");
      }
      Json arguments = Json::object();
      if (auto a = raw.find("arguments"); a != raw.end() && !a->is_null()) {
        arguments = a->is_string() ? parse_json_text(a->get<std::string>()) : *a;
      }
      try {
        ev.args = canonicalize_args(arguments);
      } catch (const Error&) {
        throw Error(ErrorCode::MalformedTrace, where + ": arguments must be an object");
      }
      if (!calls.emplace(ev.call_id, ev.index).second) {
        throw Error(ErrorCode::MalformedTrace, where + ": duplicate call_id '" + ev.call_id + "'");
      }
    } else if (kind == "tool_result") {
      ev.kind = EventKind::tool_result;
      ev.call_id = detail::require_string(raw, "call_id", where);
      auto call = calls.find(ev.call_id);
      if (call == calls.end()) {
        throw Error(ErrorCode::DanglingResult, where + ": no earlier tool_call '" + ev.call_id + "'");
      }
      Event& call_event = traj.events[call->second];
      if (call_event.linked) {
        throw Error(ErrorCode::MalformedTrace, where + ": second result for call '" + ev.call_id + "'");
      }
      ev.value = raw.contains("value") ? raw["value"] : Json();
      if (auto err = raw.find("is_error"); err != raw.end()) {
        if (!err->is_boolean()) throw Error(ErrorCode::MalformedTrace, where + ": is_error must be boolean");
        ev.is_error = err->get<bool>();
      }
      ev.tool_name = call_event.tool_name;
      ev.linked = call_event.index;
      call_event.linked = ev.index;
    } else {
      throw Error(ErrorCode::MalformedTrace, where + ": unknown event kind '" + kind + "'");
    }
    traj.events.push_back(std::move(ev));
  }
  return traj;
}

inline Trajectory parse_trajectory(std::string_view raw_text, const ToolCatalog& catalog) {
  return parse_trajectory_json(parse_json_text(raw_text), catalog);
}

inline Json trajectory_to_json(const Trajectory& traj) {
  Json events = Json::array();
  for (const auto& ev : traj.events) {
    Json e = {{"kind", to_string(ev.kind)}};
    switch (ev.kind) {
      case EventKind::user_msg:
      case EventKind::assistant_msg:
        e["text"] = ev.text;
        break;
      case EventKind::tool_call:
        e["call_id"] = ev.call_id;
        e["name"] = ev.tool_name;
        e["arguments"] = ev.args.json();
        break;
      case EventKind::tool_result:
        e["call_id"] = ev.call_id;
        e["value"] = ev.value;
        e["is_error"] = ev.is_error;
        break;
    }
    events.push_back(std::move(e));
  }
  Json doc = {{"id", traj.id}, {"events", std::move(events)}};
  if (traj.reference_time) doc["reference_time"] = format_timestamp(*traj.reference_time);
  if (traj.outcome_matches_gold) doc["outcome_matches_gold"] = *traj.outcome_matches_gold;
  return doc;
}

inline std::string serialize_trajectory(const Trajectory& traj) { return canonical_dump(trajectory_to_json(traj)); }

inline bool operator==(const Event& a, const Event& b) {
  return a.index == b.index && a.kind == b.kind && a.text == b.text && a.call_id == b.call_id &&
         a.tool_name == b.tool_name && a.args == b.args && canonical_equal(a.value, b.value) &&
         a.is_error == b.is_error && a.linked == b.linked;
}

inline bool operator==(const Trajectory& a, const Trajectory& b) {
  return a.id == b.id && a.reference_time == b.reference_time &&
         a.outcome_matches_gold == b.outcome_matches_gold && a.events == b.events;
}

inline std::vector<std::pair<std::size_t, ToolKind>> classify_tool_calls(const Trajectory& traj,
                                                                         const ToolCatalog& catalog) {
  std::vector<std::pair<std::size_t, ToolKind>> out;
  for (const auto& ev : traj.events) {
    if (ev.kind != EventKind::tool_call) continue;
    const ToolSpec* spec = catalog.find(ev.tool_name);
    out.emplace_back(ev.index, spec != nullptr ? spec->kind : ToolKind::read_only);
  }
  return out;
}

/// A completed tool call: the call event and its result event.
struct CallResult {
  const Event* call = nullptr;
  const Event* result = nullptr;

  [[nodiscard]] bool is_error() const { return result->is_error; }
};

using History = std::vector<CallResult>;

/// Completed calls whose call and result both precede `before_index`, in trajectory order.
/// Error results are kept; consumers decide whether to use them.
inline History prior_tool_results(const Trajectory& traj, std::size_t before_index) {
  if (before_index > traj.events.size()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "index " + std::to_string(before_index) + " beyond " + std::to_string(traj.events.size()));
  }
  History out;
  for (std::size_t i = 0; i < before_index; ++i) {
    const Event& ev = traj.events[i];
    if (ev.kind != EventKind::tool_call || !ev.linked || *ev.linked >= before_index) continue;
    out.push_back({&ev, &traj.events[*ev.linked]});
  }
  return out;
}

}  // namespace nearmiss
