#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nearmiss/nearmiss.hpp"

namespace nmtest {

using namespace nearmiss;

inline const Fixture& fx() {
  static const Fixture f = load_airline_fixture();
  return f;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

#ifdef NEARMISS_DATA_DIR
inline std::string data_path(const std::string& rel) { return std::string(NEARMISS_DATA_DIR) + "/" + rel; }
#endif

inline Timestamp at(const char* iso) { return *parse_timestamp(iso); }

// Small builder for hand-written trajectories.
class TraceBuilder {
 public:
  explicit TraceBuilder(std::string id, std::optional<std::string> ref = "2024-05-15T12:00:00Z") {
    doc_ = {{"id", std::move(id)}, {"events", Json::array()}, {"outcome_matches_gold", true}};
    if (ref) doc_["reference_time"] = *ref;
  }
  TraceBuilder& user(const std::string& text) {
    doc_["events"].push_back({{"kind", "user_msg"}, {"text", text}});
    return *this;
  }
  TraceBuilder& say(const std::string& text) {
    doc_["events"].push_back({{"kind", "assistant_msg"}, {"text", text}});
    return *this;
  }
  TraceBuilder& call(const std::string& tool, const Json& args, const Json& result, bool is_error = false) {
    std::string id = "c" + std::to_string(n_++);
    doc_["events"].push_back({{"kind", "tool_call"}, {"call_id", id}, {"name", tool}, {"arguments", args}});
    doc_["events"].push_back({{"kind", "tool_result"}, {"call_id", id}, {"value", result}, {"is_error", is_error}});
    return *this;
  }
  TraceBuilder& outcome(std::optional<bool> ok) {
    if (ok) doc_["outcome_matches_gold"] = *ok;
    else doc_.erase("outcome_matches_gold");
    return *this;
  }
  [[nodiscard]] Json json() const { return doc_; }
  [[nodiscard]] Trajectory build(const ToolCatalog& catalog = fx().catalog) const {
    return parse_trajectory_json(doc_, catalog);
  }

 private:
  Json doc_;
  int n_ = 0;
};

inline Json reservation(const std::string& id, const std::string& created_at, const std::string& status = "confirmed") {
  return {{"reservation_id", id}, {"user_id", "mia_li_3668"}, {"flight_number", "HAT136"},
          {"date", "2024-05-20"},  {"origin", "JFK"},          {"destination", "SEA"},
          {"cabin", "economy"},    {"status", status},         {"created_at", created_at},
          {"payment_id", "credit_card_4421486"}};
}

// Trajectory surgery on the encoded form, re-parsed so links stay consistent.
inline Trajectory with_events(const Trajectory& t, const Json& events, const ToolCatalog& catalog = fx().catalog) {
  Json doc = trajectory_to_json(t);
  doc["events"] = events;
  return parse_trajectory_json(doc, catalog);
}

/// Removes the call at `call_index` and its result.
inline Trajectory remove_call(const Trajectory& t, std::size_t call_index) {
  Json src = trajectory_to_json(t)["events"];
  Json out = Json::array();
  std::size_t result = t.events[call_index].linked.value_or(call_index);
  for (std::size_t i = 0; i < src.size(); ++i)
    if (i != call_index && i != result) out.push_back(src[i]);
  return with_events(t, out);
}

/// Moves a call and its result to just after event `anchor`.
inline Trajectory move_call_after(const Trajectory& t, std::size_t call_index, std::size_t anchor) {
  Json src = trajectory_to_json(t)["events"];
  std::size_t result = *t.events[call_index].linked;
  Json out = Json::array();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (i != call_index && i != result) out.push_back(src[i]);
    if (i == anchor) {
      out.push_back(src[call_index]);
      out.push_back(src[result]);
    }
  }
  return with_events(t, out);
}

/// Keeps events [0, last].
inline Trajectory truncate_after(const Trajectory& t, std::size_t last) {
  Json src = trajectory_to_json(t)["events"];
  Json out = Json::array();
  for (std::size_t i = 0; i <= last && i < src.size(); ++i) out.push_back(src[i]);
  return with_events(t, out);
}

/// Replaces the call at `call_index` (and its result) with another read.
inline Trajectory replace_call(const Trajectory& t, std::size_t call_index, const std::string& tool, const Json& args,
                               const Json& value) {
  Json events = trajectory_to_json(t)["events"];
  std::size_t result = *t.events[call_index].linked;
  events[call_index]["name"] = tool;
  events[call_index]["arguments"] = args;
  events[result]["value"] = value;
  return with_events(t, events);
}

/// The read an alternative pattern would have made, derived from the canonical read it replaces.
/// Knows the airline fixture only.
inline std::pair<Json, Json> alternative_read(const std::string& tool, const Json& canonical_value, const Json& mtc_args) {
  if (tool == "get_reservation_timestamp") {
    return {{{"reservation_id", canonical_value["reservation_id"]}},
            {{"reservation_id", canonical_value["reservation_id"]}, {"timestamp", canonical_value["created_at"]}}};
  }
  if (tool == "get_flight_instance") {
    Json v = canonical_value;
    v["available_seats"] = 9;
    v["price"] = 312.5;
    return {{{"flight_number", mtc_args["flight_number"]}, {"date", mtc_args["date"]}}, v};
  }
  if (tool == "search_direct_flights") {
    Json flights = Json::array();
    flights.push_back({{"flight_number", "HAT999"}, {"status", "cancelled"}});
    flights.push_back({{"flight_number", mtc_args["flight_number"]}, {"status", canonical_value["status"]}});
    return {{{"origin", mtc_args["origin"]}, {"destination", mtc_args["destination"]}, {"date", mtc_args["date"]}},
            {{"flights", flights}}};
  }
  throw std::logic_error("no alternative generator for " + tool);
}

inline TrajectoryReport analyze(const Trajectory& t, const Fixture& f = fx()) {
  CodeBackend backend(f.catalog);
  return analyze_trajectory(t, f.guards, f.catalog, backend);
}

inline const MtcVerdict* verdict_at(const TrajectoryReport& r, std::size_t index) {
  for (const auto& v : r.verdicts)
    if (v.event_index == index) return &v;
  return nullptr;
}

}  // namespace nmtest
