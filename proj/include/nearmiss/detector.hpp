#pragma once

// Near-miss detection: for every mutating tool call, replay its guard against
// the history that precedes it and flag the call when some applicable
// information need cannot be resolved from earlier reads.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nearmiss/error.hpp"
#include "nearmiss/eval.hpp"
#include "nearmiss/guard_spec.hpp"
#include "nearmiss/resolver.hpp"
#include "nearmiss/trace.hpp"

namespace nearmiss {

/// Strategy that answers "was this need satisfied by earlier reads?".
/// Implementations must tolerate concurrent resolve() calls.
class ResolutionBackend {
 public:
  virtual ~ResolutionBackend() = default;

  virtual ResolutionResult resolve(const InformationNeed& need, const ArgMap& mtc_args, const History& history,
                                   const EvalEnv& env) = 0;

  [[nodiscard]] virtual std::string backend_id() const = 0;
};

class CodeBackend final : public ResolutionBackend {
 public:
  explicit CodeBackend(const ToolCatalog& catalog, ResolverOptions options = {})
      : catalog_(catalog), options_(options) {}

  ResolutionResult resolve(const InformationNeed& need, const ArgMap&, const History& history,
                           const EvalEnv& env) override {
    return resolve_need(need, history, env, catalog_, options_);
  }

  [[nodiscard]] std::string backend_id() const override {
    return options_.strict_freshness ? "code+strict_freshness" : "code";
  }

 private:
  const ToolCatalog& catalog_;
  ResolverOptions options_;
};

enum class Applicability { yes, no, unknown };
enum class CheckVerdict { pass, violate, unknown };

inline std::string_view to_string(Applicability a) {
  switch (a) {
    case Applicability::yes: return "yes";
    case Applicability::no: return "no";
    case Applicability::unknown: return "unknown";
  }
  return "?";
}

inline std::string_view to_string(CheckVerdict v) {
  switch (v) {
    case CheckVerdict::pass: return "pass";
    case CheckVerdict::violate: return "violate";
    case CheckVerdict::unknown: return "unknown";
  }
  return "?";
}

struct NeedOutcome {
  std::string need_id;
  Applicability applicable = Applicability::yes;
  std::optional<ResolutionResult> resolution;  // absent iff applicable == no
  std::optional<CheckVerdict> check_verdict;   // present only for resolved needs with a check
  std::vector<std::string> diagnostics;

  [[nodiscard]] bool counts_as_near_miss() const {
    return applicable != Applicability::no && resolution && !resolution->resolved();
  }
};

struct MtcVerdict {
  std::size_t event_index = 0;
  std::string tool_name;
  bool nm = false;
  std::vector<NeedOutcome> outcomes;
  std::vector<std::string> bypassed_reads;
  std::string backend_id;
};

struct TrajectoryReport {
  std::string trajectory_id;
  bool has_mtc = false;
  std::vector<MtcVerdict> verdicts;
  std::optional<bool> outcome_matches_gold;
  std::string backend_id;
  std::vector<std::string> warnings;

  [[nodiscard]] bool any_nm() const {
    for (const auto& v : verdicts) {
      if (v.nm) return true;
    }
    return false;
  }
};

struct DetectorOptions {
  bool fail_on_missing_guard = false;
};

/// Processes needs in order. An Unresolved applies_if marks the need `unknown` and it is still resolved.
inline std::vector<NeedOutcome> replay_guard(const Guard& guard, const ArgMap& mtc_args, const History& history,
                                             ResolutionBackend& backend, std::optional<Timestamp> now) {
  std::vector<NeedOutcome> outcomes;
  std::map<std::string, PartialObject> resolved_needs;
  EvalEnv env;
  env.args = &mtc_args.json();
  env.now = now;
  env.needs = &resolved_needs;

  for (const auto& need : guard.needs) {
    NeedOutcome outcome;
    outcome.need_id = need.id;
    try {
      Evaluated applies = eval_expression(*need.applies_if, env);
      if (!applies) {
        outcome.applicable = Applicability::unknown;
      } else {
        outcome.applicable = detail::require_bool(*applies, "applies_if") ? Applicability::yes : Applicability::no;
      }
    } catch (const Error& e) {
      outcome.applicable = Applicability::unknown;
      outcome.diagnostics.push_back(std::string("applies_if: ") + e.what());
    }
    if (outcome.applicable == Applicability::no) {
      outcomes.push_back(std::move(outcome));
      continue;
    }

    ResolutionResult res = backend.resolve(need, mtc_args, history, env);
    if (res.resolved()) {
      if (need.check) {
        EvalEnv check_env = env;
        check_env.self = &res.object;
        try {
          Evaluated verdict = eval_expression(*need.check, check_env);
          if (!verdict) {
            outcome.check_verdict = CheckVerdict::unknown;
          } else {
            outcome.check_verdict = detail::require_bool(*verdict, "check") ? CheckVerdict::pass : CheckVerdict::violate;
          }
        } catch (const Error& e) {
          outcome.check_verdict = CheckVerdict::unknown;
          outcome.diagnostics.push_back(std::string("check: ") + e.what());
        }
      }
      resolved_needs[need.id] = res.object;
    }
    outcome.resolution = std::move(res);
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

/// Verdict for one mutating call, or nullopt when the tool has no guard and missing guards are tolerated.
inline std::optional<MtcVerdict> evaluate_mtc(const Event& mtc_event, const Trajectory& traj,
                                              const GuardSpecSet& specset, ResolutionBackend& backend,
                                              const DetectorOptions& options = {}) {
  const Guard* guard = specset.find(mtc_event.tool_name);
  if (guard == nullptr) {
    if (options.fail_on_missing_guard) {
      throw Error(ErrorCode::NoGuardForTool, "no guard for mutating tool '" + mtc_event.tool_name + "'");
    }
    return std::nullopt;
  }
  if (!traj.reference_time && guard->uses_meta_now()) {
    throw Error(ErrorCode::MissingReferenceTime,
                "trajectory '" + traj.id + "' has no reference_time but the guard for '" + guard->tool +
                    "' uses meta.now");
  }
  MtcVerdict verdict;
  verdict.event_index = mtc_event.index;
  verdict.tool_name = mtc_event.tool_name;
  verdict.backend_id = backend.backend_id();
  History history = prior_tool_results(traj, mtc_event.index);
  verdict.outcomes = replay_guard(*guard, mtc_event.args, history, backend, traj.reference_time);
  for (std::size_t i = 0; i < verdict.outcomes.size(); ++i) {
    if (verdict.outcomes[i].counts_as_near_miss()) {
      verdict.nm = true;
      verdict.bypassed_reads.push_back(guard->needs[i].canonical_read.tool);
    }
  }
  return verdict;
}

inline TrajectoryReport analyze_trajectory(const Trajectory& traj, const GuardSpecSet& specset,
                                           const ToolCatalog& catalog, ResolutionBackend& backend,
                                           const DetectorOptions& options = {}) {
  TrajectoryReport report;
  report.trajectory_id = traj.id;
  report.outcome_matches_gold = traj.outcome_matches_gold;
  report.backend_id = backend.backend_id();
  for (const auto& [index, kind] : classify_tool_calls(traj, catalog)) {
    if (kind != ToolKind::mutating) continue;
    const Event& ev = traj.events[index];
    auto verdict = evaluate_mtc(ev, traj, specset, backend, options);
    if (verdict) {
      report.verdicts.push_back(std::move(*verdict));
    } else {
      report.warnings.push_back("no guard for '" + ev.tool_name + "' at event " + std::to_string(index));
    }
  }
  report.has_mtc = !report.verdicts.empty();
  return report;
}

// Report encoding. Keys are emitted in sorted order so reports diff cleanly.

inline Json resolution_to_json(const ResolutionResult& r) {
  Json evidence = Json::array();
  for (const auto& e : r.evidence) evidence.push_back({{"index", e.index}, {"tool", e.tool}});
  Json out = {{"status", to_string(r.status)},
              {"object", r.object.to_json()},
              {"evidence", evidence},
              {"missing_fields", r.missing_fields},
              {"diagnostics", r.diagnostics}};
  if (!r.reasoning.empty()) out["reasoning"] = r.reasoning;
  if (!r.raw_responses.empty()) out["raw_responses"] = r.raw_responses;
  if (r.attempts != 0) out["attempts"] = r.attempts;
  return out;
}

inline Json report_to_json(const TrajectoryReport& report) {
  Json verdicts = Json::array();
  for (const auto& v : report.verdicts) {
    Json outcomes = Json::array();
    for (const auto& o : v.outcomes) {
      Json jo = {{"need_id", o.need_id},
                 {"applicable", to_string(o.applicable)},
                 {"resolution", o.resolution ? resolution_to_json(*o.resolution) : Json()},
                 {"check_verdict", o.check_verdict ? Json(to_string(*o.check_verdict)) : Json()},
                 {"diagnostics", o.diagnostics}};
      outcomes.push_back(std::move(jo));
    }
    verdicts.push_back({{"event_index", v.event_index},
                        {"tool", v.tool_name},
                        {"nm", v.nm},
                        {"bypassed_reads", v.bypassed_reads},
                        {"backend", v.backend_id},
                        {"outcomes", std::move(outcomes)}});
  }
  return {{"trajectory_id", report.trajectory_id},
          {"backend", report.backend_id},
          {"has_mtc", report.has_mtc},
          {"outcome_matches_gold",
           report.outcome_matches_gold ? Json(*report.outcome_matches_gold) : Json()},
          {"verdicts", std::move(verdicts)},
          {"warnings", report.warnings}};
}

namespace detail {

template <typename Enum>
Enum parse_enum(const Json& j, std::initializer_list<Enum> values) {
  if (j.is_string()) {
    for (Enum e : values) {
      if (to_string(e) == j.get<std::string>()) return e;
    }
  }
  throw Error(ErrorCode::MalformedReport, "unexpected enum value " + j.dump());
}

}  // namespace detail

inline TrajectoryReport report_from_json(const Json& doc) {
  try {
    TrajectoryReport r;
    r.trajectory_id = doc.at("trajectory_id").get<std::string>();
    r.backend_id = doc.value("backend", "");
    r.has_mtc = doc.at("has_mtc").get<bool>();
    if (doc.contains("outcome_matches_gold") && !doc["outcome_matches_gold"].is_null()) {
      r.outcome_matches_gold = doc["outcome_matches_gold"].get<bool>();
    }
    if (doc.contains("warnings")) r.warnings = doc["warnings"].get<std::vector<std::string>>();
    for (const auto& jv : doc.at("verdicts")) {
      MtcVerdict v;
      v.event_index = jv.at("event_index").get<std::size_t>();
      v.tool_name = jv.at("tool").get<std::string>();
      v.nm = jv.at("nm").get<bool>();
      v.bypassed_reads = jv.at("bypassed_reads").get<std::vector<std::string>>();
      v.backend_id = jv.value("backend", "");
      for (const auto& jo : jv.at("outcomes")) {
        NeedOutcome o;
        o.need_id = jo.at("need_id").get<std::string>();
        o.applicable = detail::parse_enum(jo.at("applicable"),
                                          {Applicability::yes, Applicability::no, Applicability::unknown});
        if (jo.contains("diagnostics")) o.diagnostics = jo["diagnostics"].get<std::vector<std::string>>();
        if (const Json& jr = jo.at("resolution"); !jr.is_null()) {
          ResolutionResult res;
          res.status = detail::parse_enum(jr.at("status"), {ResolutionStatus::resolved, ResolutionStatus::unresolved});
          res.object = PartialObject::from_json(jr.at("object"));
          for (const auto& je : jr.at("evidence")) {
            res.evidence.push_back({je.at("index").get<std::size_t>(), je.at("tool").get<std::string>()});
          }
          res.missing_fields = jr.at("missing_fields").get<std::vector<std::string>>();
          if (jr.contains("diagnostics")) res.diagnostics = jr["diagnostics"].get<std::vector<std::string>>();
          res.reasoning = jr.value("reasoning", "");
          if (jr.contains("raw_responses")) res.raw_responses = jr["raw_responses"].get<std::vector<std::string>>();
          res.attempts = jr.value("attempts", 0);
          o.resolution = std::move(res);
        }
        if (const Json& jc = jo.at("check_verdict"); !jc.is_null()) {
          o.check_verdict =
              detail::parse_enum(jc, {CheckVerdict::pass, CheckVerdict::violate, CheckVerdict::unknown});
        }
        v.outcomes.push_back(std::move(o));
      }
      r.verdicts.push_back(std::move(v));
    }
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedReport, e.what());
  }
}

}  // namespace nearmiss
