#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nearmiss/detector.hpp"
#include "nearmiss/error.hpp"
#include "nearmiss/value.hpp"

namespace nearmiss {

/// Exact ratio; renders with round-half-up at a fixed number of decimals.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  [[nodiscard]] double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  [[nodiscard]] std::string str(int decimals = 3) const {
    std::int64_t scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    std::int64_t scaled = (2 * num * scale + den) / (2 * den);
    std::string frac = std::to_string(scaled % scale);
    frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
    return std::to_string(scaled / scale) + (decimals > 0 ? "." + frac : "");
  }

  friend bool operator==(const Ratio&, const Ratio&) = default;
};

inline Ratio nmr(std::int64_t nm_count, std::int64_t denominator) {
  if (denominator <= 0) throw Error(ErrorCode::ZeroDenominator, "near-miss rate needs a positive denominator");
  if (nm_count < 0 || nm_count > denominator) {
    throw Error(ErrorCode::InvalidConfig, "near-miss count must lie in [0, denominator]");
  }
  return {nm_count, denominator};
}

struct AggregateOptions {
  // Count trajectories without an outcome flag as successful.
  bool assume_success = false;
  // Count near-misses in every trajectory, not only those whose outcome matches gold.
  bool all_outcomes = false;
};

struct CorpusMetrics {
  std::int64_t n_trajectories = 0;
  std::int64_t n_success = 0;
  std::int64_t n_outcome_unknown = 0;
  std::int64_t n_with_mtc = 0;
  std::int64_t n_nm_trajectories = 0;
  std::int64_t n_nm_verdicts = 0;
  std::map<std::string, std::int64_t> per_mutating_tool;
  std::map<std::string, std::int64_t> per_bypassed_read;
  AggregateOptions options;

  [[nodiscard]] Ratio nmr_overall() const { return nmr(n_nm_trajectories, n_trajectories); }
  [[nodiscard]] Ratio nmr_over_mtc() const { return nmr(n_nm_trajectories, n_with_mtc); }

  friend bool operator==(const CorpusMetrics& a, const CorpusMetrics& b) {
    return a.n_trajectories == b.n_trajectories && a.n_success == b.n_success &&
           a.n_outcome_unknown == b.n_outcome_unknown && a.n_with_mtc == b.n_with_mtc &&
           a.n_nm_trajectories == b.n_nm_trajectories && a.n_nm_verdicts == b.n_nm_verdicts &&
           a.per_mutating_tool == b.per_mutating_tool && a.per_bypassed_read == b.per_bypassed_read &&
           a.options.assume_success == b.options.assume_success && a.options.all_outcomes == b.options.all_outcomes;
  }
};

/// Whether a report belongs to the population whose near-misses are counted.
inline bool in_nm_population(const TrajectoryReport& r, const AggregateOptions& options) {
  if (options.all_outcomes) return true;
  if (r.outcome_matches_gold) return *r.outcome_matches_gold;
  return options.assume_success;
}

inline CorpusMetrics aggregate(const std::vector<TrajectoryReport>& reports, const AggregateOptions& options = {}) {
  CorpusMetrics m;
  m.options = options;
  std::set<std::string> ids;
  for (const auto& r : reports) {
    if (!ids.insert(r.trajectory_id).second) {
      throw Error(ErrorCode::DuplicateTrajectoryId, "trajectory '" + r.trajectory_id + "' reported twice");
    }
    ++m.n_trajectories;
    if (!r.outcome_matches_gold) {
      ++m.n_outcome_unknown;
      if (options.assume_success) ++m.n_success;
    } else if (*r.outcome_matches_gold) {
      ++m.n_success;
    }
    if (r.has_mtc) ++m.n_with_mtc;
    if (!in_nm_population(r, options) || !r.any_nm()) continue;
    ++m.n_nm_trajectories;
    for (const auto& v : r.verdicts) {
      if (!v.nm) continue;
      ++m.n_nm_verdicts;
      ++m.per_mutating_tool[v.tool_name];
      for (const auto& read : v.bypassed_reads) ++m.per_bypassed_read[read];
    }
  }
  return m;
}

struct GoldEntry {
  bool nm = false;
  std::optional<std::vector<std::size_t>> mtc_indices;
};

struct GoldAnnotation {
  std::map<std::string, GoldEntry> entries;
};

inline GoldAnnotation parse_gold_json(const Json& doc) {
  GoldAnnotation gold;
  try {
    for (const auto& a : doc.at("annotations")) {
      GoldEntry e;
      e.nm = a.at("nm").get<bool>();
      if (a.contains("mtc_indices") && !a["mtc_indices"].is_null()) {
        e.mtc_indices = a["mtc_indices"].get<std::vector<std::size_t>>();
      }
      std::string id = a.at("id").get<std::string>();
      if (!gold.entries.emplace(id, std::move(e)).second) {
        throw Error(ErrorCode::DuplicateTrajectoryId, "gold annotation for '" + id + "' repeats");
      }
    }
  } catch (const Json::exception& ex) {
    throw Error(ErrorCode::MalformedReport, std::string("gold annotation: ") + ex.what());
  }
  return gold;
}

inline Json gold_to_json(const GoldAnnotation& gold) {
  Json annotations = Json::array();
  for (const auto& [id, e] : gold.entries) {
    Json a = {{"id", id}, {"nm", e.nm}};
    if (e.mtc_indices) a["mtc_indices"] = *e.mtc_indices;
    annotations.push_back(std::move(a));
  }
  return {{"annotations", std::move(annotations)}};
}

struct PRF {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double precision = 1.0;
  double recall = 1.0;

  static PRF from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    PRF out{tp, fp, fn, 1.0, 1.0};
    if (tp + fp == 0) {
      out.precision = fn == 0 ? 1.0 : 0.0;
    } else {
      out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    out.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    return out;
  }
};

enum class MatchLevel { trajectory, mtc };

/// Scores detections over the annotated trajectories. Trajectory level counts a
/// trajectory as detected when any of its verdicts is a near-miss; MTC level
/// compares (trajectory, event index) pairs for entries that list indices.
inline PRF compare_to_gold(const std::vector<TrajectoryReport>& reports, const GoldAnnotation& gold,
                           MatchLevel level = MatchLevel::trajectory) {
  std::map<std::string, const TrajectoryReport*> by_id;
  for (const auto& r : reports) by_id.emplace(r.trajectory_id, &r);
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [id, entry] : gold.entries) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::UnknownTrajectoryId, "gold id '" + id + "' has no report");
    const TrajectoryReport& r = *it->second;
    if (level == MatchLevel::trajectory) {
      bool detected = r.any_nm();
      tp += detected && entry.nm;
      fp += detected && !entry.nm;
      fn += !detected && entry.nm;
      continue;
    }
    if (!entry.mtc_indices) continue;
    std::set<std::size_t> expected(entry.mtc_indices->begin(), entry.mtc_indices->end());
    std::set<std::size_t> detected;
    for (const auto& v : r.verdicts) {
      if (v.nm) detected.insert(v.event_index);
    }
    for (auto i : detected) (expected.contains(i) ? tp : fp) += 1;
    for (auto i : expected) fn += detected.contains(i) ? 0 : 1;
  }
  return PRF::from_counts(tp, fp, fn);
}

enum class ReportFormat { json, csv, markdown };

inline std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  return std::nullopt;
}

/// Descending by count, ties by name.
inline std::vector<std::pair<std::string, std::int64_t>> sorted_distribution(
    const std::map<std::string, std::int64_t>& counts) {
  std::vector<std::pair<std::string, std::int64_t>> rows(counts.begin(), counts.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return rows;
}

inline Json ratio_json(const CorpusMetrics& m, bool over_mtc) {
  std::int64_t den = over_mtc ? m.n_with_mtc : m.n_trajectories;
  if (den == 0) return Json();
  Ratio r = nmr(m.n_nm_trajectories, den);
  return {{"num", r.num}, {"den", r.den}, {"value", r.str()}};
}

inline Json metrics_to_json(const CorpusMetrics& m, const std::optional<PRF>& prf = std::nullopt) {
  Json out = {{"n_trajectories", m.n_trajectories},
              {"n_success", m.n_success},
              {"n_outcome_unknown", m.n_outcome_unknown},
              {"n_with_mtc", m.n_with_mtc},
              {"n_nm_trajectories", m.n_nm_trajectories},
              {"n_nm_verdicts", m.n_nm_verdicts},
              {"nmr_overall", ratio_json(m, false)},
              {"nmr_over_mtc", ratio_json(m, true)},
              {"per_mutating_tool", m.per_mutating_tool},
              {"per_bypassed_read", m.per_bypassed_read},
              {"options", {{"assume_success", m.options.assume_success}, {"all_outcomes", m.options.all_outcomes}}}};
  if (prf) {
    out["prf"] = {{"tp", prf->tp}, {"fp", prf->fp}, {"fn", prf->fn}, {"precision", prf->precision},
                  {"recall", prf->recall}};
  }
  return out;
}

inline std::pair<CorpusMetrics, std::optional<PRF>> metrics_from_json(const Json& doc) {
  try {
    CorpusMetrics m;
    m.n_trajectories = doc.at("n_trajectories").get<std::int64_t>();
    m.n_success = doc.at("n_success").get<std::int64_t>();
    m.n_outcome_unknown = doc.at("n_outcome_unknown").get<std::int64_t>();
    m.n_with_mtc = doc.at("n_with_mtc").get<std::int64_t>();
    m.n_nm_trajectories = doc.at("n_nm_trajectories").get<std::int64_t>();
    m.n_nm_verdicts = doc.at("n_nm_verdicts").get<std::int64_t>();
    m.per_mutating_tool = doc.at("per_mutating_tool").get<std::map<std::string, std::int64_t>>();
    m.per_bypassed_read = doc.at("per_bypassed_read").get<std::map<std::string, std::int64_t>>();
    if (doc.contains("options")) {
      m.options.assume_success = doc["options"].value("assume_success", false);
      m.options.all_outcomes = doc["options"].value("all_outcomes", false);
    }
    std::optional<PRF> prf;
    if (doc.contains("prf") && !doc["prf"].is_null()) {
      const Json& p = doc["prf"];
      prf = PRF::from_counts(p.at("tp").get<std::int64_t>(), p.at("fp").get<std::int64_t>(),
                             p.at("fn").get<std::int64_t>());
    }
    return {m, prf};
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedReport, std::string("metrics: ") + e.what());
  }
}

inline std::string format_fixed(double v, int decimals = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

inline std::string emit_report(const CorpusMetrics& m, const std::optional<PRF>& prf, ReportFormat format) {
  std::ostringstream os;
  switch (format) {
    case ReportFormat::json:
      os << canonical_dump(metrics_to_json(m, prf)) << '\n';
      break;
    case ReportFormat::csv:
      os << "distribution,tool,count\n";
      for (const auto& [tool, n] : sorted_distribution(m.per_mutating_tool)) os << "mutating_tool," << tool << ',' << n << '\n';
      for (const auto& [tool, n] : sorted_distribution(m.per_bypassed_read)) os << "bypassed_read," << tool << ',' << n << '\n';
      break;
    case ReportFormat::markdown: {
      auto cell = [&](bool over_mtc) {
        Json r = ratio_json(m, over_mtc);
        return r.is_null() ? std::string("n/a") : r["value"].get<std::string>();
      };
      os << "| trajectories | outcome meets gold | outcome unknown | trajectories with MTCs | near-miss trajectories "
            "| NMR | NMR (out of trajectories with MTCs) |\n";
      os << "|---:|---:|---:|---:|---:|---:|---:|\n";
      os << "| " << m.n_trajectories << " | " << m.n_success << " | " << m.n_outcome_unknown << " | " << m.n_with_mtc
         << " | " << m.n_nm_trajectories << " | " << cell(false) << " | " << cell(true) << " |\n";
      if (prf) {
        os << "\n| TP | FP | FN | P | R |\n|---:|---:|---:|---:|---:|\n";
        os << "| " << prf->tp << " | " << prf->fp << " | " << prf->fn << " | " << format_fixed(prf->precision) << " | "
           << format_fixed(prf->recall) << " |\n";
      }
      auto table = [&](const char* title, const std::map<std::string, std::int64_t>& counts) {
        os << "\n### " << title << "\n\n| tool | count |\n|---|---:|\n";
        for (const auto& [tool, n] : sorted_distribution(counts)) os << "| " << tool << " | " << n << " |\n";
      };
      table("Near-misses by mutating tool", m.per_mutating_tool);
      table("Bypassed read-only tools", m.per_bypassed_read);
      break;
    }
  }
  return os.str();
}

}  // namespace nearmiss
