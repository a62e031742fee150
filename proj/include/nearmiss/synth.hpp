#pragma once

// Synthetic airline trajectories with planted bypasses, and an oracle labeler
// that does not share code with the detector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nearmiss/airline_fixture.hpp"
#include "nearmiss/guard_spec.hpp"
#include "nearmiss/trace.hpp"
#include "nearmiss/value.hpp"

namespace nearmiss {

/// PCG32 (XSH RR). Same sequence on every platform for a given seed.
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL) : inc_((stream << 1u) | 1u) {
    next();
    state_ += seed;
    next();
  }

  std::uint32_t next() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31u));
  }

  /// Uniform in [0, bound); rejection keeps it unbiased.
  std::uint32_t bounded(std::uint32_t bound) {
    if (bound == 0) return 0;
    std::uint32_t threshold = (~bound + 1u) % bound;
    for (;;) {
      std::uint32_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = bounded(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[bounded(static_cast<std::uint32_t>(v.size()))];
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_;
};

struct Fixture {
  ToolCatalog catalog;
  GuardSpecSet guards;
};

inline Fixture load_airline_fixture() {
  Fixture f;
  f.catalog = parse_catalog(airline::kCatalogJson);
  f.guards = parse_guard_spec(airline::kGuardsJson, f.catalog);
  return f;
}

enum class Satisfaction { canonical, alternative, bypass, bypass_late, bypass_errored, not_applicable };

inline std::string_view to_string(Satisfaction s) {
  switch (s) {
    case Satisfaction::canonical: return "canonical";
    case Satisfaction::alternative: return "alternative";
    case Satisfaction::bypass: return "bypass";
    case Satisfaction::bypass_late: return "bypass_late";
    case Satisfaction::bypass_errored: return "bypass_errored";
    case Satisfaction::not_applicable: return "not_applicable";
  }
  return "?";
}

inline bool is_bypass(Satisfaction s) {
  return s == Satisfaction::bypass || s == Satisfaction::bypass_late || s == Satisfaction::bypass_errored;
}

struct NeedPlan {
  std::string need_id;
  std::string canonical_tool;
  Satisfaction how = Satisfaction::canonical;
  int alternative = -1;  // index into the need's alternatives
};

struct MtcPlan {
  std::string tool;
  std::size_t event_index = 0;
  std::vector<NeedPlan> needs;

  [[nodiscard]] bool nm() const {
    return std::any_of(needs.begin(), needs.end(), [](const NeedPlan& n) { return is_bypass(n.how); });
  }
};

struct TrajectoryPlan {
  std::string id;
  bool outcome_matches_gold = true;
  std::vector<MtcPlan> mtcs;

  [[nodiscard]] bool nm() const {
    return std::any_of(mtcs.begin(), mtcs.end(), [](const MtcPlan& m) { return m.nm(); });
  }
};

struct PlantingPlan {
  std::uint64_t seed = 0;
  double nm_rate = 0;
  std::vector<TrajectoryPlan> trajectories;

  [[nodiscard]] std::size_t n_nm_trajectories() const {
    return static_cast<std::size_t>(std::count_if(trajectories.begin(), trajectories.end(),
                                                  [](const TrajectoryPlan& t) { return t.nm(); }));
  }
  [[nodiscard]] std::size_t n_with_mtc() const {
    return static_cast<std::size_t>(std::count_if(trajectories.begin(), trajectories.end(),
                                                  [](const TrajectoryPlan& t) { return !t.mtcs.empty(); }));
  }
  [[nodiscard]] std::size_t n_success() const {
    return static_cast<std::size_t>(std::count_if(trajectories.begin(), trajectories.end(),
                                                  [](const TrajectoryPlan& t) { return t.outcome_matches_gold; }));
  }
  // planted nm MTCs per mutating tool
  [[nodiscard]] std::map<std::string, std::size_t> per_mutating_tool() const {
    std::map<std::string, std::size_t> out;
    for (const auto& t : trajectories)
      for (const auto& m : t.mtcs)
        if (m.nm()) ++out[m.tool];
    return out;
  }
  [[nodiscard]] std::map<std::string, std::size_t> per_bypassed_read() const {
    std::map<std::string, std::size_t> out;
    for (const auto& t : trajectories)
      for (const auto& m : t.mtcs)
        for (const auto& n : m.needs)
          if (is_bypass(n.how)) ++out[n.canonical_tool];
    return out;
  }
  // compliant MTCs, and how many of those were satisfied through an alternative
  [[nodiscard]] std::pair<std::size_t, std::size_t> alternative_share() const {
    std::size_t compliant = 0, alt = 0;
    for (const auto& t : trajectories)
      for (const auto& m : t.mtcs) {
        if (m.nm()) continue;
        ++compliant;
        if (std::any_of(m.needs.begin(), m.needs.end(),
                        [](const NeedPlan& n) { return n.how == Satisfaction::alternative; }))
          ++alt;
      }
    return {compliant, alt};
  }
};

inline Json plan_to_json(const PlantingPlan& plan) {
  Json trajs = Json::array();
  for (const auto& t : plan.trajectories) {
    Json mtcs = Json::array();
    for (const auto& m : t.mtcs) {
      Json needs = Json::array();
      for (const auto& n : m.needs) {
        Json j = {{"need_id", n.need_id}, {"canonical_tool", n.canonical_tool}, {"how", to_string(n.how)}};
        if (n.alternative >= 0) j["alternative"] = n.alternative;
        needs.push_back(std::move(j));
      }
      mtcs.push_back({{"tool", m.tool}, {"event_index", m.event_index}, {"nm", m.nm()}, {"needs", needs}});
    }
    trajs.push_back({{"id", t.id}, {"outcome_matches_gold", t.outcome_matches_gold}, {"nm", t.nm()}, {"mtcs", mtcs}});
  }
  Json per_tool = Json::object(), per_read = Json::object();
  for (const auto& [k, v] : plan.per_mutating_tool()) per_tool[k] = v;
  for (const auto& [k, v] : plan.per_bypassed_read()) per_read[k] = v;
  return {{"seed", plan.seed},
          {"nm_rate", plan.nm_rate},
          {"n_trajectories", plan.trajectories.size()},
          {"n_nm_trajectories", plan.n_nm_trajectories()},
          {"n_with_mtc", plan.n_with_mtc()},
          {"per_mutating_tool", per_tool},
          {"per_bypassed_read", per_read},
          {"trajectories", trajs}};
}

struct SynthOptions {
  std::size_t n = 200;
  double nm_rate = 0.07;
  std::uint64_t seed = 7;
  // Optional canonical read tool to bypass for each planted trajectory, in order.
  std::vector<std::string> bypass_reads;
};

struct SynthCorpus {
  Fixture fixture;
  std::vector<Trajectory> trajectories;
  PlantingPlan plan;
};

namespace detail::synth {

inline const std::vector<std::string> kAirports = {"JFK", "LAX", "SFO", "ORD", "ATL", "SEA",
                                                   "BOS", "MIA", "DEN", "DFW", "PHX", "LAS"};
inline const std::vector<std::string> kFirst = {"Mia", "Noah", "Ava", "Liam", "Emma", "Omar",
                                                "Yusuf", "Sofia", "Raj", "Chen", "Lucas", "Amelia"};
inline const std::vector<std::string> kLast = {"Garcia", "Kim", "Silva", "Patel", "Nguyen", "Rossi",
                                               "Khan", "Brown", "Muller", "Lopez", "Sato", "Wilson"};

inline std::string digits(Pcg32& rng, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += static_cast<char>('0' + rng.bounded(10));
  return s;
}

inline std::string letters(Pcg32& rng, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += static_cast<char>('A' + rng.bounded(26));
  return s;
}

inline std::string two(unsigned v) { return (v < 10 ? "0" : "") + std::to_string(v); }

struct Entities {
  std::string user_id, user_name, membership;
  std::vector<std::string> payment_methods;
  std::string reservation_id, decoy_reservation_id;
  std::string res_flight, res_date, res_origin, res_destination, cabin, created_at, res_payment;
  std::string flight_number, date, origin, destination, decoy_flight;
  std::int64_t seats = 0;
  double price = 0;
  Json route_flights = Json::array();  // search result list, includes the target flight
};

// Entity ids embed the trajectory and MTC ordinal, so reads for one MTC never satisfy another.
inline Entities make_entities(Pcg32& rng, std::size_t traj, std::size_t k, Timestamp now) {
  Entities e;
  std::string first = rng.pick(kFirst), last = rng.pick(kLast);
  std::string tag = two(static_cast<unsigned>(traj % 100)) + std::to_string(k);
  std::string lower_first = first;
  std::transform(lower_first.begin(), lower_first.end(), lower_first.begin(), ::tolower);
  e.user_id = lower_first + "_" + tag + digits(rng, 3);
  e.user_name = first + " " + last;
  e.membership = std::vector<std::string>{"regular", "silver", "gold"}[rng.bounded(3)];
  e.payment_methods = {"credit_card_" + digits(rng, 7), "gift_card_" + digits(rng, 7)};
  e.reservation_id = letters(rng, 2) + tag + letters(rng, 1);
  e.decoy_reservation_id = letters(rng, 2) + tag + "Z" + letters(rng, 1);

  std::vector<std::string> airports = kAirports;
  rng.shuffle(airports);
  e.origin = airports[0];
  e.destination = airports[1];
  e.res_origin = airports[2];
  e.res_destination = airports[3];
  unsigned base = 100 + static_cast<unsigned>(traj % 50) * 16 + static_cast<unsigned>(k) * 8;
  e.flight_number = "HAT" + std::to_string(base);
  e.decoy_flight = "HAT" + std::to_string(base + 5);
  e.res_flight = "HAT" + std::to_string(base + 6);
  e.date = "2024-05-" + two(18 + 4 * static_cast<unsigned>(k) + rng.bounded(4));
  e.res_date = "2024-05-" + two(10 + rng.bounded(5));
  e.cabin = std::vector<std::string>{"basic_economy", "economy", "business"}[rng.bounded(3)];
  e.res_payment = e.payment_methods[rng.bounded(2)];
  e.created_at = format_timestamp(now - std::chrono::minutes(30 + rng.bounded(22 * 60)));
  e.seats = 1 + rng.bounded(40);
  e.price = 80 + rng.bounded(900) + 0.5 * rng.bounded(2);

  std::vector<Json> flights;
  flights.push_back({{"flight_number", e.flight_number}, {"origin", e.origin}, {"destination", e.destination},
                     {"status", "available"}, {"price", e.price}});
  std::uint32_t decoys = 1 + rng.bounded(3);
  for (std::uint32_t j = 0; j < decoys; ++j) {
    flights.push_back({{"flight_number", "HAT" + std::to_string(base + 1 + j)},
                       {"origin", e.origin},
                       {"destination", e.destination},
                       {"status", j == 0 ? std::string("cancelled") : rng.pick(std::vector<std::string>{"available", "delayed", "on-time"})},
                       {"price", 80 + rng.bounded(900)}});
  }
  rng.shuffle(flights);
  for (auto& f : flights) e.route_flights.push_back(std::move(f));
  return e;
}

inline Json reservation_json(const Entities& e, const std::string& status = "confirmed") {
  return {{"reservation_id", e.reservation_id}, {"user_id", e.user_id},     {"flight_number", e.res_flight},
          {"date", e.res_date},                 {"origin", e.res_origin},    {"destination", e.res_destination},
          {"cabin", e.cabin},                   {"status", status},          {"created_at", e.created_at},
          {"payment_id", e.res_payment}};
}

// (args, result) of a read tool about the entities
inline std::pair<Json, Json> read_call(const std::string& tool, const Entities& e) {
  if (tool == "get_reservation_details") return {{{"reservation_id", e.reservation_id}}, reservation_json(e)};
  if (tool == "get_reservation_timestamp")
    return {{{"reservation_id", e.reservation_id}}, {{"reservation_id", e.reservation_id}, {"timestamp", e.created_at}}};
  if (tool == "get_flight_status")
    return {{{"flight_number", e.flight_number}, {"date", e.date}},
            {{"flight_number", e.flight_number}, {"date", e.date}, {"status", "available"}}};
  if (tool == "get_flight_instance")
    return {{{"flight_number", e.flight_number}, {"date", e.date}},
            {{"flight_number", e.flight_number},
             {"date", e.date},
             {"status", "available"},
             {"available_seats", e.seats},
             {"price", e.price}}};
  if (tool == "search_direct_flights")
    return {{{"origin", e.origin}, {"destination", e.destination}, {"date", e.date}}, {{"flights", e.route_flights}}};
  if (tool == "get_user_details")
    return {{{"user_id", e.user_id}},
            {{"user_id", e.user_id},
             {"name", e.user_name},
             {"membership", e.membership},
             {"payment_methods", e.payment_methods}}};
  throw Error(ErrorCode::InvalidConfig, "no generator for read tool '" + tool + "'");
}

inline std::pair<Json, Json> mtc_call(const std::string& tool, const Entities& e, bool with_payment) {
  if (tool == "cancel_reservation")
    return {{{"reservation_id", e.reservation_id}}, reservation_json(e, "cancelled")};
  Entities moved = e;
  moved.res_flight = e.flight_number;
  moved.res_date = e.date;
  moved.res_origin = e.origin;
  moved.res_destination = e.destination;
  if (tool == "book_reservation")
    return {{{"user_id", e.user_id},
             {"flight_number", e.flight_number},
             {"date", e.date},
             {"origin", e.origin},
             {"destination", e.destination},
             {"cabin", e.cabin},
             {"payment_id", e.payment_methods[0]}},
            reservation_json(moved)};
  if (tool == "update_reservation_flights") {
    Json args = {{"reservation_id", e.reservation_id},
                 {"flight_number", e.flight_number},
                 {"date", e.date},
                 {"origin", e.origin},
                 {"destination", e.destination}};
    if (with_payment) args["payment_id"] = e.payment_methods[1];
    return {args, reservation_json(moved)};
  }
  if (tool == "update_reservation_passengers") {
    auto space = e.user_name.find(' ');
    Json pax = Json::array({{{"first_name", e.user_name.substr(0, space)},
                             {"last_name", e.user_name.substr(space + 1)},
                             {"dob", "1990-04-1" + std::to_string(e.seats % 10)}}});
    return {{{"reservation_id", e.reservation_id}, {"passengers", pax}}, reservation_json(e)};
  }
  throw Error(ErrorCode::InvalidConfig, "no generator for mutating tool '" + tool + "'");
}

class EventWriter {
 public:
  std::size_t message(bool user, std::string text) {
    events_.push_back({{"kind", user ? "user_msg" : "assistant_msg"}, {"text", std::move(text)}});
    return events_.size() - 1;
  }
  std::size_t call(const std::string& tool, const Json& args, const Json& value, bool is_error = false) {
    std::string id = "call_" + std::to_string(next_call_++);
    events_.push_back({{"kind", "tool_call"}, {"call_id", id}, {"name", tool}, {"arguments", args}});
    std::size_t at = events_.size() - 1;
    events_.push_back({{"kind", "tool_result"}, {"call_id", id}, {"value", value}, {"is_error", is_error}});
    return at;
  }
  Json take() { return std::move(events_); }

 private:
  Json events_ = Json::array();
  int next_call_ = 0;
};

struct BypassSlot {
  std::string tool;
  std::string need_id;
  std::uint32_t weight;
};

// update_reservation_flights.reservation is never bypassed: a missing reservation would cascade into payment.
inline const std::vector<BypassSlot> kBypassSlots = {
    {"update_reservation_flights", "flight_status", 5}, {"book_reservation", "flight_status", 2},
    {"cancel_reservation", "res_details", 2},           {"update_reservation_flights", "payment", 2},
    {"book_reservation", "payment", 1},                 {"update_reservation_passengers", "reservation", 1}};

inline const std::vector<std::pair<std::string, std::uint32_t>> kMtcWeights = {
    {"update_reservation_flights", 4}, {"cancel_reservation", 3}, {"book_reservation", 3},
    {"update_reservation_passengers", 1}};

template <class T, class W>
const T& weighted(Pcg32& rng, const std::vector<T>& items, W weight) {
  std::uint32_t total = 0;
  for (const auto& it : items) total += weight(it);
  std::uint32_t r = rng.bounded(total);
  for (const auto& it : items) {
    if (r < weight(it)) return it;
    r -= weight(it);
  }
  return items.back();
}

inline MtcPlan plan_mtc(const Guard& guard) {
  MtcPlan m;
  m.tool = guard.tool;
  for (const auto& need : guard.needs) m.needs.push_back({need.id, need.canonical_read.tool});
  return m;
}

}  // namespace detail::synth

/// Deterministic for a given (n, nm_rate, seed, bypass_reads).
inline SynthCorpus generate_corpus(const SynthOptions& options) {
  using namespace detail::synth;
  if (!(options.nm_rate >= 0.0 && options.nm_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidRate, "nm_rate must lie in [0, 1]");
  }
  SynthCorpus corpus;
  corpus.fixture = load_airline_fixture();
  const auto& guards = corpus.fixture.guards;
  Pcg32 rng(options.seed);
  PlantingPlan& plan = corpus.plan;
  plan.seed = options.seed;
  plan.nm_rate = options.nm_rate;

  auto n_nm = static_cast<std::size_t>(std::llround(static_cast<double>(options.n) * options.nm_rate));
  if (!options.bypass_reads.empty() && options.bypass_reads.size() != n_nm) {
    throw Error(ErrorCode::InvalidConfig, "bypass_reads has " + std::to_string(options.bypass_reads.size()) +
                                              " entries for " + std::to_string(n_nm) + " planted trajectories");
  }

  std::vector<std::size_t> order(options.n);
  for (std::size_t i = 0; i < options.n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<bool> planted(options.n, false);
  for (std::size_t i = 0; i < n_nm; ++i) planted[order[i]] = true;

  // Pass 1: structure and bypasses.
  std::size_t planted_seen = 0;
  for (std::size_t t = 0; t < options.n; ++t) {
    TrajectoryPlan tp;
    tp.id = "synth-" + std::string(4 - std::min<std::size_t>(4, std::to_string(t).size()), '0') + std::to_string(t);
    auto pick_mtc = [&]() -> const Guard& {
      return *guards.find(weighted(rng, kMtcWeights, [](const auto& p) { return p.second; }).first);
    };
    if (planted[t]) {
      std::vector<BypassSlot> slots;
      for (const auto& s : kBypassSlots) {
        if (options.bypass_reads.empty()) {
          slots.push_back(s);
          continue;
        }
        const Guard* g = guards.find(s.tool);
        for (const auto& need : g->needs)
          if (need.id == s.need_id && need.canonical_read.tool == options.bypass_reads[planted_seen])
            slots.push_back(s);
      }
      if (slots.empty()) {
        throw Error(ErrorCode::InvalidConfig, "no guarded need reads '" + options.bypass_reads[planted_seen] + "'");
      }
      ++planted_seen;
      const BypassSlot& slot = weighted(rng, slots, [](const BypassSlot& s) { return s.weight; });
      std::size_t n_mtc = rng.bounded(3) == 0 ? 2 : 1;
      std::size_t which = rng.bounded(static_cast<std::uint32_t>(n_mtc));
      for (std::size_t k = 0; k < n_mtc; ++k) {
        MtcPlan m = plan_mtc(k == which ? *guards.find(slot.tool) : pick_mtc());
        if (k == which) {
          for (auto& np : m.needs) {
            if (np.need_id != slot.need_id) continue;
            std::uint32_t v = rng.bounded(4);
            np.how = v < 2 ? Satisfaction::bypass : v == 2 ? Satisfaction::bypass_late : Satisfaction::bypass_errored;
          }
        }
        tp.mtcs.push_back(std::move(m));
      }
      tp.outcome_matches_gold = true;
    } else {
      std::uint32_t shape = rng.bounded(20);
      std::size_t n_mtc = shape < 8 ? 0 : shape < 17 ? 1 : 2;
      for (std::size_t k = 0; k < n_mtc; ++k) tp.mtcs.push_back(plan_mtc(pick_mtc()));
      tp.outcome_matches_gold = rng.bounded(6) != 0;
    }
    for (auto& m : tp.mtcs) {
      for (auto& np : m.needs) {
        if (m.tool == "update_reservation_flights" && np.need_id == "payment" && np.how == Satisfaction::canonical &&
            rng.bounded(6) == 0) {
          np.how = Satisfaction::not_applicable;
        }
      }
    }
    plan.trajectories.push_back(std::move(tp));
  }

  // Pass 2: a quarter of compliant MTCs satisfy one need through an alternative.
  std::vector<std::pair<MtcPlan*, std::size_t>> eligible;
  std::size_t compliant = 0;
  for (auto& tp : plan.trajectories) {
    for (auto& m : tp.mtcs) {
      if (m.nm()) continue;
      ++compliant;
      const Guard* g = guards.find(m.tool);
      for (std::size_t i = 0; i < g->needs.size(); ++i) {
        if (!g->needs[i].alternatives.empty()) {
          eligible.emplace_back(&m, i);
          break;
        }
      }
    }
  }
  rng.shuffle(eligible);
  std::size_t want = std::min(eligible.size(), (compliant + 3) / 4);
  for (std::size_t i = 0; i < want; ++i) {
    auto [m, need_pos] = eligible[i];
    const Guard* g = guards.find(m->tool);
    m->needs[need_pos].how = Satisfaction::alternative;
    m->needs[need_pos].alternative =
        static_cast<int>(rng.bounded(static_cast<std::uint32_t>(g->needs[need_pos].alternatives.size())));
  }

  // Pass 3: events.
  const Timestamp base = *parse_timestamp("2024-05-15T12:00:00Z");
  for (std::size_t t = 0; t < plan.trajectories.size(); ++t) {
    TrajectoryPlan& tp = plan.trajectories[t];
    Timestamp now = base + std::chrono::hours(rng.bounded(72));
    EventWriter w;
    w.message(true, "Hi, I need help with my booking.");
    if (tp.mtcs.empty()) {
      Entities e = make_entities(rng, t, 0, now);
      std::string tool = rng.bounded(2) ? "get_user_details" : "get_reservation_details";
      auto [args, value] = read_call(tool, e);
      w.call(tool, args, value);
      w.message(false, "Here is what I found on your account.");
      w.message(true, "Thanks, that's all.");
    }
    for (std::size_t k = 0; k < tp.mtcs.size(); ++k) {
      MtcPlan& m = tp.mtcs[k];
      const Guard* g = guards.find(m.tool);
      Entities e = make_entities(rng, t, k, now);
      if (k > 0) w.message(true, "One more thing, please.");
      std::vector<std::pair<std::string, bool>> before;  // (tool, errored)
      std::vector<std::string> after;
      bool with_payment = true;
      for (std::size_t i = 0; i < m.needs.size(); ++i) {
        const NeedPlan& np = m.needs[i];
        switch (np.how) {
          case Satisfaction::canonical: before.emplace_back(np.canonical_tool, false); break;
          case Satisfaction::alternative:
            before.emplace_back(g->needs[i].alternatives[static_cast<std::size_t>(np.alternative)].tool, false);
            break;
          case Satisfaction::bypass: break;
          case Satisfaction::bypass_late: after.push_back(np.canonical_tool); break;
          case Satisfaction::bypass_errored: before.emplace_back(np.canonical_tool, true); break;
          case Satisfaction::not_applicable: with_payment = false; break;
        }
      }
      rng.shuffle(before);
      for (const auto& [tool, errored] : before) {
        auto [args, value] = read_call(tool, e);
        if (errored) value = {{"error", "Service temporarily unavailable"}};
        w.call(tool, args, value, errored);
      }
      if (rng.bounded(3) == 0) {
        if (rng.bounded(2)) {
          Entities d = e;
          d.reservation_id = e.decoy_reservation_id;
          auto [args, value] = read_call("get_reservation_details", d);
          w.call("get_reservation_details", args, value);
        } else {
          Entities d = e;
          d.flight_number = e.decoy_flight;
          auto [args, value] = read_call("get_flight_status", d);
          w.call("get_flight_status", args, value);
        }
      }
      w.message(false, "I'll go ahead with that now.");
      auto [args, value] = mtc_call(m.tool, e, with_payment);
      m.event_index = w.call(m.tool, args, value);
      for (const auto& tool : after) {
        auto [a, v] = read_call(tool, e);
        w.call(tool, a, v);
      }
      w.message(false, "Done.");
    }
    Json doc = {{"id", tp.id},
                {"reference_time", format_timestamp(now)},
                {"outcome_matches_gold", tp.outcome_matches_gold},
                {"events", w.take()}};
    corpus.trajectories.push_back(parse_trajectory_json(doc, corpus.fixture.catalog));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Oracle: brute-force labels from the trajectory and spec alone. Supports the
// expression subset used by bindings and applicability in the fixture.

struct OracleMtcLabel {
  std::size_t index = 0;
  std::string tool;
  bool nm = false;
  std::vector<std::string> bypassed_reads;
};

struct OracleLabel {
  std::string trajectory_id;
  std::vector<OracleMtcLabel> mtcs;

  [[nodiscard]] bool nm() const {
    return std::any_of(mtcs.begin(), mtcs.end(), [](const OracleMtcLabel& m) { return m.nm; });
  }
};

namespace detail::oracle {

// Walks dotted segments; an exact dotted key on an object wins over descending.
inline std::optional<Json> walk(const Json& root, const std::vector<std::string>& segs, std::size_t from) {
  if (from == segs.size()) return std::optional<Json>(std::in_place, root);
  if (!root.is_object()) return std::nullopt;
  for (std::size_t end = segs.size(); end > from; --end) {
    std::string key = segs[from];
    for (std::size_t i = from + 1; i < end; ++i) key += "." + segs[i];
    auto it = root.find(key);
    if (it != root.end()) return walk(*it, segs, end);
  }
  return std::nullopt;
}

struct Ctx {
  const Json* args;
  const std::map<std::string, Json>* needs;
};

inline std::optional<Json> value_of(const Expr& e, const Ctx& c);

inline bool same(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return a.get<double>() == b.get<double>();
  return a == b;
}

inline std::optional<Json> value_of(const Expr& e, const Ctx& c) {
  if (const auto* lit = std::get_if<LiteralNode>(&e.node)) {
    if (const auto* b = std::get_if<bool>(&lit->value)) return Json(*b);
    if (const auto* i = std::get_if<std::int64_t>(&lit->value)) return Json(*i);
    if (const auto* d = std::get_if<double>(&lit->value)) return Json(*d);
    if (const auto* s = std::get_if<std::string>(&lit->value)) return Json(*s);
    throw std::logic_error("oracle: unsupported literal");
  }
  if (const auto* p = std::get_if<PathNode>(&e.node)) {
    const auto& s = p->segments;
    std::optional<Json> v;
    if (s[0] == "args") {
      v = walk(*c.args, s, 1);
    } else if (s[0] == "need" && s.size() >= 2) {
      auto it = c.needs->find(s[1]);
      if (it != c.needs->end()) v = walk(it->second, s, 2);
    } else {
      throw std::logic_error("oracle: unsupported path root " + s[0]);
    }
    if (!v || v->is_null()) return std::nullopt;
    return v;
  }
  if (const auto* u = std::get_if<UnaryNode>(&e.node)) {
    auto v = value_of(*u->operand, c);
    if (!v) return std::nullopt;
    return Json(!v->get<bool>());
  }
  if (const auto* b = std::get_if<BinaryNode>(&e.node)) {
    auto l = value_of(*b->lhs, c);
    if (b->op == BinaryOp::logical_and || b->op == BinaryOp::logical_or) {
      bool is_and = b->op == BinaryOp::logical_and;
      if (!l) return std::nullopt;
      if (l->get<bool>() != is_and) return l;
      return value_of(*b->rhs, c);
    }
    auto r = value_of(*b->rhs, c);
    if (!l || !r) return std::nullopt;
    if (b->op == BinaryOp::eq) return Json(same(*l, *r));
    if (b->op == BinaryOp::ne) return Json(!same(*l, *r));
    throw std::logic_error("oracle: unsupported operator");
  }
  if (const auto* call = std::get_if<CallNode>(&e.node)) {
    if (call->fn == Function::exists) return Json(value_of(*call->args[0], c).has_value());
    throw std::logic_error("oracle: unsupported function");
  }
  throw std::logic_error("oracle: unsupported node");
}

inline bool args_contain(const Json& actual, const Json& wanted) {
  for (auto it = wanted.begin(); it != wanted.end(); ++it) {
    auto a = actual.find(it.key());
    if (a == actual.end() || !same(*a, *it)) return false;
  }
  return true;
}

}  // namespace detail::oracle

inline OracleLabel oracle_detect(const Trajectory& traj, const GuardSpecSet& specs, const ToolCatalog& catalog) {
  using namespace detail::oracle;
  OracleLabel label;
  label.trajectory_id = traj.id;
  const auto& ev = traj.events;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    if (ev[k].kind != EventKind::tool_call) continue;
    const Guard* guard = specs.find(ev[k].tool_name);
    if (guard == nullptr) continue;
    OracleMtcLabel out{k, ev[k].tool_name, false, {}};
    const Json& mtc_args = ev[k].args.json();
    std::map<std::string, Json> resolved;
    Ctx ctx{&mtc_args, &resolved};
    for (const auto& need : guard->needs) {
      auto applies = value_of(*need.applies_if, ctx);
      if (applies && applies->is_boolean() && !applies->get<bool>()) continue;
      std::optional<Json> found;
      for (const ReadPattern* pat : need.patterns()) {
        Json want = Json::object();
        bool bound = true;
        for (const auto& [param, expr] : pat->bindings) {
          auto v = value_of(*expr, ctx);
          if (!v) bound = false;
          else want[param] = *v;
        }
        if (!bound) continue;
        // Latest completed, non-error call of this tool preceding the MTC.
        const Json* source = nullptr;
        for (std::size_t j = 0; j < k; ++j) {
          const Event& c = ev[j];
          if (c.kind != EventKind::tool_call || c.tool_name != pat->tool) continue;
          std::size_t r = 0;
          bool has_result = false;
          for (std::size_t q = j + 1; q < k; ++q) {
            if (ev[q].kind == EventKind::tool_result && ev[q].call_id == c.call_id) {
              r = q;
              has_result = true;
            }
          }
          if (!has_result || ev[r].is_error) continue;
          const ToolSpec* spec = catalog.find(c.tool_name);
          if (spec == nullptr || spec->kind != ToolKind::read_only) continue;
          if (args_contain(c.args.json(), want)) source = &ev[r].value;
        }
        if (source == nullptr) continue;
        std::optional<Json> item(std::in_place, *source);
        if (pat->selector) {
          item.reset();
          auto list = walk(*source, split_path(pat->selector->list_path), 0);
          auto key = value_of(*pat->selector->key_expr, ctx);
          if (list && list->is_array() && key) {
            int hits = 0;
            for (const auto& cand : *list) {
              auto kv = cand.is_object() ? cand.find(pat->selector->key_field) : cand.end();
              if (cand.is_object() && kv != cand.end() && same(*kv, *key)) {
                ++hits;
                item = cand;
              }
            }
            if (hits > 1) continue;
          }
        }
        Json obj = Json::object();
        if (pat->mapping.empty()) {
          const FieldSchema* schema = catalog.return_schema(pat->tool);
          if (schema != nullptr) {
            for (const auto& [path, _] : *schema) {
              auto v = item ? walk(*item, split_path(path), 0) : std::nullopt;
              obj[path] = v ? *v : Json();
            }
          }
        } else {
          for (const auto& [target, src] : pat->mapping) {
            auto v = item ? walk(*item, split_path(src), 0) : std::nullopt;
            obj[target] = v ? *v : Json();
          }
        }
        bool complete = std::all_of(need.required_fields.begin(), need.required_fields.end(), [&](const auto& f) {
          auto v = walk(obj, split_path(f), 0);
          return v && !v->is_null();
        });
        if (complete) {
          found = std::move(obj);
          break;
        }
      }
      if (found) {
        resolved[need.id] = std::move(*found);
      } else {
        out.nm = true;
        out.bypassed_reads.push_back(need.canonical_read.tool);
      }
    }
    label.mtcs.push_back(std::move(out));
  }
  return label;
}

/// Gold-annotation layout, with per-MTC detail.
inline Json oracle_labels_to_json(const std::vector<OracleLabel>& labels) {
  Json anns = Json::array();
  for (const auto& l : labels) {
    Json idx = Json::array(), mtcs = Json::array();
    for (const auto& m : l.mtcs) {
      if (m.nm) idx.push_back(m.index);
      mtcs.push_back({{"index", m.index}, {"tool", m.tool}, {"nm", m.nm}, {"bypassed_reads", m.bypassed_reads}});
    }
    anns.push_back({{"id", l.trajectory_id}, {"nm", l.nm()}, {"mtc_indices", idx}, {"mtcs", mtcs}});
  }
  return {{"annotations", anns}};
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write " + p.string());
  out << text << '\n';
}

}  // namespace detail

/// traces/<id>.json, plan.json, labels.json, catalog.json, guards.json
inline void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "traces");
  std::vector<OracleLabel> labels;
  for (const auto& t : corpus.trajectories) {
    detail::write_text(dir / "traces" / (t.id + ".json"), serialize_trajectory(t));
    labels.push_back(oracle_detect(t, corpus.fixture.guards, corpus.fixture.catalog));
  }
  detail::write_text(dir / "plan.json", canonical_dump(plan_to_json(corpus.plan)));
  detail::write_text(dir / "labels.json", canonical_dump(oracle_labels_to_json(labels)));
  detail::write_text(dir / "catalog.json", std::string(airline::kCatalogJson));
  detail::write_text(dir / "guards.json", std::string(airline::kGuardsJson));
}

}  // namespace nearmiss
