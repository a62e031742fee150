#pragma once

// Strict three-valued evaluation of guard expressions.
//
// A path that is absent or null evaluates to Unresolved, which propagates
// through every operator except exists() and the short circuits
// `false && x` and `true || x`.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include "nearmiss/error.hpp"
#include "nearmiss/expr.hpp"
#include "nearmiss/value.hpp"

namespace nearmiss {

/// Fields of a (possibly partially) reconstructed read result, keyed by field path.
/// A null value marks a field no evidence supports.
class PartialObject {
 public:
  std::map<std::string, Json> fields;

  /// Value at `segments[from..]`: exact key first, then the longest stored prefix descended into.
  [[nodiscard]] const Json* lookup(const std::vector<std::string>& segments, std::size_t from = 0) const {
    for (std::size_t end = segments.size(); end > from; --end) {
      std::string key = join_path(std::vector<std::string>(segments.begin() + static_cast<std::ptrdiff_t>(from),
                                                           segments.begin() + static_cast<std::ptrdiff_t>(end)));
      auto it = fields.find(key);
      if (it == fields.end()) continue;
      if (end == segments.size()) return &it->second;
      return find_path(it->second, segments, end);
    }
    return nullptr;
  }

  [[nodiscard]] bool has_value(const std::string& path) const {
    const Json* v = lookup(split_path(path));
    return v != nullptr && !v->is_null();
  }

  [[nodiscard]] Json to_json() const {
    Json out = Json::object();
    for (const auto& [k, v] : fields) out[k] = v;
    return out;
  }

  static PartialObject from_json(const Json& j) {
    PartialObject out;
    if (j.is_object()) {
      for (auto it = j.begin(); it != j.end(); ++it) out.fields.emplace(it.key(), *it);
    }
    return out;
  }

  friend bool operator==(const PartialObject& a, const PartialObject& b) {
    if (a.fields.size() != b.fields.size()) return false;
    for (const auto& [k, v] : a.fields) {
      auto it = b.fields.find(k);
      if (it == b.fields.end() || !canonical_equal(v, it->second)) return false;
    }
    return true;
  }
};

struct Value {
  // Json holds lists and objects only.
  std::variant<bool, std::int64_t, double, std::string, Timestamp, Duration, Json> data;

  friend bool operator==(const Value& a, const Value& b);
};

/// std::nullopt is Unresolved.
using Evaluated = std::optional<Value>;

struct EvalEnv {
  const Json* args = nullptr;                               // args.*
  std::optional<Timestamp> now;                             // meta.now
  const PartialObject* self = nullptr;                      // this.*
  const std::map<std::string, PartialObject>* needs = nullptr;  // need.<id>.*, resolved needs only
};

inline std::string_view kind_name(const Value& v) {
  switch (v.data.index()) {
    case 0: return "boolean";
    case 1: return "integer";
    case 2: return "decimal";
    case 3: return "string";
    case 4: return "timestamp";
    case 5: return "duration";
    default: return std::get<Json>(v.data).is_array() ? "list" : "object";
  }
}

inline Evaluated from_json(const Json& j) {
  switch (j.type()) {
    case Json::value_t::boolean: return Value{j.get<bool>()};
    case Json::value_t::number_integer: return Value{j.get<std::int64_t>()};
    case Json::value_t::number_unsigned: {
      auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(INT64_MAX)) return Value{static_cast<double>(u)};
      return Value{static_cast<std::int64_t>(u)};
    }
    case Json::value_t::number_float: return Value{j.get<double>()};
    case Json::value_t::string: return Value{j.get<std::string>()};
    case Json::value_t::array:
    case Json::value_t::object: return Value{decltype(Value::data)(std::in_place_index<6>, j)};
    default: return std::nullopt;
  }
}

/// Timestamps render as ISO text, durations as milliseconds.
inline Json to_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> Json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Timestamp>) {
          return format_timestamp(x);
        } else if constexpr (std::is_same_v<T, Duration>) {
          return x.count();
        } else {
          return Json(x);
        }
      },
      v.data);
}

namespace detail {

[[noreturn]] inline void type_mismatch(const std::string& what) { throw Error(ErrorCode::TypeMismatch, what); }

inline bool is_numeric(const Value& v) { return v.data.index() == 1 || v.data.index() == 2; }

inline double as_double(const Value& v) {
  return v.data.index() == 1 ? static_cast<double>(std::get<std::int64_t>(v.data)) : std::get<double>(v.data);
}

// Negative, zero or positive; throws on incomparable kinds.
inline int compare_ordered(const Value& a, const Value& b) {
  auto sign = [](auto x, auto y) { return x < y ? -1 : (y < x ? 1 : 0); };
  if (is_numeric(a) && is_numeric(b)) {
    if (a.data.index() == 1 && b.data.index() == 1) {
      return sign(std::get<std::int64_t>(a.data), std::get<std::int64_t>(b.data));
    }
    return sign(as_double(a), as_double(b));
  }
  if (a.data.index() != b.data.index()) {
    type_mismatch(std::string("cannot order ") + std::string(kind_name(a)) + " against " +
                  std::string(kind_name(b)));
  }
  switch (a.data.index()) {
    case 3: return sign(std::get<std::string>(a.data), std::get<std::string>(b.data));
    case 4: return sign(std::get<Timestamp>(a.data), std::get<Timestamp>(b.data));
    case 5: return sign(std::get<Duration>(a.data), std::get<Duration>(b.data));
    default: type_mismatch(std::string("cannot order ") + std::string(kind_name(a)));
  }
}

inline bool equal_values(const Value& a, const Value& b) {
  if (is_numeric(a) && is_numeric(b)) return compare_ordered(a, b) == 0;
  if (a.data.index() != b.data.index()) {
    type_mismatch(std::string("cannot compare ") + std::string(kind_name(a)) + " with " +
                  std::string(kind_name(b)));
  }
  if (a.data.index() == 6) return canonical_equal(std::get<Json>(a.data), std::get<Json>(b.data));
  return a.data == b.data;
}

inline Value arithmetic(BinaryOp op, const Value& a, const Value& b) {
  bool add = op == BinaryOp::add;
  auto ia = a.data.index(), ib = b.data.index();
  if (ia == 1 && ib == 1) {
    std::int64_t out = 0;
    std::int64_t x = std::get<std::int64_t>(a.data), y = std::get<std::int64_t>(b.data);
    bool overflow = add ? __builtin_add_overflow(x, y, &out) : __builtin_sub_overflow(x, y, &out);
    if (overflow) type_mismatch("integer overflow");
    return Value{out};
  }
  if (is_numeric(a) && is_numeric(b)) return Value{add ? as_double(a) + as_double(b) : as_double(a) - as_double(b)};
  if (ia == 4 && ib == 5) {
    auto t = std::get<Timestamp>(a.data);
    auto d = std::get<Duration>(b.data);
    return Value{add ? t + d : t - d};
  }
  if (add && ia == 5 && ib == 4) return Value{std::get<Timestamp>(b.data) + std::get<Duration>(a.data)};
  if (!add && ia == 4 && ib == 4) return Value{Duration{std::get<Timestamp>(a.data) - std::get<Timestamp>(b.data)}};
  if (ia == 5 && ib == 5) {
    auto x = std::get<Duration>(a.data), y = std::get<Duration>(b.data);
    return Value{add ? x + y : x - y};
  }
  type_mismatch(std::string(kind_name(a)) + " " + std::string(to_string(op)) + " " + std::string(kind_name(b)));
}

inline bool require_bool(const Value& v, std::string_view where) {
  if (v.data.index() != 0) type_mismatch(std::string(where) + " expects boolean, got " + std::string(kind_name(v)));
  return std::get<bool>(v.data);
}

inline const Json* resolve_path(const PathNode& p, const EvalEnv& env) {
  const auto& s = p.segments;
  if (s[0] == "args") return env.args == nullptr ? nullptr : find_path(*env.args, s, 1);
  if (s[0] == "this") return env.self == nullptr ? nullptr : env.self->lookup(s, 1);
  if (s[0] == "need") {
    if (env.needs == nullptr) return nullptr;
    auto it = env.needs->find(s[1]);
    if (it == env.needs->end()) return nullptr;
    if (s.size() == 2) return nullptr;  // whole-object reference carries no scalar
    return it->second.lookup(s, 2);
  }
  return nullptr;
}

inline Evaluated eval_path(const PathNode& p, const EvalEnv& env) {
  if (p.segments[0] == "meta") {
    if (p.segments.size() == 2 && p.segments[1] == "now" && env.now) return Value{*env.now};
    return std::nullopt;
  }
  const Json* j = resolve_path(p, env);
  return j == nullptr ? std::nullopt : from_json(*j);
}

inline bool path_exists(const PathNode& p, const EvalEnv& env) {
  if (p.segments[0] == "need" && p.segments.size() == 2) {
    return env.needs != nullptr && env.needs->contains(p.segments[1]);
  }
  return eval_path(p, env).has_value();
}

}  // namespace detail

inline bool operator==(const Value& a, const Value& b) {
  if (a.data.index() != b.data.index()) return false;
  if (a.data.index() == 6) return canonical_equal(std::get<Json>(a.data), std::get<Json>(b.data));
  return a.data == b.data;
}

/// Evaluates `expr` in `env`. Throws Error(TypeMismatch) for ill-typed operands.
inline Evaluated eval_expression(const Expr& expr, const EvalEnv& env) {
  using namespace detail;
  return std::visit(
      [&](const auto& n) -> Evaluated {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, LiteralNode>) {
          return std::visit(
              [](const auto& v) -> Value {
                using V = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<V, DurationLiteral>) {
                  return Value{v.value()};
                } else {
                  return Value{v};
                }
              },
              n.value);
        } else if constexpr (std::is_same_v<T, PathNode>) {
          return eval_path(n, env);
        } else if constexpr (std::is_same_v<T, UnaryNode>) {
          Evaluated v = eval_expression(*n.operand, env);
          if (!v) return std::nullopt;
          return Value{!require_bool(*v, "!")};
        } else if constexpr (std::is_same_v<T, BinaryNode>) {
          if (n.op == BinaryOp::logical_and || n.op == BinaryOp::logical_or) {
            bool is_and = n.op == BinaryOp::logical_and;
            Evaluated lhs = eval_expression(*n.lhs, env);
            if (!lhs) return std::nullopt;
            bool l = require_bool(*lhs, to_string(n.op));
            if (is_and && !l) return Value{false};
            if (!is_and && l) return Value{true};
            Evaluated rhs = eval_expression(*n.rhs, env);
            if (!rhs) return std::nullopt;
            return Value{require_bool(*rhs, to_string(n.op))};
          }
          Evaluated lhs = eval_expression(*n.lhs, env);
          Evaluated rhs = eval_expression(*n.rhs, env);
          if (!lhs || !rhs) return std::nullopt;
          switch (n.op) {
            case BinaryOp::eq: return Value{equal_values(*lhs, *rhs)};
            case BinaryOp::ne: return Value{!equal_values(*lhs, *rhs)};
            case BinaryOp::lt: return Value{compare_ordered(*lhs, *rhs) < 0};
            case BinaryOp::le: return Value{compare_ordered(*lhs, *rhs) <= 0};
            case BinaryOp::gt: return Value{compare_ordered(*lhs, *rhs) > 0};
            case BinaryOp::ge: return Value{compare_ordered(*lhs, *rhs) >= 0};
            default: return arithmetic(n.op, *lhs, *rhs);
          }
        } else {
          if (n.fn == Function::exists) return Value{path_exists(std::get<PathNode>(n.args[0]->node), env)};
          std::vector<Value> args;
          for (const auto& a : n.args) {
            Evaluated v = eval_expression(*a, env);
            if (!v) return std::nullopt;
            args.push_back(std::move(*v));
          }
          switch (n.fn) {
            case Function::ts: {
              if (args[0].data.index() == 4) return args[0];
              if (args[0].data.index() != 3) type_mismatch("ts() expects string, got " + std::string(kind_name(args[0])));
              auto t = parse_timestamp(std::get<std::string>(args[0].data));
              if (!t) type_mismatch("ts(): not an ISO-8601 timestamp: " + std::get<std::string>(args[0].data));
              return Value{*t};
            }
            case Function::len: {
              if (args[0].data.index() != 6 || !std::get<Json>(args[0].data).is_array()) {
                type_mismatch("len() expects list, got " + std::string(kind_name(args[0])));
              }
              return Value{static_cast<std::int64_t>(std::get<Json>(args[0].data).size())};
            }
            case Function::contains: {
              if (args[0].data.index() != 6 || !std::get<Json>(args[0].data).is_array()) {
                type_mismatch("contains() expects list, got " + std::string(kind_name(args[0])));
              }
              for (const auto& item : std::get<Json>(args[0].data)) {
                Evaluated v = from_json(item);
                if (!v) continue;
                bool comparable = (is_numeric(*v) && is_numeric(args[1])) || v->data.index() == args[1].data.index();
                if (comparable && equal_values(*v, args[1])) return Value{true};
              }
              return Value{false};
            }
            default: return std::nullopt;
          }
        }
      },
      expr.node);
}

}  // namespace nearmiss
