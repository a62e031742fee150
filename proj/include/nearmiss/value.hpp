#pragma once

// Tree values, canonical serialization and time arithmetic shared by every module.
//
// Canonical serialization (used for hashing and byte-identical artifacts):
//   * compact, no insignificant whitespace;
//   * object keys sorted by byte value, no duplicates;
//   * integers in plain decimal, decimals in shortest round-trip form
//     (1.50 -> 1.5, 2.0 -> 2.0);
//   * strings UTF-8, only '"', '\\' and control characters escaped.

#include <nlohmann/json.hpp>

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nearmiss/error.hpp"

namespace nearmiss {

using Json = nlohmann::json;

using Duration = std::chrono::milliseconds;
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// Parses JSON text, rejecting duplicate object keys. Failures raise `code`.
inline Json parse_json_text(std::string_view text, ErrorCode code = ErrorCode::MalformedTrace) {
  std::vector<std::set<std::string>> open_objects;
  std::string duplicate;
  Json::parser_callback_t track = [&](int, Json::parse_event_t event, Json& parsed) {
    switch (event) {
      case Json::parse_event_t::object_start:
        open_objects.emplace_back();
        break;
      case Json::parse_event_t::object_end:
        if (!open_objects.empty()) open_objects.pop_back();
        break;
      case Json::parse_event_t::key:
        if (!open_objects.empty() && !open_objects.back().insert(parsed.get<std::string>()).second &&
            duplicate.empty()) {
          duplicate = parsed.get<std::string>();
        }
        break;
      default:
        break;
    }
    return true;
  };
  Json out;
  try {
    out = Json::parse(text.begin(), text.end(), track);
  } catch (const Json::exception& e) {
    throw Error(code, e.what());
  }
  if (!duplicate.empty()) throw Error(code, "duplicate object key '" + duplicate + "'");
  return out;
}

inline std::string canonical_dump(const Json& value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

/// Identity under canonical serialization: 1 and 1.0 differ, key order never matters.
inline bool canonical_equal(const Json& a, const Json& b) {
  if (a.is_number_float() != b.is_number_float()) return false;
  if (a.type() != b.type() && !(a.is_number_integer() && b.is_number_integer())) return false;
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!canonical_equal(a[i], b[i])) return false;
    }
    return true;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (auto it = a.begin(); it != a.end(); ++it) {
      auto other = b.find(it.key());
      if (other == b.end() || !canonical_equal(*it, *other)) return false;
    }
    return true;
  }
  return a == b;
}

inline std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto dot = path.find('.', start);
    out.emplace_back(path.substr(start, dot == std::string_view::npos ? dot : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return out;
}

inline std::string join_path(const std::vector<std::string>& segments, std::size_t from = 0) {
  std::string out;
  for (std::size_t i = from; i < segments.size(); ++i) {
    if (i != from) out += '.';
    out += segments[i];
  }
  return out;
}

/// Navigates object members along `segments`; nullptr when any step is missing.
inline const Json* find_path(const Json& root, const std::vector<std::string>& segments,
                             std::size_t from = 0) {
  const Json* cur = &root;
  for (std::size_t i = from; i < segments.size(); ++i) {
    if (!cur->is_object()) return nullptr;
    auto it = cur->find(segments[i]);
    if (it == cur->end()) return nullptr;
    cur = &*it;
  }
  return cur;
}

inline const Json* find_path(const Json& root, std::string_view dotted) {
  return find_path(root, split_path(dotted));
}

namespace detail {

inline bool read_digits(std::string_view s, std::size_t& pos, std::size_t count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < count; ++i) {
    char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += count;
  out = v;
  return true;
}

inline bool expect(std::string_view s, std::size_t& pos, char c) {
  if (pos >= s.size() || s[pos] != c) return false;
  ++pos;
  return true;
}

}  // namespace detail

/// ISO-8601 date-time: `YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z|+HH:MM|-HH:MM]`.
/// A missing zone designator is read as UTC.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  std::size_t pos = 0;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0, millis = 0;
  if (!detail::read_digits(s, pos, 4, y) || !detail::expect(s, pos, '-') ||
      !detail::read_digits(s, pos, 2, mo) || !detail::expect(s, pos, '-') ||
      !detail::read_digits(s, pos, 2, d)) {
    return std::nullopt;
  }
  if (pos >= s.size() || (s[pos] != 'T' && s[pos] != 't' && s[pos] != ' ')) return std::nullopt;
  ++pos;
  if (!detail::read_digits(s, pos, 2, h) || !detail::expect(s, pos, ':') ||
      !detail::read_digits(s, pos, 2, mi)) {
    return std::nullopt;
  }
  if (pos < s.size() && s[pos] == ':') {
    ++pos;
    if (!detail::read_digits(s, pos, 2, sec)) return std::nullopt;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      std::size_t digits = 0;
      int scale = 100;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
        if (digits < 3) millis += (s[pos] - '0') * scale;
        scale /= 10;
        ++digits;
        ++pos;
      }
      if (digits == 0) return std::nullopt;
    }
  }
  minutes offset{0};
  if (pos < s.size()) {
    char z = s[pos];
    if (z == 'Z' || z == 'z') {
      ++pos;
    } else if (z == '+' || z == '-') {
      ++pos;
      int oh = 0, om = 0;
      if (!detail::read_digits(s, pos, 2, oh)) return std::nullopt;
      if (pos < s.size() && s[pos] == ':') ++pos;
      if (!detail::read_digits(s, pos, 2, om)) return std::nullopt;
      if (oh > 23 || om > 59) return std::nullopt;
      offset = hours{oh} + minutes{om};
      if (z == '-') offset = -offset;
    } else {
      return std::nullopt;
    }
  }
  if (pos != s.size()) return std::nullopt;
  if (h > 23 || mi > 59 || sec > 59) return std::nullopt;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  Timestamp t = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{millis};
  return t - offset;
}

/// Renders UTC as `YYYY-MM-DDTHH:MM:SSZ`, with `.mmm` only when sub-second.
inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  auto rest = t - day_point;
  auto h = duration_cast<hours>(rest);
  rest -= h;
  auto m = duration_cast<minutes>(rest);
  rest -= m;
  auto s = duration_cast<seconds>(rest);
  rest -= s;
  char buf[40];
  int n = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                        static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                        static_cast<int>(h.count()), static_cast<int>(m.count()),
                        static_cast<int>(s.count()));
  std::string out(buf, static_cast<std::size_t>(n));
  if (rest.count() != 0) {
    std::snprintf(buf, sizeof buf, ".%03d", static_cast<int>(rest.count()));
    out += buf;
  }
  out += 'Z';
  return out;
}

/// Shortest round-trip fixed-point text; always contains a '.'.
inline std::string format_decimal(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  std::string out(buf, res.ptr);
  if (out.find('.') == std::string::npos) out += ".0";
  return out;
}

}  // namespace nearmiss
