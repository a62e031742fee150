#pragma once

// Guard expression language.
//
//   or      := and ('||' and)*
//   and     := cmp ('&&' cmp)*
//   cmp     := add (('=='|'!='|'<'|'<='|'>'|'>=') add)?
//   add     := unary (('+'|'-') unary)*
//   unary   := '!' unary | primary
//   primary := INT | DEC | DURATION | STRING | 'true' | 'false'
//            | path | fn '(' args ')' | '(' or ')'
//   path    := ('args'|'meta'|'this'|'need') ('.' IDENT)+
//   fn      := 'ts' | 'len' | 'contains' | 'exists'
//
// Durations are an integer followed by h, m or s (24h, 30m, 90s).

#include <cctype>
#include <charconv>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nearmiss/error.hpp"
#include "nearmiss/value.hpp"

namespace nearmiss {

enum class DurationUnit { hours, minutes, seconds };

struct DurationLiteral {
  std::int64_t amount = 0;
  DurationUnit unit = DurationUnit::hours;

  [[nodiscard]] Duration value() const {
    switch (unit) {
      case DurationUnit::hours: return std::chrono::hours{amount};
      case DurationUnit::minutes: return std::chrono::minutes{amount};
      case DurationUnit::seconds: return std::chrono::seconds{amount};
    }
    return Duration{0};
  }

  friend bool operator==(const DurationLiteral&, const DurationLiteral&) = default;
};

using LiteralValue = std::variant<bool, std::int64_t, double, std::string, DurationLiteral>;

enum class UnaryOp { logical_not };

enum class BinaryOp { logical_or, logical_and, eq, ne, lt, le, gt, ge, add, sub };

enum class Function { ts, len, contains, exists };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct LiteralNode {
  LiteralValue value;
};

struct PathNode {
  std::vector<std::string> segments;  // segments[0] is the root: args, meta, this or need
};

struct UnaryNode {
  UnaryOp op = UnaryOp::logical_not;
  ExprPtr operand;
};

struct BinaryNode {
  BinaryOp op = BinaryOp::logical_or;
  ExprPtr lhs;
  ExprPtr rhs;
};

struct CallNode {
  Function fn = Function::ts;
  std::vector<ExprPtr> args;
};

struct Expr {
  std::variant<LiteralNode, PathNode, UnaryNode, BinaryNode, CallNode> node;
};

inline ExprPtr make_literal(LiteralValue v) { return std::make_shared<Expr>(Expr{LiteralNode{std::move(v)}}); }
inline ExprPtr make_path(std::vector<std::string> segments) {
  return std::make_shared<Expr>(Expr{PathNode{std::move(segments)}});
}
inline ExprPtr make_unary(UnaryOp op, ExprPtr operand) {
  return std::make_shared<Expr>(Expr{UnaryNode{op, std::move(operand)}});
}
inline ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs) {
  return std::make_shared<Expr>(Expr{BinaryNode{op, std::move(lhs), std::move(rhs)}});
}
inline ExprPtr make_call(Function fn, std::vector<ExprPtr> args) {
  return std::make_shared<Expr>(Expr{CallNode{fn, std::move(args)}});
}

bool operator==(const Expr& a, const Expr& b);

inline bool same_expr(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  return *a == *b;
}

inline bool operator==(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& lhs) -> bool {
        using T = std::decay_t<decltype(lhs)>;
        const auto& rhs = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, LiteralNode>) {
          return lhs.value == rhs.value;
        } else if constexpr (std::is_same_v<T, PathNode>) {
          return lhs.segments == rhs.segments;
        } else if constexpr (std::is_same_v<T, UnaryNode>) {
          return lhs.op == rhs.op && same_expr(lhs.operand, rhs.operand);
        } else if constexpr (std::is_same_v<T, BinaryNode>) {
          return lhs.op == rhs.op && same_expr(lhs.lhs, rhs.lhs) && same_expr(lhs.rhs, rhs.rhs);
        } else {
          if (lhs.fn != rhs.fn || lhs.args.size() != rhs.args.size()) return false;
          for (std::size_t i = 0; i < lhs.args.size(); ++i) {
            if (!same_expr(lhs.args[i], rhs.args[i])) return false;
          }
          return true;
        }
      },
      a.node);
}

inline std::string_view to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::logical_or: return "||";
    case BinaryOp::logical_and: return "&&";
    case BinaryOp::eq: return "==";
    case BinaryOp::ne: return "!=";
    case BinaryOp::lt: return "<";
    case BinaryOp::le: return "<=";
    case BinaryOp::gt: return ">";
    case BinaryOp::ge: return ">=";
    case BinaryOp::add: return "+";
    case BinaryOp::sub: return "-";
  }
  return "?";
}

inline std::string_view to_string(Function fn) {
  switch (fn) {
    case Function::ts: return "ts";
    case Function::len: return "len";
    case Function::contains: return "contains";
    case Function::exists: return "exists";
  }
  return "?";
}

inline std::size_t arity(Function fn) { return fn == Function::contains ? 2 : 1; }

// Binding strength: higher binds tighter.
inline int precedence(BinaryOp op) {
  switch (op) {
    case BinaryOp::logical_or: return 1;
    case BinaryOp::logical_and: return 2;
    case BinaryOp::add:
    case BinaryOp::sub: return 4;
    default: return 3;
  }
}

inline bool is_comparison(BinaryOp op) { return precedence(op) == 3; }

inline bool is_path_root(std::string_view s) { return s == "args" || s == "meta" || s == "this" || s == "need"; }

namespace detail {

enum class Tok { end, integer, decimal, duration, string, ident, op, lparen, rparen, comma, dot };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      if (pos_ >= src_.size()) {
        out.push_back({Tok::end, "", pos_});
        return out;
      }
      out.push_back(next());
    }
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ExprSyntax, msg + " at offset " + std::to_string(pos_));
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  Token next() {
    std::size_t start = pos_;
    char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) return number(start);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
      return {Tok::ident, std::string(src_.substr(start, pos_ - start)), start};
    }
    if (c == '"') return string(start);
    ++pos_;
    switch (c) {
      case '(': return {Tok::lparen, "(", start};
      case ')': return {Tok::rparen, ")", start};
      case ',': return {Tok::comma, ",", start};
      case '.': return {Tok::dot, ".", start};
      case '+':
      case '-': return {Tok::op, std::string(1, c), start};
      case '&':
      case '|':
        if (pos_ < src_.size() && src_[pos_] == c) {
          ++pos_;
          return {Tok::op, std::string(2, c), start};
        }
        fail(std::string("expected '") + c + c + "'");
      case '=':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          ++pos_;
          return {Tok::op, "==", start};
        }
        fail("expected '=='");
      case '!':
      case '<':
      case '>':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          ++pos_;
          return {Tok::op, std::string(1, c) + "=", start};
        }
        return {Tok::op, std::string(1, c), start};
      default:
        pos_ = start;
        fail(std::string("unexpected character '") + c + "'");
    }
  }

  Token number(std::size_t start) {
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ + 1 < src_.size() && src_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
      ++pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      return {Tok::decimal, std::string(src_.substr(start, pos_ - start)), start};
    }
    if (pos_ < src_.size() && (src_[pos_] == 'h' || src_[pos_] == 'm' || src_[pos_] == 's')) {
      ++pos_;
      if (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        fail("invalid duration unit");
      }
      return {Tok::duration, std::string(src_.substr(start, pos_ - start)), start};
    }
    if (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      fail("invalid numeric literal");
    }
    return {Tok::integer, std::string(src_.substr(start, pos_ - start)), start};
  }

  Token string(std::size_t start) {
    ++pos_;
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) fail("unterminated string");
      char c = src_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= src_.size()) fail("unterminated escape");
      char e = src_[pos_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail(std::string("unknown escape '\\") + e + "'");
      }
    }
    return {Tok::string, out, start};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  ExprPtr parse() {
    ExprPtr e = parse_or();
    if (peek().kind != Tok::end) fail("unexpected '" + peek().text + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ExprSyntax, msg + " at offset " + std::to_string(peek().pos));
  }

  const Token& peek() const { return toks_[pos_]; }
  const Token& take() { return toks_[pos_++]; }

  bool accept_op(std::string_view op) {
    if (peek().kind == Tok::op && peek().text == op) {
      ++pos_;
      return true;
    }
    return false;
  }

  ExprPtr parse_or() {
    ExprPtr lhs = parse_and();
    while (accept_op("||")) lhs = make_binary(BinaryOp::logical_or, lhs, parse_and());
    return lhs;
  }

  ExprPtr parse_and() {
    ExprPtr lhs = parse_cmp();
    while (accept_op("&&")) lhs = make_binary(BinaryOp::logical_and, lhs, parse_cmp());
    return lhs;
  }

  ExprPtr parse_cmp() {
    ExprPtr lhs = parse_add();
    static constexpr std::pair<std::string_view, BinaryOp> kOps[] = {
        {"==", BinaryOp::eq}, {"!=", BinaryOp::ne}, {"<=", BinaryOp::le},
        {">=", BinaryOp::ge}, {"<", BinaryOp::lt},  {">", BinaryOp::gt}};
    for (const auto& [text, op] : kOps) {
      if (accept_op(text)) {
        ExprPtr rhs = parse_add();
        if (peek().kind == Tok::op && precedence_of(peek().text) == 3) fail("comparisons do not chain");
        return make_binary(op, lhs, rhs);
      }
    }
    return lhs;
  }

  static int precedence_of(std::string_view op) {
    if (op == "==" || op == "!=" || op == "<" || op == "<=" || op == ">" || op == ">=") return 3;
    return 0;
  }

  ExprPtr parse_add() {
    ExprPtr lhs = parse_unary();
    while (true) {
      if (accept_op("+")) {
        lhs = make_binary(BinaryOp::add, lhs, parse_unary());
      } else if (accept_op("-")) {
        lhs = make_binary(BinaryOp::sub, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_unary() {
    if (accept_op("!")) return make_unary(UnaryOp::logical_not, parse_unary());
    return parse_primary();
  }

  ExprPtr parse_primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::integer: {
        take();
        std::int64_t v = 0;
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (res.ec != std::errc{}) fail("integer literal out of range");
        return make_literal(v);
      }
      case Tok::decimal: {
        take();
        double v = 0;
        std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        return make_literal(v);
      }
      case Tok::duration: {
        take();
        DurationLiteral d;
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size() - 1, d.amount);
        if (res.ec != std::errc{}) fail("duration literal out of range");
        char unit = t.text.back();
        d.unit = unit == 'h' ? DurationUnit::hours : unit == 'm' ? DurationUnit::minutes : DurationUnit::seconds;
        return make_literal(d);
      }
      case Tok::string:
        take();
        return make_literal(t.text);
      case Tok::lparen: {
        take();
        ExprPtr inner = parse_or();
        if (peek().kind != Tok::rparen) fail("expected ')'");
        take();
        return inner;
      }
      case Tok::ident:
        return parse_ident();
      case Tok::end:
        fail("unexpected end of expression");
      default:
        fail("unexpected '" + t.text + "'");
    }
  }

  ExprPtr parse_ident() {
    Token t = take();
    if (t.text == "true") return make_literal(true);
    if (t.text == "false") return make_literal(false);
    if (peek().kind == Tok::lparen) {
      Function fn{};
      if (t.text == "ts") {
        fn = Function::ts;
      } else if (t.text == "len") {
        fn = Function::len;
      } else if (t.text == "contains") {
        fn = Function::contains;
      } else if (t.text == "exists") {
        fn = Function::exists;
      } else {
        throw Error(ErrorCode::UnknownFunction, "unknown function '" + t.text + "'");
      }
      take();
      std::vector<ExprPtr> args;
      if (peek().kind != Tok::rparen) {
        args.push_back(parse_or());
        while (peek().kind == Tok::comma) {
          take();
          args.push_back(parse_or());
        }
      }
      if (peek().kind != Tok::rparen) fail("expected ')' after arguments");
      take();
      if (args.size() != arity(fn)) {
        fail(std::string(to_string(fn)) + " takes " + std::to_string(arity(fn)) + " argument(s)");
      }
      if (fn == Function::exists && !std::holds_alternative<PathNode>(args[0]->node)) {
        fail("exists() takes a field path");
      }
      return make_call(fn, std::move(args));
    }
    if (!is_path_root(t.text)) fail("unknown identifier '" + t.text + "'");
    std::vector<std::string> segments{t.text};
    while (peek().kind == Tok::dot) {
      take();
      if (peek().kind != Tok::ident) fail("expected field name after '.'");
      segments.push_back(take().text);
    }
    if (segments.size() < 2) fail("path '" + t.text + "' needs a field");
    if (segments[0] == "need" && segments.size() < 2) fail("need path needs an id");
    return make_path(std::move(segments));
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

inline void print(const Expr& e, std::string& out);

// Wraps `child` in parentheses when printing it bare would reparse differently.
inline void print_operand(const ExprPtr& child, int parent_prec, bool right_side, std::string& out) {
  bool wrap = false;
  if (const auto* b = std::get_if<BinaryNode>(&child->node)) {
    int p = precedence(b->op);
    wrap = p < parent_prec || (p == parent_prec && (right_side || parent_prec == 3));
  }
  if (wrap) out += '(';
  print(*child, out);
  if (wrap) out += ')';
}

inline void print(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, LiteralNode>) {
          std::visit(
              [&](const auto& v) {
                using V = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<V, bool>) {
                  out += v ? "true" : "false";
                } else if constexpr (std::is_same_v<V, std::int64_t>) {
                  out += std::to_string(v);
                } else if constexpr (std::is_same_v<V, double>) {
                  out += format_decimal(v);
                } else if constexpr (std::is_same_v<V, std::string>) {
                  out += quote(v);
                } else {
                  out += std::to_string(v.amount);
                  out += v.unit == DurationUnit::hours ? 'h' : v.unit == DurationUnit::minutes ? 'm' : 's';
                }
              },
              n.value);
        } else if constexpr (std::is_same_v<T, PathNode>) {
          out += join_path(n.segments);
        } else if constexpr (std::is_same_v<T, UnaryNode>) {
          out += '!';
          bool wrap = std::holds_alternative<BinaryNode>(n.operand->node);
          if (wrap) out += '(';
          print(*n.operand, out);
          if (wrap) out += ')';
        } else if constexpr (std::is_same_v<T, BinaryNode>) {
          int p = precedence(n.op);
          print_operand(n.lhs, p, false, out);
          out += ' ';
          out += to_string(n.op);
          out += ' ';
          print_operand(n.rhs, p, true, out);
        } else {
          out += to_string(n.fn);
          out += '(';
          for (std::size_t i = 0; i < n.args.size(); ++i) {
            if (i != 0) out += ", ";
            print(*n.args[i], out);
          }
          out += ')';
        }
      },
      e.node);
}

}  // namespace detail

inline ExprPtr parse_expression(std::string_view text) {
  return detail::Parser(detail::Lexer(text).run()).parse();
}

inline std::string print_expression(const Expr& e) {
  std::string out;
  detail::print(e, out);
  return out;
}

/// Calls `fn` on every path node, depth first.
template <typename Fn>
void for_each_path(const Expr& e, Fn&& fn) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, PathNode>) {
          fn(n);
        } else if constexpr (std::is_same_v<T, UnaryNode>) {
          for_each_path(*n.operand, fn);
        } else if constexpr (std::is_same_v<T, BinaryNode>) {
          for_each_path(*n.lhs, fn);
          for_each_path(*n.rhs, fn);
        } else if constexpr (std::is_same_v<T, CallNode>) {
          for (const auto& a : n.args) for_each_path(*a, fn);
        }
      },
      e.node);
}

}  // namespace nearmiss
