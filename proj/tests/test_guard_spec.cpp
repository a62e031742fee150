#include <algorithm>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace nearmiss;
using nmtest::fx;

namespace {

std::vector<Diagnostic> diagnose(const Json& doc) {
  try {
    parse_guard_spec(doc.dump(), fx().catalog);
  } catch (const SpecError& e) {
    return e.diagnostics();
  }
  return {};
}

bool has(const std::vector<Diagnostic>& ds, DiagCode code) {
  return std::any_of(ds.begin(), ds.end(), [&](const Diagnostic& d) { return d.code == code; });
}

std::string dump(const std::vector<Diagnostic>& ds) {
  std::string out;
  for (const auto& d : ds) out += format_diagnostic(d) + "\n";
  return out;
}

Json cancel_need() {
  return {{"id", "res"},
          {"read", {{"tool", "get_reservation_details"}, {"bindings", {{"reservation_id", "args.reservation_id"}}}}},
          {"required_fields", {"created_at"}},
          {"check", "meta.now - ts(this.created_at) < 24h"}};
}

Json one_guard(const std::string& tool, const std::vector<Json>& needs) {
  return {{"guards", {{{"tool", tool}, {"needs", Json(needs)}}}}};
}

}  // namespace

TEST(GuardSpec, FixtureValidatesCleanly) {
  const auto& f = fx();
  EXPECT_TRUE(validate_spec(f.guards, f.catalog).empty());
  EXPECT_EQ(f.guards.guards.size(), 4u);
  const Guard& book = f.guards.guards.at("book_reservation");
  ASSERT_EQ(book.needs.size(), 2u);
  EXPECT_EQ(book.needs[0].alternatives.size(), 2u);
  EXPECT_TRUE(book.needs[0].alternatives[1].selector.has_value());
  EXPECT_TRUE(f.guards.guards.at("cancel_reservation").uses_meta_now());
  EXPECT_FALSE(book.uses_meta_now());
}

TEST(GuardSpec, MinimalGuardIsValid) {
  auto ds = diagnose(one_guard("cancel_reservation", {cancel_need()}));
  EXPECT_TRUE(ds.empty()) << dump(ds);
}

TEST(GuardSpec, UnknownAndReadOnlyGuardedTools) {
  EXPECT_TRUE(has(diagnose(one_guard("rebook_everything", {cancel_need()})), DiagCode::UnknownTool));
  Json n = {{"id", "u"},
            {"read", {{"tool", "get_user_details"}, {"bindings", {{"user_id", "args.user_id"}}}}},
            {"required_fields", {"user_id"}}};
  EXPECT_TRUE(has(diagnose(one_guard("get_reservation_details", {n})), DiagCode::NotMutating));
}

TEST(GuardSpec, ReadPatternMustBeReadOnly) {
  Json n = cancel_need();
  n["read"]["tool"] = "book_reservation";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::NotReadOnly));
}

TEST(GuardSpec, Bindings) {
  Json missing = cancel_need();
  missing["read"]["bindings"] = Json::object();
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {missing})), DiagCode::MissingBinding));

  Json extra = cancel_need();
  extra["read"]["bindings"]["flavour"] = "args.reservation_id";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {extra})), DiagCode::UnknownParam));

  Json typed = cancel_need();
  typed["read"]["bindings"]["reservation_id"] = "3";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {typed})), DiagCode::TypeError));

  Json bad_arg = cancel_need();
  bad_arg["read"]["bindings"]["reservation_id"] = "args.nope";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {bad_arg})), DiagCode::UnknownField));
}

TEST(GuardSpec, NeedIdsAndRequiredFields) {
  Json a = cancel_need();
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {a, a})), DiagCode::DuplicateNeedId));

  Json empty = cancel_need();
  empty["required_fields"] = Json::array();
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {empty})), DiagCode::EmptyRequiredFields));

  Json unknown = cancel_need();
  unknown["required_fields"] = {"created_on"};
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {unknown})), DiagCode::UnknownField));
}

TEST(GuardSpec, AlternativesMustMapRequiredFields) {
  Json n = cancel_need();
  n["alternatives"] = {{{"tool", "get_reservation_timestamp"},
                        {"bindings", {{"reservation_id", "args.reservation_id"}}},
                        {"mapping", {{"reservation_id", "reservation_id"}}}}};
  auto ds = diagnose(one_guard("cancel_reservation", {n}));
  EXPECT_TRUE(has(ds, DiagCode::UnmappedRequiredField)) << dump(ds);

  n["alternatives"][0]["mapping"] = {{"created_at", "stamp"}};
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::UnknownField));

  n["alternatives"][0]["mapping"] = {{"created_at", "timestamp"}, {"colour", "timestamp"}};
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::UnknownField));

  n["alternatives"][0]["mapping"] = {{"created_at", "timestamp"}};
  EXPECT_TRUE(diagnose(one_guard("cancel_reservation", {n})).empty());
}

TEST(GuardSpec, NeedReferencesMustPointBackwards) {
  Json first = {{"id", "reservation"},
                {"read", {{"tool", "get_reservation_details"}, {"bindings", {{"reservation_id", "args.reservation_id"}}}}},
                {"required_fields", {"user_id"}}};
  Json second = {{"id", "payment"},
                 {"read", {{"tool", "get_user_details"}, {"bindings", {{"user_id", "need.reservation.user_id"}}}}},
                 {"required_fields", {"payment_methods"}}};
  EXPECT_TRUE(diagnose(one_guard("update_reservation_flights", {first, second})).empty());
  EXPECT_TRUE(has(diagnose(one_guard("update_reservation_flights", {second, first})), DiagCode::CyclicNeedDependency));

  Json self_ref = second;
  self_ref["read"]["bindings"]["user_id"] = "need.payment.user_id";
  EXPECT_TRUE(has(diagnose(one_guard("update_reservation_flights", {self_ref})), DiagCode::CyclicNeedDependency));

  Json ghost = second;
  ghost["read"]["bindings"]["user_id"] = "need.ghost.user_id";
  EXPECT_TRUE(has(diagnose(one_guard("update_reservation_flights", {ghost})), DiagCode::InvalidReference));
}

TEST(GuardSpec, ExpressionDiagnostics) {
  Json n = cancel_need();
  n["check"] = "meta.now - ts(this.created_at) <";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::ExprSyntax));
  n["check"] = "recent(this.created_at)";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::UnknownFunction));
  n["check"] = "this.created_at + 1";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::TypeError));
  n["check"] = "meta.today == 1";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::InvalidReference));
  n["check"] = "this.status";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::TypeError));
  n["check"] = "this.color == \"x\"";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::UnknownField));
  n = cancel_need();
  n["applies_if"] = "this.status == \"x\"";
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {n})), DiagCode::InvalidReference));
}

TEST(GuardSpec, Selectors) {
  Json n = {{"id", "fs"},
            {"read",
             {{"tool", "search_direct_flights"},
              {"bindings", {{"origin", "args.origin"}, {"destination", "args.destination"}, {"date", "args.date"}}},
              {"selector", {{"list_path", "flights"}, {"key_field", "flight_number"}, {"key_expr", "args.flight_number"}}}}},
            {"required_fields", {"flights"}}};
  EXPECT_TRUE(has(diagnose(one_guard("book_reservation", {n})), DiagCode::UnmappedRequiredField));
  n["read"]["selector"]["list_path"] = "planes";
  EXPECT_TRUE(has(diagnose(one_guard("book_reservation", {n})), DiagCode::UnknownField));
}

TEST(GuardSpec, StructuralErrors) {
  EXPECT_TRUE(has(diagnose(Json::array()), DiagCode::SpecSyntax));
  EXPECT_TRUE(has(diagnose({{"guards", {{{"tool", "cancel_reservation"}}}}}), DiagCode::SpecSyntax));
  Json no_fields = cancel_need();
  no_fields.erase("required_fields");
  EXPECT_TRUE(has(diagnose(one_guard("cancel_reservation", {no_fields})), DiagCode::SpecSyntax));
  Json twice = {{"guards", {{{"tool", "cancel_reservation"}, {"needs", {cancel_need()}}},
                            {{"tool", "cancel_reservation"}, {"needs", {cancel_need()}}}}}};
  EXPECT_TRUE(has(diagnose(twice), DiagCode::DuplicateGuard));
  try {
    parse_guard_spec("{oops", fx().catalog);
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
    ASSERT_EQ(e.diagnostics().size(), 1u);
    EXPECT_EQ(e.diagnostics()[0].code, DiagCode::SpecSyntax);
  }
}

TEST(GuardSpec, ReportsEveryProblemAtOnce) {
  Json bad = cancel_need();
  bad["read"]["tool"] = "get_nothing";
  bad["required_fields"] = Json::array();
  Json doc = {{"guards", {{{"tool", "rebook_everything"}, {"needs", {bad}}}}}};
  auto ds = diagnose(doc);
  EXPECT_TRUE(has(ds, DiagCode::UnknownTool));
  EXPECT_TRUE(has(ds, DiagCode::EmptyRequiredFields));
  EXPECT_GE(ds.size(), 3u) << dump(ds);
  for (const auto& d : ds) EXPECT_FALSE(d.location.empty());
}
