#include <gtest/gtest.h>

#include "support.hpp"

using namespace nearmiss;
using nmtest::fx;
using nmtest::TraceBuilder;

TEST(CanonicalJson, SortsKeysAndIsCompact) {
  Json j = parse_json_text(R"({ "b": 1, "a": [true, null, 1.5], "c": {"z": "x", "y": 2.0} })");
  EXPECT_EQ(canonical_dump(j), R"({"a":[true,null,1.5],"b":1,"c":{"y":2.0,"z":"x"}})");
}

TEST(CanonicalJson, RejectsDuplicateKeys) {
  try {
    parse_json_text(R"({"a": 1, "b": {"x": 1, "x": 2}})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedTrace);
  }
  EXPECT_NO_THROW(parse_json_text(R"({"a": {"x": 1}, "b": {"x": 2}})"));
}

TEST(CanonicalJson, IntegerAndDecimalDiffer) {
  EXPECT_FALSE(canonical_equal(Json(1), Json(1.0)));
  EXPECT_TRUE(canonical_equal(Json(1), Json(static_cast<unsigned>(1))));
  EXPECT_TRUE(canonical_equal(parse_json_text(R"({"a":1,"b":2})"), parse_json_text(R"({"b":2,"a":1})")));
}

TEST(CanonicalJson, DecimalText) {
  EXPECT_EQ(format_decimal(1.5), "1.5");
  EXPECT_EQ(format_decimal(2.0), "2.0");
  EXPECT_EQ(format_decimal(0.1), "0.1");
}

TEST(Paths, SplitJoinFind) {
  EXPECT_EQ(split_path("a.b.c"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(join_path({"a", "b", "c"}, 1), "b.c");
  Json j = {{"a", {{"b", 3}}}};
  ASSERT_NE(find_path(j, "a.b"), nullptr);
  EXPECT_EQ(*find_path(j, "a.b"), 3);
  EXPECT_EQ(find_path(j, "a.c"), nullptr);
  EXPECT_EQ(find_path(j, "a.b.c"), nullptr);
}

TEST(Timestamps, ParseVariants) {
  auto base = parse_timestamp("2024-05-15T12:00:00Z");
  ASSERT_TRUE(base);
  EXPECT_EQ(parse_timestamp("2024-05-15T12:00:00"), base);
  EXPECT_EQ(parse_timestamp("2024-05-15 12:00"), base);
  EXPECT_EQ(parse_timestamp("2024-05-15T14:00:00+02:00"), base);
  EXPECT_EQ(parse_timestamp("2024-05-15T07:00:00-0500"), base);
  EXPECT_EQ(*parse_timestamp("2024-05-15T12:00:00.250Z") - *base, std::chrono::milliseconds(250));
  EXPECT_FALSE(parse_timestamp("2024-02-30T00:00:00Z"));
  EXPECT_FALSE(parse_timestamp("2024-05-15"));
  EXPECT_FALSE(parse_timestamp("yesterday"));
  EXPECT_FALSE(parse_timestamp("2024-05-15T25:00:00Z"));
}

TEST(Timestamps, FormatRoundTrip) {
  auto t = *parse_timestamp("2024-05-15T03:04:05Z");
  EXPECT_EQ(format_timestamp(t), "2024-05-15T03:04:05Z");
  EXPECT_EQ(format_timestamp(t + std::chrono::milliseconds(7)), "2024-05-15T03:04:05.007Z");
  EXPECT_EQ(parse_timestamp(format_timestamp(t)), t);
}

TEST(Catalog, ParsesFixture) {
  const auto& c = fx().catalog;
  EXPECT_EQ(c.tools.size(), 10u);
  ASSERT_NE(c.find("get_flight_status"), nullptr);
  ASSERT_NE(c.find("get_flight_instance"), nullptr);
  EXPECT_EQ(c.find("cancel_reservation")->kind, ToolKind::mutating);
  ASSERT_NE(c.return_schema("get_reservation_details"), nullptr);
  EXPECT_EQ(c.return_schema("get_reservation_details")->at("created_at"), TypeTag::timestamp);
  EXPECT_EQ(c.find("nope"), nullptr);
}

TEST(Catalog, RoundTrip) {
  const auto& c = fx().catalog;
  Json j = catalog_to_json(c);
  ToolCatalog again = parse_catalog_json(j);
  EXPECT_EQ(canonical_dump(catalog_to_json(again)), canonical_dump(j));
}

TEST(Catalog, Malformed) {
  auto code_of = [](const char* text) {
    try {
      parse_catalog(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidConfig;
  };
  EXPECT_EQ(code_of("[]"), ErrorCode::MalformedCatalog);
  EXPECT_EQ(code_of(R"({"tools": [{"name": "r", "kind": "read_only", "params": []}]})"), ErrorCode::MalformedCatalog);
  EXPECT_EQ(code_of(R"({"tools": [{"name": "r", "kind": "sideways", "params": []}]})"), ErrorCode::MalformedCatalog);
  EXPECT_EQ(code_of("{not json"), ErrorCode::MalformedCatalog);
}

TEST(Args, CanonicalizeIgnoresKeyOrder) {
  ArgMap a = canonicalize_args(parse_json_text(R"({"x": 1, "y": "z"})"));
  ArgMap b = canonicalize_args(parse_json_text(R"({"y": "z", "x": 1})"));
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.size(), 2u);
  try {
    canonicalize_args(Json::array());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotAnObject);
  }
}

TEST(Trace, ParsesAndLinks) {
  Trajectory t = TraceBuilder("t1")
                     .user("cancel please")
                     .call("get_reservation_details", {{"reservation_id", "R1"}}, nmtest::reservation("R1", "x"))
                     .call("cancel_reservation", {{"reservation_id", "R1"}}, {{"status", "cancelled"}})
                     .build();
  ASSERT_EQ(t.events.size(), 5u);
  EXPECT_EQ(t.events[1].linked, 2u);
  EXPECT_EQ(t.events[2].linked, 1u);
  EXPECT_EQ(t.events[2].tool_name, "get_reservation_details");
  auto kinds = classify_tool_calls(t, fx().catalog);
  ASSERT_EQ(kinds.size(), 2u);
  EXPECT_EQ(kinds[0], std::make_pair(std::size_t{1}, ToolKind::read_only));
  EXPECT_EQ(kinds[1], std::make_pair(std::size_t{3}, ToolKind::mutating));
}

TEST(Trace, StringArgumentsAreDecoded) {
  Json doc = {{"id", "t"},
              {"events",
               {{{"kind", "tool_call"}, {"call_id", "a"}, {"name", "get_user_details"},
                 {"arguments", R"({"user_id": "u1"})"}}}}};
  Trajectory t = parse_trajectory_json(doc, fx().catalog);
  EXPECT_EQ(*t.events[0].args.find("user_id"), "u1");
}

TEST(Trace, RoundTripThroughCanonicalText) {
  Trajectory t = TraceBuilder("t1")
                     .user("hello")
                     .call("get_user_details", {{"user_id", "u1"}}, {{"user_id", "u1"}})
                     .call("get_flight_status", {{"flight_number", "HAT1"}, {"date", "2024-05-20"}}, "oops", true)
                     .build();
  std::string text = serialize_trajectory(t);
  Trajectory again = parse_trajectory(text, fx().catalog);
  EXPECT_TRUE(again == t);
  EXPECT_EQ(serialize_trajectory(again), text);
}

TEST(Trace, Errors) {
  auto code_of = [](const Json& doc) {
    try {
      parse_trajectory_json(doc, fx().catalog);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidConfig;
  };
  Json call = {{"kind", "tool_call"}, {"call_id", "a"}, {"name", "get_user_details"}, {"arguments", Json::object()}};
  Json result = {{"kind", "tool_result"}, {"call_id", "a"}, {"value", 1}};
  EXPECT_EQ(code_of({{"id", "t"}, {"events", {result}}}), ErrorCode::DanglingResult);
  EXPECT_EQ(code_of({{"id", "t"}, {"events", {call, call}}}), ErrorCode::MalformedTrace);
  EXPECT_EQ(code_of({{"id", "t"}, {"events", {call, result, result}}}), ErrorCode::MalformedTrace);
  Json unknown = call;
  unknown["name"] = "teleport";
  EXPECT_EQ(code_of({{"id", "t"}, {"events", {unknown}}}), ErrorCode::UnknownTool);
  Json bad_args = call;
  bad_args["arguments"] = Json::array();
  EXPECT_EQ(code_of({{"id", "t"}, {"events", {bad_args}}}), ErrorCode::MalformedTrace);
  EXPECT_EQ(code_of({{"events", Json::array()}}), ErrorCode::MalformedTrace);
  EXPECT_EQ(code_of({{"id", "t"}, {"events", {{{"kind", "shout"}}}}}), ErrorCode::MalformedTrace);
  EXPECT_EQ(code_of({{"id", "t"}, {"reference_time", "noon"}, {"events", Json::array()}}), ErrorCode::MalformedTrace);
  Json misindexed = call;
  misindexed["index"] = 3;
  EXPECT_EQ(code_of({{"id", "t"}, {"events", {misindexed}}}), ErrorCode::MalformedTrace);
}

TEST(PriorResults, OnlyCompletedBeforeIndex) {
  // call c0 completes after the mutating call is issued
  Json doc = {{"id", "t"},
              {"events",
               {{{"kind", "tool_call"}, {"call_id", "r"}, {"name", "get_user_details"}, {"arguments", {{"user_id", "u"}}}},
                {{"kind", "tool_call"}, {"call_id", "m"}, {"name", "cancel_reservation"}, {"arguments", {{"reservation_id", "R"}}}},
                {{"kind", "tool_result"}, {"call_id", "r"}, {"value", {{"user_id", "u"}}}},
                {{"kind", "tool_result"}, {"call_id", "m"}, {"value", "ok"}}}}};
  Trajectory t = parse_trajectory_json(doc, fx().catalog);
  EXPECT_TRUE(prior_tool_results(t, 1).empty());
  EXPECT_TRUE(prior_tool_results(t, 2).empty());
  ASSERT_EQ(prior_tool_results(t, 3).size(), 1u);
  EXPECT_EQ(prior_tool_results(t, 4).size(), 2u);
  try {
    prior_tool_results(t, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(PriorResults, MonotoneInIndex) {
  auto corpus = generate_corpus({30, 0.2, 3, {}});
  for (const auto& t : corpus.trajectories) {
    std::size_t prev = 0;
    for (std::size_t i = 0; i <= t.events.size(); ++i) {
      auto h = prior_tool_results(t, i);
      EXPECT_GE(h.size(), prev);
      for (const auto& p : h) {
        EXPECT_LT(p.call->index, i);
        EXPECT_LT(p.result->index, i);
      }
      prev = h.size();
    }
  }
}
