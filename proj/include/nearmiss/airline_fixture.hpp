#pragma once

// Mini airline domain: tool catalog and guard specifications.

#include <string_view>

namespace nearmiss::airline {

inline constexpr std::string_view kCatalogJson = R"json({
  "tools": [
    {"name": "get_reservation_details", "kind": "read_only",
     "params": [{"name": "reservation_id", "type": "string"}], "returns": "Reservation"},
    {"name": "get_reservation_timestamp", "kind": "read_only",
     "params": [{"name": "reservation_id", "type": "string"}], "returns": "ReservationTimestamp"},
    {"name": "get_flight_status", "kind": "read_only",
     "params": [{"name": "flight_number", "type": "string"}, {"name": "date", "type": "string"}],
     "returns": "FlightStatus"},
    {"name": "get_flight_instance", "kind": "read_only",
     "params": [{"name": "flight_number", "type": "string"}, {"name": "date", "type": "string"}],
     "returns": "FlightInstance"},
    {"name": "search_direct_flights", "kind": "read_only",
     "params": [{"name": "origin", "type": "string"}, {"name": "destination", "type": "string"},
                {"name": "date", "type": "string"}],
     "returns": "DirectFlightList"},
    {"name": "get_user_details", "kind": "read_only",
     "params": [{"name": "user_id", "type": "string"}], "returns": "User"},
    {"name": "book_reservation", "kind": "mutating",
     "params": [{"name": "user_id", "type": "string"}, {"name": "flight_number", "type": "string"},
                {"name": "date", "type": "string"}, {"name": "origin", "type": "string"},
                {"name": "destination", "type": "string"}, {"name": "cabin", "type": "string"},
                {"name": "payment_id", "type": "string"}],
     "returns": "Reservation"},
    {"name": "cancel_reservation", "kind": "mutating",
     "params": [{"name": "reservation_id", "type": "string"}], "returns": "Reservation"},
    {"name": "update_reservation_flights", "kind": "mutating",
     "params": [{"name": "reservation_id", "type": "string"}, {"name": "flight_number", "type": "string"},
                {"name": "date", "type": "string"}, {"name": "origin", "type": "string"},
                {"name": "destination", "type": "string"},
                {"name": "payment_id", "type": "string", "required": false}],
     "returns": "Reservation"},
    {"name": "update_reservation_passengers", "kind": "mutating",
     "params": [{"name": "reservation_id", "type": "string"}, {"name": "passengers", "type": "list"}],
     "returns": "Reservation"}
  ],
  "schemas": {
    "Reservation": {"reservation_id": "string", "user_id": "string", "flight_number": "string",
                    "date": "string", "origin": "string", "destination": "string", "cabin": "string",
                    "status": "string", "created_at": "timestamp", "payment_id": "string"},
    "ReservationTimestamp": {"reservation_id": "string", "timestamp": "timestamp"},
    "FlightStatus": {"flight_number": "string", "date": "string", "status": "string"},
    "FlightInstance": {"flight_number": "string", "date": "string", "status": "string",
                       "available_seats": "integer", "price": "decimal"},
    "DirectFlightList": {"flights": "list"},
    "User": {"user_id": "string", "name": "string", "membership": "string", "payment_methods": "list"}
  }
})json";

inline constexpr std::string_view kGuardsJson = R"json({
  "guards": [
    {"tool": "cancel_reservation", "needs": [
      {"id": "res_details",
       "read": {"tool": "get_reservation_details", "bindings": {"reservation_id": "args.reservation_id"}},
       "alternatives": [
         {"tool": "get_reservation_timestamp", "bindings": {"reservation_id": "args.reservation_id"},
          "mapping": {"created_at": "timestamp", "reservation_id": "reservation_id"}}],
       "required_fields": ["created_at"],
       "check": "meta.now - ts(this.created_at) < 24h"}]},
    {"tool": "book_reservation", "needs": [
      {"id": "flight_status",
       "read": {"tool": "get_flight_status",
                "bindings": {"flight_number": "args.flight_number", "date": "args.date"}},
       "alternatives": [
         {"tool": "get_flight_instance",
          "bindings": {"flight_number": "args.flight_number", "date": "args.date"},
          "mapping": {"status": "status", "flight_number": "flight_number", "date": "date"}},
         {"tool": "search_direct_flights",
          "bindings": {"origin": "args.origin", "destination": "args.destination", "date": "args.date"},
          "selector": {"list_path": "flights", "key_field": "flight_number", "key_expr": "args.flight_number"},
          "mapping": {"status": "status", "flight_number": "flight_number"}}],
       "required_fields": ["status"],
       "check": "this.status == \"available\""},
      {"id": "payment",
       "read": {"tool": "get_user_details", "bindings": {"user_id": "args.user_id"}},
       "required_fields": ["payment_methods"],
       "check": "contains(this.payment_methods, args.payment_id)"}]},
    {"tool": "update_reservation_flights", "needs": [
      {"id": "reservation",
       "read": {"tool": "get_reservation_details", "bindings": {"reservation_id": "args.reservation_id"}},
       "required_fields": ["user_id", "status"],
       "check": "this.status != \"cancelled\""},
      {"id": "flight_status",
       "read": {"tool": "get_flight_status",
                "bindings": {"flight_number": "args.flight_number", "date": "args.date"}},
       "alternatives": [
         {"tool": "get_flight_instance",
          "bindings": {"flight_number": "args.flight_number", "date": "args.date"},
          "mapping": {"status": "status", "flight_number": "flight_number", "date": "date"}},
         {"tool": "search_direct_flights",
          "bindings": {"origin": "args.origin", "destination": "args.destination", "date": "args.date"},
          "selector": {"list_path": "flights", "key_field": "flight_number", "key_expr": "args.flight_number"},
          "mapping": {"status": "status", "flight_number": "flight_number"}}],
       "required_fields": ["status"],
       "check": "this.status == \"available\""},
      {"id": "payment",
       "applies_if": "exists(args.payment_id)",
       "read": {"tool": "get_user_details", "bindings": {"user_id": "need.reservation.user_id"}},
       "required_fields": ["payment_methods"],
       "check": "contains(this.payment_methods, args.payment_id)"}]},
    {"tool": "update_reservation_passengers", "needs": [
      {"id": "reservation",
       "read": {"tool": "get_reservation_details", "bindings": {"reservation_id": "args.reservation_id"}},
       "required_fields": ["status"],
       "check": "this.status != \"cancelled\""}]}
  ]
})json";

}  // namespace nearmiss::airline
