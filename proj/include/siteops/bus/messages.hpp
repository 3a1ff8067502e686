#pragma once

// Envelope and the order/state/connection/objects payload schemas carried on the bus.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siteops/geo.hpp"
#include "siteops/geolocator.hpp"

namespace siteops::bus {

struct Envelope {
  std::string topic;
  std::string publisher;
  std::uint64_t message_id = 0;
  int qos = 0;
  std::int64_t timestamp = 0;  // ms
  bool dup = false;
  nlohmann::json payload;
};

nlohmann::json to_json(const Envelope& env);
/// Throws ProtocolError on a malformed document.
Envelope envelope_from_json(const nlohmann::json& j);

struct Action {
  std::string action_id;
  std::string type;  // load | dump | hover
  double duration_s = 0.0;
};

struct OrderNode {
  std::string node_id;
  geo::GeoPoint position;
  std::optional<Action> action;
};

struct OrderEdge {
  std::string edge_id;
  std::string start_node;
  std::string end_node;
};

struct OrderMsg {
  std::string order_id;
  std::int64_t update_id = 0;
  std::string vehicle_id;
  std::vector<OrderNode> nodes;
  std::vector<OrderEdge> edges;

  /// Throws ValidationError: empty ids, unknown action types, edges naming undeclared nodes.
  void validate() const;
};

struct ActionState {
  std::string action_id;
  std::string status;  // waiting | running | finished | failed
};

struct StateMsg {
  std::string vehicle_id;
  geo::GeoPoint position;
  double yaw = 0.0;
  std::string order_id;
  std::int64_t order_update_id = 0;
  std::string last_node_id;
  bool driving = false;
  std::vector<ActionState> action_states;
  double battery = 1.0;
  std::vector<std::string> errors;
  std::int64_t timestamp = 0;
};

enum class ConnectionState { online, offline, broken };

struct ConnectionMsg {
  std::string vehicle_id;
  ConnectionState connection_state = ConnectionState::online;
  std::string vehicle_kind;  // excavator | ugv | uav
  std::int64_t timestamp = 0;
};

std::string_view to_string(ConnectionState s);

/// Payload documents carry a `schema` tag; parsers check it and throw ProtocolError on mismatch.
nlohmann::json to_json(const OrderMsg& m);
nlohmann::json to_json(const StateMsg& m);
nlohmann::json to_json(const ConnectionMsg& m);
nlohmann::json to_json(const geoloc::ObjectReport& r);

OrderMsg order_from_json(const nlohmann::json& j);
StateMsg state_from_json(const nlohmann::json& j);
ConnectionMsg connection_from_json(const nlohmann::json& j);
geoloc::ObjectReport object_report_from_json(const nlohmann::json& j);

nlohmann::json geo_to_json(const geo::GeoPoint& p);
geo::GeoPoint geo_from_json(const nlohmann::json& j);

}  // namespace siteops::bus
