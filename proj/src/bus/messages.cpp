#include "siteops/bus/messages.hpp"

#include <set>

#include "siteops/bus/topic.hpp"
#include "siteops/error.hpp"

namespace siteops::bus {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw ProtocolError(std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(std::string("field '") + name + "' has the wrong type");
  }
}

void expect_schema(const json& j, const char* schema) {
  const auto s = field<std::string>(j, "schema");
  if (s != schema) throw ProtocolError("expected schema '" + std::string(schema) + "', got '" + s + "'");
}

}  // namespace

json geo_to_json(const geo::GeoPoint& p) { return {{"lat", p.lat}, {"lon", p.lon}, {"alt", p.alt}}; }

geo::GeoPoint geo_from_json(const json& j) {
  return {field<double>(j, "lat"), field<double>(j, "lon"), j.is_object() ? j.value("alt", 0.0) : 0.0};
}

json to_json(const Envelope& env) {
  return {{"topic", env.topic},         {"publisher", env.publisher}, {"message_id", env.message_id},
          {"qos", env.qos},             {"timestamp", env.timestamp}, {"dup", env.dup},
          {"payload", env.payload}};
}

Envelope envelope_from_json(const json& j) {
  Envelope env;
  env.topic = field<std::string>(j, "topic");
  env.publisher = field<std::string>(j, "publisher");
  env.message_id = field<std::uint64_t>(j, "message_id");
  env.qos = field<int>(j, "qos");
  env.timestamp = field<std::int64_t>(j, "timestamp");
  env.dup = j.value("dup", false);
  env.payload = j.contains("payload") ? j["payload"] : json::object();
  if (!valid_topic(env.topic)) throw ProtocolError("malformed topic '" + env.topic + "'");
  if (env.qos != 0 && env.qos != 1) throw ProtocolError("qos must be 0 or 1");
  return env;
}

void OrderMsg::validate() const {
  if (order_id.empty()) throw ValidationError("must not be empty", "order_id");
  if (vehicle_id.empty()) throw ValidationError("must not be empty", "vehicle_id");
  if (update_id < 0) throw ValidationError("must be non-negative", "update_id");
  if (nodes.empty()) throw ValidationError("order needs at least one node", "nodes");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const std::string f = "nodes[" + std::to_string(i) + "]";
    if (n.node_id.empty() || !ids.insert(n.node_id).second) {
      throw ValidationError("node id empty or repeated", f + ".node_id");
    }
    if (n.action) {
      const auto& t = n.action->type;
      if (t != "load" && t != "dump" && t != "hover") {
        throw ValidationError("unknown action type '" + t + "'", f + ".action.type");
      }
      if (n.action->duration_s < 0) throw ValidationError("must be non-negative", f + ".action.duration_s");
    }
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    const std::string f = "edges[" + std::to_string(i) + "]";
    if (!ids.count(e.start_node)) throw ValidationError("undeclared node '" + e.start_node + "'", f + ".start_node");
    if (!ids.count(e.end_node)) throw ValidationError("undeclared node '" + e.end_node + "'", f + ".end_node");
  }
}

json to_json(const OrderMsg& m) {
  json nodes = json::array();
  for (const auto& n : m.nodes) {
    json jn = {{"node_id", n.node_id}, {"position", geo_to_json(n.position)}};
    if (n.action) {
      jn["action"] = {{"action_id", n.action->action_id},
                      {"type", n.action->type},
                      {"duration_s", n.action->duration_s}};
    }
    nodes.push_back(std::move(jn));
  }
  json edges = json::array();
  for (const auto& e : m.edges) {
    edges.push_back({{"edge_id", e.edge_id}, {"start_node", e.start_node}, {"end_node", e.end_node}});
  }
  return {{"schema", "order/1"},   {"order_id", m.order_id}, {"update_id", m.update_id},
          {"vehicle_id", m.vehicle_id}, {"nodes", nodes},    {"edges", edges}};
}

OrderMsg order_from_json(const json& j) {
  expect_schema(j, "order/1");
  OrderMsg m;
  m.order_id = field<std::string>(j, "order_id");
  m.update_id = field<std::int64_t>(j, "update_id");
  m.vehicle_id = field<std::string>(j, "vehicle_id");
  for (const auto& jn : field<json>(j, "nodes")) {
    OrderNode n;
    n.node_id = field<std::string>(jn, "node_id");
    n.position = geo_from_json(field<json>(jn, "position"));
    if (jn.contains("action") && !jn["action"].is_null()) {
      const auto& ja = jn["action"];
      n.action = Action{field<std::string>(ja, "action_id"), field<std::string>(ja, "type"),
                        field<double>(ja, "duration_s")};
    }
    m.nodes.push_back(std::move(n));
  }
  if (j.contains("edges")) {
    for (const auto& je : j["edges"]) {
      m.edges.push_back({field<std::string>(je, "edge_id"), field<std::string>(je, "start_node"),
                         field<std::string>(je, "end_node")});
    }
  }
  return m;
}

json to_json(const StateMsg& m) {
  json actions = json::array();
  for (const auto& a : m.action_states) actions.push_back({{"action_id", a.action_id}, {"status", a.status}});
  return {{"schema", "state/1"},
          {"vehicle_id", m.vehicle_id},
          {"position", geo_to_json(m.position)},
          {"yaw", m.yaw},
          {"order_id", m.order_id},
          {"order_update_id", m.order_update_id},
          {"last_node_id", m.last_node_id},
          {"driving", m.driving},
          {"action_states", actions},
          {"battery", m.battery},
          {"errors", m.errors},
          {"timestamp", m.timestamp}};
}

StateMsg state_from_json(const json& j) {
  expect_schema(j, "state/1");
  StateMsg m;
  m.vehicle_id = field<std::string>(j, "vehicle_id");
  m.position = geo_from_json(field<json>(j, "position"));
  m.yaw = field<double>(j, "yaw");
  m.order_id = j.value("order_id", "");
  m.order_update_id = j.value("order_update_id", std::int64_t{0});
  m.last_node_id = j.value("last_node_id", "");
  m.driving = j.value("driving", false);
  if (j.contains("action_states")) {
    for (const auto& a : j["action_states"]) {
      m.action_states.push_back({field<std::string>(a, "action_id"), field<std::string>(a, "status")});
    }
  }
  m.battery = j.value("battery", 1.0);
  if (m.battery < 0.0 || m.battery > 1.0) throw ProtocolError("battery must lie in [0, 1]");
  m.errors = j.value("errors", std::vector<std::string>{});
  m.timestamp = field<std::int64_t>(j, "timestamp");
  return m;
}

std::string_view to_string(ConnectionState s) {
  switch (s) {
    case ConnectionState::online: return "online";
    case ConnectionState::offline: return "offline";
    case ConnectionState::broken: return "broken";
  }
  return "unknown";
}

json to_json(const ConnectionMsg& m) {
  return {{"schema", "connection/1"},
          {"vehicle_id", m.vehicle_id},
          {"connection_state", to_string(m.connection_state)},
          {"vehicle_kind", m.vehicle_kind},
          {"timestamp", m.timestamp}};
}

ConnectionMsg connection_from_json(const json& j) {
  expect_schema(j, "connection/1");
  ConnectionMsg m;
  m.vehicle_id = field<std::string>(j, "vehicle_id");
  const auto s = field<std::string>(j, "connection_state");
  if (s == "online") {
    m.connection_state = ConnectionState::online;
  } else if (s == "offline") {
    m.connection_state = ConnectionState::offline;
  } else if (s == "broken") {
    m.connection_state = ConnectionState::broken;
  } else {
    throw ProtocolError("unknown connection_state '" + s + "'");
  }
  m.vehicle_kind = j.value("vehicle_kind", "");
  m.timestamp = j.value("timestamp", std::int64_t{0});
  return m;
}

json to_json(const geoloc::ObjectReport& r) {
  return {{"schema", "objects/1"},
          {"position", geo_to_json(r.position)},
          {"class", geoloc::to_string(r.cls)},
          {"confidence", r.confidence},
          {"source_ts", r.source_ts}};
}

geoloc::ObjectReport object_report_from_json(const json& j) {
  expect_schema(j, "objects/1");
  geoloc::ObjectReport r;
  r.position = geo_from_json(field<json>(j, "position"));
  try {
    r.cls = geoloc::object_class_from_string(field<std::string>(j, "class"));
  } catch (const ValidationError& e) {
    throw ProtocolError(e.what());
  }
  r.confidence = field<double>(j, "confidence");
  r.source_ts = field<std::int64_t>(j, "source_ts");
  return r;
}

}  // namespace siteops::bus
