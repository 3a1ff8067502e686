#include "siteops/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "siteops/bus/topic.hpp"
#include "siteops/error.hpp"

namespace siteops::sim {

using nlohmann::json;

std::optional<EnuPoint> ActorScript::position_at(double t_s) const {
  if (t_s < appear_at_s) return std::nullopt;
  if (disappear_at_s && t_s >= *disappear_at_s) return std::nullopt;
  std::vector<EnuPoint> pts{start};
  pts.insert(pts.end(), path.begin(), path.end());
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) total += geo::planar_distance(pts[i - 1], pts[i]);
  if (total <= 0.0 || speed <= 0.0) return start;
  // Back and forth along the polyline.
  double u = std::fmod((t_s - appear_at_s) * speed, 2.0 * total);
  if (u > total) u = 2.0 * total - u;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = geo::planar_distance(pts[i - 1], pts[i]);
    if (u <= seg || i + 1 == pts.size()) {
      const double t = seg > 0.0 ? std::min(u / seg, 1.0) : 0.0;
      return EnuPoint{pts[i - 1].east + t * (pts[i].east - pts[i - 1].east),
                      pts[i - 1].north + t * (pts[i].north - pts[i - 1].north), 0.0};
    }
    u -= seg;
  }
  return pts.back();
}

namespace {

EnuPoint point_or_zone(const json& j, const sitemap::SiteMap& map, const std::string& field) {
  if (j.is_string()) {
    const auto it = map.zones.find(j.get<std::string>());
    if (it == map.zones.end()) throw ValidationError("unknown zone '" + j.get<std::string>() + "'", field);
    return it->second;
  }
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError("expected [east, north] or a zone name", field);
  }
  return {j[0].get<double>(), j[1].get<double>(), 0.0};
}

double number(const json& j, const char* key, double fallback, const std::string& field) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ValidationError("must be a number", field + "." + key);
  return j[key].get<double>();
}

}  // namespace

Scenario scenario_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ValidationError("scenario must be an object", "scenario");
  Scenario s;
  s.name = doc.value("name", "scenario");

  if (!doc.contains("map")) throw ValidationError("missing", "map");
  if (doc["map"].is_string()) {
    s.map_path = base_dir / doc["map"].get<std::string>();
    try {
      s.map = sitemap::load_map(s.map_path.string());
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("in ") + s.map_path.string() + ": " + e.what(), "map");
    }
  } else {
    s.map = sitemap::map_from_json(doc["map"]);
    s.map.validate();
  }

  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer() || doc["seed"].get<std::int64_t>() < 0)
      throw ValidationError("must be a non-negative integer", "seed");
    s.seed = doc["seed"].get<std::uint64_t>();
  }

  if (!doc.contains("vehicles") || !doc["vehicles"].is_array() || doc["vehicles"].empty()) {
    throw ValidationError("expected a non-empty list", "vehicles");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc["vehicles"].size(); ++i) {
    const auto& v = doc["vehicles"][i];
    const std::string f = "vehicles[" + std::to_string(i) + "]";
    if (!v.is_object()) throw ValidationError("expected an object", f);
    if (!v.contains("id") || !v["id"].is_string()) throw ValidationError("missing or not a string", f + ".id");
    if (!v.contains("kind") || !v["kind"].is_string()) throw ValidationError("missing or not a string", f + ".kind");
    const std::string id = v["id"];
    tasking::VehicleKind kind;
    try {
      kind = tasking::vehicle_kind_from_string(v["kind"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError(e.what(), f + ".kind");
    }
    try {
      bus::topic_for(id, bus::TopicKind::state);
    } catch (const ValidationError& e) {
      throw ValidationError(e.what(), f + ".id");
    }
    if (!ids.insert(id).second) throw ValidationError("duplicate vehicle id '" + id + "'", f + ".id");
    VehicleEntry entry{default_spec(id, kind), {}};
    entry.spec.max_speed = number(v, "max_speed", entry.spec.max_speed, f);
    entry.spec.turn_rate = number(v, "turn_rate", entry.spec.turn_rate, f);
    entry.spec.arrival_tolerance = number(v, "arrival_tolerance", entry.spec.arrival_tolerance, f);
    entry.spec.state_rate = number(v, "state_rate", entry.spec.state_rate, f);
    try {
      entry.spec.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(e.what(), f + "." + e.field());
    }
    if (!v.contains("start")) throw ValidationError("missing", f + ".start");
    entry.start.position = point_or_zone(v["start"], s.map, f + ".start");
    entry.start.yaw = number(v, "yaw", 0.0, f);
    if (!s.map.inside_boundary(entry.start.position) || s.map.inside_static_obstacle(entry.start.position)) {
      throw ValidationError("start must be inside the boundary and outside obstacles", f + ".start");
    }
    s.vehicles.push_back(std::move(entry));
  }
  std::sort(s.vehicles.begin(), s.vehicles.end(),
            [](const VehicleEntry& a, const VehicleEntry& b) { return a.spec.id < b.spec.id; });

  const json det = doc.value("detector", json::object());
  if (!det.is_object()) throw ValidationError("expected an object", "detector");
  const std::string model = det.value("profile", "YoloLC-192");
  const std::string processor = det.value("processor", "m7");
  std::vector<geoloc::DetectorPreset> presets(geoloc::builtin_presets().begin(), geoloc::builtin_presets().end());
  if (det.contains("presets_csv")) {
    const auto path = base_dir / det["presets_csv"].get<std::string>();
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string(), "detector.presets_csv");
    presets = geoloc::read_presets_csv(in);
  }
  try {
    s.detector = geoloc::make_profile(presets, model, processor);
  } catch (const ValidationError& e) {
    throw ValidationError(e.what(), "detector." + e.field());
  }
  if (det.contains("fps")) s.detector.fps = number(det, "fps", s.detector.fps, "detector");
  if (!(s.detector.fps > 0)) throw ValidationError("must be positive", "detector.fps");
  s.confidence_floor = number(det, "confidence_floor", s.confidence_floor, "detector");

  if (doc.contains("actors")) {
    if (!doc["actors"].is_array()) throw ValidationError("expected a list", "actors");
    for (std::size_t i = 0; i < doc["actors"].size(); ++i) {
      const auto& a = doc["actors"][i];
      const std::string f = "actors[" + std::to_string(i) + "]";
      if (!a.is_object()) throw ValidationError("expected an object", f);
      ActorScript act;
      act.name = a.value("name", "actor" + std::to_string(i + 1));
      if (!a.contains("pos")) throw ValidationError("missing", f + ".pos");
      act.start = point_or_zone(a["pos"], s.map, f + ".pos");
      try {
        act.cls = geoloc::object_class_from_string(a.value("class", "person"));
      } catch (const ValidationError& e) {
        throw ValidationError(e.what(), f + ".class");
      }
      act.appear_at_s = number(a, "appear_at", 0.0, f);
      if (a.contains("disappear_at")) act.disappear_at_s = number(a, "disappear_at", 0.0, f);
      act.speed = number(a, "speed", 1.0, f);
      if (act.speed < 0) throw ValidationError("must be non-negative", f + ".speed");
      if (a.contains("path")) {
        if (!a["path"].is_array()) throw ValidationError("expected a list of points", f + ".path");
        for (std::size_t k = 0; k < a["path"].size(); ++k) {
          act.path.push_back(point_or_zone(a["path"][k], s.map, f + ".path[" + std::to_string(k) + "]"));
        }
      }
      s.actors.push_back(std::move(act));
    }
  }

  if (doc.contains("operation")) {
    const auto req = tasking::operation_from_json(doc["operation"]);
    tasking::parse_operation(req, "check", s.map);  // zone references
    s.operation = doc["operation"];
  }
  s.max_sim_time_s = number(doc, "max_sim_time_s", s.max_sim_time_s, "scenario");
  if (!(s.max_sim_time_s > 0)) throw ValidationError("must be positive", "max_sim_time_s");
  if (doc.contains("bus")) {
    s.drop_probability = number(doc["bus"], "drop_probability", 0.0, "bus");
    if (s.drop_probability < 0 || s.drop_probability >= 1) {
      throw ValidationError("must lie in [0, 1)", "bus.drop_probability");
    }
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file '" + path.string() + "'", "scenario");
  const json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ValidationError("not a valid JSON document: " + path.string(), "scenario");
  Scenario s = scenario_from_json(doc, path.parent_path());
  if (!doc.contains("name")) s.name = path.stem().string();
  return s;
}

SimWorld::SimWorld(const Scenario& scenario, const scale::ScaleModel& camera, const EndpointFactory& endpoints)
    : scenario_(scenario), camera_(camera) {
  std::uint64_t stream = 0;
  for (const auto& v : scenario.vehicles) {
    vehicles_.emplace_back(v.spec, v.start, scenario.map);
    endpoints_.push_back(endpoints(v.spec.id));
    endpoints_.back()->subscribe(bus::topic_for(v.spec.id, bus::TopicKind::order));
    if (v.spec.kind == VehicleKind::uav) {
      detectors_.emplace_back(std::in_place, scenario.detector, camera, geoloc::ImageSize{}, geoloc::NoiseConfig{},
                              scenario.seed * 1000003ULL + ++stream);
    } else {
      detectors_.emplace_back();
    }
  }
  inflight_.resize(vehicles_.size());
}

const SimVehicle* SimWorld::vehicle(const std::string& id) const {
  for (const auto& v : vehicles_) {
    if (v.spec().id == id) return &v;
  }
  return nullptr;
}

std::vector<std::pair<std::size_t, geoloc::Actor>> SimWorld::actors_at(double t_s) const {
  std::vector<std::pair<std::size_t, geoloc::Actor>> out;
  for (std::size_t i = 0; i < scenario_.actors.size(); ++i) {
    if (auto p = scenario_.actors[i].position_at(t_s)) out.push_back({i, {*p, scenario_.actors[i].cls}});
  }
  return out;
}

void SimWorld::step(const SimClock& clock) {
  const std::int64_t now = clock.now_ms();
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    for (const auto& env : endpoints_[i]->drain()) {
      try {
        const auto order = bus::order_from_json(env.payload);
        const auto decision = vehicles_[i].accept_order(order);
        if (decision == OrderDecision::accepted) {
          ++stats_.orders_accepted;
        } else {
          ++stats_.orders_rejected;
          spdlog::debug("{} rejected order {} update {}", vehicles_[i].spec().id, order.order_id, order.update_id);
        }
      } catch (const Error& e) {
        spdlog::warn("{}: bad order payload: {}", vehicles_[i].spec().id, e.what());
      }
    }
  }

  std::vector<std::optional<bus::StateMsg>> states(vehicles_.size());
  for (std::size_t i = 0; i < vehicles_.size(); ++i) states[i] = vehicles_[i].tick(clock);

  std::vector<std::vector<geoloc::ObjectReport>> reports(vehicles_.size());
  const double t_s = static_cast<double>(now) / 1000.0;
  std::vector<geoloc::Actor> actors;
  for (const auto& [idx, a] : actors_at(t_s)) actors.push_back(a);
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    if (!detectors_[i]) continue;
    const SimVehicle& uav = vehicles_[i];
    const double alt = uav.position().up;
    if (alt < camera_.guard_low() || alt > camera_.guard_high()) continue;
    geoloc::DroneFix fix;
    fix.position = geo::enu_to_geodetic(scenario_.map.origin, {uav.position().east, uav.position().north, 0.0});
    fix.yaw = uav.yaw();
    fix.altitude_agl = alt;
    fix.timestamp = now;
    const auto frame = detectors_[i]->poll(actors, fix, scenario_.map.origin);
    if (!frame) continue;
    ++stats_.frames;
    stats_.detections += frame->size();
    const auto ready = now + static_cast<std::int64_t>(std::llround(1000.0 / scenario_.detector.fps));
    for (const auto& d : *frame) {
      if (auto r = geoloc::to_report(d, fix, camera_, geoloc::ImageSize{}, scenario_.map.origin,
                                     scenario_.confidence_floor)) {
        inflight_[i].push_back({ready, *r});
      }
    }
  }
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    auto& q = inflight_[i];
    std::size_t n = 0;
    while (n < q.size() && q[n].first <= now) reports[i].push_back(q[n++].second);
    q.erase(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(n));
  }

  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const auto& id = vehicles_[i].spec().id;
    auto& ep = *endpoints_[i];
    if (!announced_) {
      bus::ConnectionMsg c{id, bus::ConnectionState::online, std::string(tasking::to_string(vehicles_[i].spec().kind)),
                           now};
      ep.publish(bus::topic_for(id, bus::TopicKind::connection), bus::to_json(c), 1, now);
    }
    if (states[i]) ep.publish(bus::topic_for(id, bus::TopicKind::state), bus::to_json(*states[i]), 0, now);
    for (const auto& r : reports[i]) {
      ep.publish(bus::topic_for(id, bus::TopicKind::objects), bus::to_json(r), 1, now);
      ++stats_.reports;
    }
  }
  announced_ = true;
}

}  // namespace siteops::sim
