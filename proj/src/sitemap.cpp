#include "siteops/sitemap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "siteops/error.hpp"

namespace siteops {

double path_length(const std::vector<geo::EnuPoint>& waypoints) {
  double len = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    len += geo::planar_distance(waypoints[i - 1], waypoints[i]);
  }
  return len;
}

}  // namespace siteops

namespace siteops::sitemap {

using nlohmann::json;

bool SiteMap::inside_boundary(const EnuPoint& p) const { return geometry::point_in_polygon(p, boundary); }

bool SiteMap::inside_static_obstacle(const EnuPoint& p) const {
  return std::any_of(static_obstacles.begin(), static_obstacles.end(),
                     [&](const Polygon& poly) { return geometry::point_in_polygon(p, poly); });
}

void SiteMap::validate() const {
  geo::validate(origin);
  if (boundary.size() < 3) {
    throw ValidationError("boundary needs at least 3 vertices", "boundary");
  }
  if (!geometry::is_simple(boundary)) {
    throw ValidationError("boundary is self-intersecting", "boundary");
  }
  if (geometry::signed_area(boundary) <= 0.0) {
    throw ValidationError("boundary must be counter-clockwise", "boundary");
  }
  for (std::size_t i = 0; i < static_obstacles.size(); ++i) {
    const auto& poly = static_obstacles[i];
    const std::string field = "static_obstacles[" + std::to_string(i) + "]";
    if (poly.size() < 3 || !geometry::is_simple(poly)) {
      throw ValidationError("obstacle polygon is not simple", field);
    }
    for (const auto& v : poly) {
      if (!inside_boundary(v)) {
        throw ValidationError("obstacle vertex outside boundary", field);
      }
    }
  }
  for (const auto& [name, p] : zones) {
    if (!inside_boundary(p)) {
      throw ValidationError("zone outside boundary", "zones." + name);
    }
    if (inside_static_obstacle(p)) {
      throw ValidationError("zone inside a static obstacle", "zones." + name);
    }
  }
}

namespace {

EnuPoint point_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError("expected [east, north]", field);
  }
  return {j[0].get<double>(), j[1].get<double>(), 0.0};
}

Polygon polygon_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) {
    throw ValidationError("expected a list of points", field);
  }
  Polygon poly;
  for (std::size_t i = 0; i < j.size(); ++i) {
    poly.push_back(point_from_json(j[i], field + "[" + std::to_string(i) + "]"));
  }
  return poly;
}

json point_to_json(const EnuPoint& p) { return json::array({p.east, p.north}); }

}  // namespace

SiteMap map_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw ValidationError("map document must be an object", "map");
  }
  SiteMap m;
  if (!doc.contains("origin") || !doc["origin"].is_object()) {
    throw ValidationError("missing origin", "origin");
  }
  const auto& o = doc["origin"];
  if (!o.contains("lat") || !o["lat"].is_number() || !o.contains("lon") || !o["lon"].is_number()) {
    throw ValidationError("origin needs numeric lat and lon", "origin");
  }
  m.origin = {o["lat"].get<double>(), o["lon"].get<double>(), o.value("alt", 0.0)};
  if (!doc.contains("boundary")) {
    throw ValidationError("missing boundary", "boundary");
  }
  m.boundary = polygon_from_json(doc["boundary"], "boundary");
  if (doc.contains("static_obstacles")) {
    const auto& obs = doc["static_obstacles"];
    if (!obs.is_array()) {
      throw ValidationError("expected a list of polygons", "static_obstacles");
    }
    for (std::size_t i = 0; i < obs.size(); ++i) {
      m.static_obstacles.push_back(polygon_from_json(obs[i], "static_obstacles[" + std::to_string(i) + "]"));
    }
  }
  if (doc.contains("zones")) {
    if (!doc["zones"].is_object()) {
      throw ValidationError("expected an object of named points", "zones");
    }
    for (const auto& [name, p] : doc["zones"].items()) {
      m.zones[name] = point_from_json(p, "zones." + name);
    }
  }
  m.validate();
  return m;
}

json map_to_json(const SiteMap& m) {
  json doc;
  doc["origin"] = {{"lat", m.origin.lat}, {"lon", m.origin.lon}, {"alt", m.origin.alt}};
  doc["boundary"] = json::array();
  for (const auto& p : m.boundary) doc["boundary"].push_back(point_to_json(p));
  doc["static_obstacles"] = json::array();
  for (const auto& poly : m.static_obstacles) {
    json pj = json::array();
    for (const auto& p : poly) pj.push_back(point_to_json(p));
    doc["static_obstacles"].push_back(pj);
  }
  doc["zones"] = json::object();
  for (const auto& [name, p] : m.zones) doc["zones"][name] = point_to_json(p);
  return doc;
}

SiteMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open map file '" + path + "'", "map");
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("map file is not valid: ") + e.what(), "map");
  }
  return map_from_json(doc);
}

ObstacleRegistry::ObstacleRegistry(SiteMap map, RegistryConfig cfg) : map_(std::move(map)), cfg_(cfg) {}

double ObstacleRegistry::default_radius(geoloc::ObjectClass cls) const {
  switch (cls) {
    case geoloc::ObjectClass::person: return cfg_.person_radius;
    case geoloc::ObjectClass::cone: return cfg_.cone_radius;
    case geoloc::ObjectClass::vehicle: return cfg_.vehicle_radius;
  }
  return cfg_.person_radius;
}

std::optional<IngestResult> ObstacleRegistry::ingest_report(const geoloc::ObjectReport& report, std::int64_t now) {
  const EnuPoint p = geo::geodetic_to_enu(map_.origin, report.position);
  if (!map_.inside_boundary(p)) {
    ++dropped_;
    spdlog::debug("dropping {} report at ({:.2f}, {:.2f}): outside site boundary", geoloc::to_string(report.cls),
                  p.east, p.north);
    return std::nullopt;
  }
  DynamicObstacle* nearest = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (auto& o : obstacles_) {
    if (o.cls != report.cls || !o.live_at(now)) continue;
    const double d = geo::planar_distance(o.position, p);
    if (d <= cfg_.merge_distance && d < best) {
      best = d;
      nearest = &o;
    }
  }
  if (nearest != nullptr) {
    const double a = cfg_.smoothing_alpha;
    nearest->position = {a * p.east + (1.0 - a) * nearest->position.east,
                         a * p.north + (1.0 - a) * nearest->position.north, 0.0};
    nearest->last_seen = std::max(nearest->last_seen, now);
    return IngestResult{*nearest, false};
  }
  DynamicObstacle o;
  o.id = next_id_++;
  o.position = {p.east, p.north, 0.0};
  o.radius = default_radius(report.cls);
  o.cls = report.cls;
  o.last_seen = now;
  o.ttl = cfg_.ttl_ms;
  obstacles_.push_back(o);
  return IngestResult{o, true};
}

DynamicObstacle ObstacleRegistry::inject(const EnuPoint& position, double radius, std::int64_t now,
                                         std::int64_t ttl_ms, geoloc::ObjectClass cls) {
  if (!(radius > 0.0)) {
    throw ValidationError("radius must be positive", "radius");
  }
  if (!map_.inside_boundary(position)) {
    throw ValidationError("position outside site boundary", "position");
  }
  DynamicObstacle o;
  o.id = next_id_++;
  o.position = {position.east, position.north, 0.0};
  o.radius = radius;
  o.cls = cls;
  o.last_seen = now;
  o.ttl = ttl_ms;
  o.supervisor = true;
  obstacles_.push_back(o);
  return o;
}

bool ObstacleRegistry::clear(std::uint64_t id) {
  const auto it = std::find_if(obstacles_.begin(), obstacles_.end(), [&](const auto& o) { return o.id == id; });
  if (it == obstacles_.end()) return false;
  obstacles_.erase(it);
  return true;
}

std::vector<DynamicObstacle> ObstacleRegistry::live_obstacles(std::int64_t now) const {
  std::vector<DynamicObstacle> out;
  for (const auto& o : obstacles_) {
    if (o.live_at(now)) out.push_back(o);
  }
  return out;
}

std::vector<DynamicObstacle> ObstacleRegistry::expire(std::int64_t now) {
  std::vector<DynamicObstacle> gone;
  std::erase_if(obstacles_, [&](const DynamicObstacle& o) {
    if (o.live_at(now)) return false;
    gone.push_back(o);
    return true;
  });
  return gone;
}

bool blocks_path(std::span<const EnuPoint> waypoints, std::span<const DynamicObstacle> obstacles, double clearance) {
  if (waypoints.empty()) return false;
  for (const auto& o : obstacles) {
    const double limit = o.radius + clearance;
    if (waypoints.size() == 1) {
      if (geo::planar_distance(waypoints[0], o.position) < limit) return true;
      continue;
    }
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      if (geometry::point_segment_distance(o.position, waypoints[i - 1], waypoints[i]) < limit) return true;
    }
  }
  return false;
}

bool blocks_path(const PlannedPath& path, std::span<const DynamicObstacle> obstacles, double clearance) {
  return blocks_path(path.waypoints, obstacles, clearance);
}

}  // namespace siteops::sitemap
