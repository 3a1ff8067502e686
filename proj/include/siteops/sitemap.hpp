#pragma once

// World model: static site geometry, named zones and the registry of dynamic
// obstacles built from UAV object reports.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "siteops/geo.hpp"
#include "siteops/geolocator.hpp"
#include "siteops/geometry.hpp"
#include "siteops/path.hpp"

namespace siteops::sitemap {

using geo::EnuPoint;
using geometry::Polygon;

struct SiteMap {
  geo::GeoPoint origin;
  Polygon boundary;  // counter-clockwise
  std::vector<Polygon> static_obstacles;
  std::map<std::string, EnuPoint> zones;

  bool inside_boundary(const EnuPoint& p) const;
  bool inside_static_obstacle(const EnuPoint& p) const;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

SiteMap map_from_json(const nlohmann::json& doc);
nlohmann::json map_to_json(const SiteMap& map);
SiteMap load_map(const std::string& path);

struct DynamicObstacle {
  std::uint64_t id = 0;
  EnuPoint position;
  double radius = 1.0;
  geoloc::ObjectClass cls = geoloc::ObjectClass::person;
  std::int64_t last_seen = 0;  // ms
  std::int64_t ttl = 0;        // ms; negative means no expiry
  bool supervisor = false;

  bool live_at(std::int64_t now) const { return ttl < 0 || now - last_seen <= ttl; }
};

struct RegistryConfig {
  double merge_distance = 2.0;
  double smoothing_alpha = 0.5;
  std::int64_t ttl_ms = 10'000;
  double person_radius = 1.0;
  double cone_radius = 0.5;
  double vehicle_radius = 3.0;
};

struct IngestResult {
  DynamicObstacle obstacle;
  bool created = false;
};

/// Registry of detected obstacles. Single writer; copies are cheap snapshots.
class ObstacleRegistry {
 public:
  ObstacleRegistry(SiteMap map, RegistryConfig cfg = {});

  /// Nullopt when the report falls outside the site boundary (dropped, logged).
  std::optional<IngestResult> ingest_report(const geoloc::ObjectReport& report, std::int64_t now);

  /// Supervisor override. ttl_ms < 0 keeps the obstacle until cleared.
  DynamicObstacle inject(const EnuPoint& position, double radius, std::int64_t now, std::int64_t ttl_ms = -1,
                         geoloc::ObjectClass cls = geoloc::ObjectClass::person);

  bool clear(std::uint64_t id);

  std::vector<DynamicObstacle> live_obstacles(std::int64_t now) const;

  /// Removes and returns obstacles that have outlived their ttl.
  std::vector<DynamicObstacle> expire(std::int64_t now);

  const SiteMap& map() const { return map_; }
  const RegistryConfig& config() const { return cfg_; }
  std::uint64_t dropped_count() const { return dropped_; }

 private:
  double default_radius(geoloc::ObjectClass cls) const;

  SiteMap map_;
  RegistryConfig cfg_;
  std::vector<DynamicObstacle> obstacles_;  // ascending id
  std::uint64_t next_id_ = 1;
  std::uint64_t dropped_ = 0;
};

/// True iff some segment passes strictly closer than radius + clearance to an obstacle center.
bool blocks_path(std::span<const EnuPoint> waypoints, std::span<const DynamicObstacle> obstacles, double clearance);
bool blocks_path(const PlannedPath& path, std::span<const DynamicObstacle> obstacles, double clearance);

}  // namespace siteops::sitemap
