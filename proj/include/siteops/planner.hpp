#pragma once

// Clearance-annotated Voronoi roadmap over the site and A* search on it.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "siteops/error.hpp"
#include "siteops/path.hpp"
#include "siteops/sitemap.hpp"

namespace siteops::planner {

using geo::EnuPoint;
using sitemap::DynamicObstacle;
using sitemap::SiteMap;

class SiteBlocked : public Error {
 public:
  using Error::Error;
};

/// Start or goal is outside the boundary or closer than the clearance floor to an obstacle.
class PlacementError : public Error {
 public:
  using Error::Error;
};

class Unreachable : public Error {
 public:
  using Error::Error;
};

struct PlannerConfig {
  double clearance_floor = 2.0;  // m
  double site_spacing = 0.5;     // m between generator sites on outlines
  int circle_points = 16;        // generator sites per dynamic obstacle
  int connect_k = 5;             // nearest nodes tried when attaching start/goal
};

/// Exact distance queries against the boundary, static polygons and dynamic
/// obstacle discs.
class FreeSpace {
 public:
  FreeSpace(const SiteMap& map, std::span<const DynamicObstacle> obstacles, double clearance_floor);

  /// Distance to the nearest geometry; 0 outside the boundary or inside an obstacle.
  double clearance(const EnuPoint& p) const;
  double segment_clearance(const EnuPoint& a, const EnuPoint& b) const;

  bool point_free(const EnuPoint& p) const { return clearance(p) >= floor_; }
  bool segment_free(const EnuPoint& a, const EnuPoint& b) const { return segment_clearance(a, b) >= floor_; }

  double floor() const { return floor_; }

 private:
  geometry::Polygon boundary_;
  std::vector<geometry::Polygon> polygons_;
  std::vector<DynamicObstacle> discs_;
  double floor_;
};

struct GraphNode {
  EnuPoint position;
  double clearance = 0.0;  // distance to the nearest generator site
};

struct GraphEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double length = 0.0;
  double min_clearance = 0.0;
};

struct VoronoiGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::uint64_t generation = 0;
  double clearance_floor = 0.0;
  std::size_t site_count = 0;
  std::shared_ptr<const FreeSpace> space;

  /// adjacency[i] holds edge indices incident to node i.
  std::vector<std::vector<std::size_t>> adjacency() const;
};

VoronoiGraph build_graph(const SiteMap& map, std::span<const DynamicObstacle> obstacles, const PlannerConfig& cfg,
                         std::uint64_t generation = 1);

/// Graph with the start and goal attached: node `start` = nodes.size() - 2, `goal` = nodes.size() - 1.
struct AugmentedGraph {
  std::vector<EnuPoint> nodes;
  std::vector<std::vector<std::pair<std::size_t, double>>> adjacency;  // (neighbor, length)
  std::size_t start = 0;
  std::size_t goal = 0;
};

AugmentedGraph augment(const VoronoiGraph& graph, const EnuPoint& start, const EnuPoint& goal, int connect_k);

struct SearchResult {
  std::vector<std::size_t> nodes;  // start .. goal
  double cost = 0.0;
  std::vector<std::size_t> expanded;  // in expansion order
};

/// A* with the Euclidean heuristic; equal priorities resolve to the lower node index.
/// Throws Unreachable when the goal cannot be reached.
SearchResult astar(const AugmentedGraph& g);

struct PlanDetail {
  PlannedPath path;  // simplified
  PlannedPath raw;   // node sequence from the search
  SearchResult search;
};

PlanDetail plan_detailed(const VoronoiGraph& graph, const EnuPoint& start, const EnuPoint& goal,
                         const PlannerConfig& cfg);
PlannedPath plan(const VoronoiGraph& graph, const EnuPoint& start, const EnuPoint& goal, const PlannerConfig& cfg);

/// Greedy forward shortcutting: from each kept waypoint jump to the farthest
/// later waypoint reachable by a clear straight segment.
PlannedPath simplify(const PlannedPath& path, const FreeSpace& space);
PlannedPath simplify(const PlannedPath& path, const SiteMap& map, std::span<const DynamicObstacle> obstacles,
                     double clearance_floor);

/// Minimum exact clearance along the polyline.
double path_clearance(std::span<const EnuPoint> waypoints, const FreeSpace& space);

nlohmann::json graph_to_json(const VoronoiGraph& graph);

}  // namespace siteops::planner
