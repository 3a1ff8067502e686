#include "siteops/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>

#include <boost/polygon/voronoi.hpp>
#include <nlohmann/json.hpp>

namespace siteops::planner {

namespace {

constexpr double kSiteScale = 1000.0;  // generator sites are snapped to millimeters

using IntPoint = boost::polygon::point_data<std::int64_t>;

}  // namespace

FreeSpace::FreeSpace(const SiteMap& map, std::span<const DynamicObstacle> obstacles, double clearance_floor)
    : boundary_(map.boundary),
      polygons_(map.static_obstacles),
      discs_(obstacles.begin(), obstacles.end()),
      floor_(clearance_floor) {}

double FreeSpace::clearance(const EnuPoint& p) const {
  if (!geometry::point_in_polygon(p, boundary_)) return 0.0;
  double best = geometry::distance_to_outline(p, boundary_);
  for (const auto& poly : polygons_) {
    if (geometry::point_in_polygon(p, poly)) return 0.0;
    best = std::min(best, geometry::distance_to_outline(p, poly));
  }
  for (const auto& d : discs_) {
    best = std::min(best, std::max(0.0, geo::planar_distance(p, d.position) - d.radius));
  }
  return best;
}

double FreeSpace::segment_clearance(const EnuPoint& a, const EnuPoint& b) const {
  if (!geometry::point_in_polygon(a, boundary_) || !geometry::point_in_polygon(b, boundary_)) return 0.0;
  double best = geometry::segment_outline_distance(a, b, boundary_);
  for (const auto& poly : polygons_) {
    if (geometry::point_in_polygon(a, poly) || geometry::point_in_polygon(b, poly)) return 0.0;
    best = std::min(best, geometry::segment_outline_distance(a, b, poly));
  }
  for (const auto& d : discs_) {
    best = std::min(best, std::max(0.0, geometry::point_segment_distance(d.position, a, b) - d.radius));
  }
  return best;
}

std::vector<std::vector<std::size_t>> VoronoiGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(nodes.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    adj[edges[i].a].push_back(i);
    adj[edges[i].b].push_back(i);
  }
  return adj;
}

namespace {

std::vector<IntPoint> generator_sites(const SiteMap& map, std::span<const DynamicObstacle> obstacles,
                                      const PlannerConfig& cfg) {
  std::vector<EnuPoint> raw = geometry::sample_outline(map.boundary, cfg.site_spacing);
  for (const auto& poly : map.static_obstacles) {
    const auto s = geometry::sample_outline(poly, cfg.site_spacing);
    raw.insert(raw.end(), s.begin(), s.end());
  }
  for (const auto& o : obstacles) {
    for (int k = 0; k < cfg.circle_points; ++k) {
      const double t = 2.0 * std::numbers::pi * k / cfg.circle_points;
      raw.push_back({o.position.east + o.radius * std::cos(t), o.position.north + o.radius * std::sin(t), 0.0});
    }
  }
  std::vector<IntPoint> sites;
  sites.reserve(raw.size());
  for (const auto& p : raw) {
    sites.emplace_back(std::llround(p.east * kSiteScale), std::llround(p.north * kSiteScale));
  }
  std::sort(sites.begin(), sites.end(), [](const IntPoint& a, const IntPoint& b) {
    return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
  });
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
  return sites;
}

EnuPoint to_enu(const IntPoint& p) {
  return {static_cast<double>(p.x()) / kSiteScale, static_cast<double>(p.y()) / kSiteScale, 0.0};
}

}  // namespace

VoronoiGraph build_graph(const SiteMap& map, std::span<const DynamicObstacle> obstacles, const PlannerConfig& cfg,
                         std::uint64_t generation) {
  const auto space = std::make_shared<const FreeSpace>(map, obstacles, cfg.clearance_floor);
  const std::vector<IntPoint> sites = generator_sites(map, obstacles, cfg);

  boost::polygon::voronoi_diagram<double> vd;
  boost::polygon::construct_voronoi(sites.begin(), sites.end(), &vd);

  const auto& vertices = vd.vertices();
  const auto vertex_index = [&](const boost::polygon::voronoi_vertex<double>* v) {
    return static_cast<std::size_t>(v - vertices.data());
  };

  // Per-vertex position, site clearance and acceptance.
  std::vector<EnuPoint> pos(vertices.size());
  std::vector<double> site_clear(vertices.size(), -1.0);
  std::vector<char> keep(vertices.size(), 0);
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    pos[i] = {vertices[i].x() / kSiteScale, vertices[i].y() / kSiteScale, 0.0};
  }
  for (const auto& e : vd.edges()) {
    if (!e.is_finite()) continue;
    const EnuPoint site = to_enu(sites[e.cell()->source_index()]);
    for (const auto* v : {e.vertex0(), e.vertex1()}) {
      const std::size_t i = vertex_index(v);
      if (site_clear[i] < 0.0) site_clear[i] = geo::planar_distance(pos[i], site);
    }
  }
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    keep[i] = site_clear[i] >= cfg.clearance_floor && space->point_free(pos[i]);
  }

  struct RawEdge {
    std::size_t a, b;
    double length, min_clearance;
  };
  std::vector<RawEdge> raw_edges;
  for (const auto& e : vd.edges()) {
    if (!e.is_finite() || !e.is_primary() || &e > e.twin()) continue;
    const std::size_t a = vertex_index(e.vertex0());
    const std::size_t b = vertex_index(e.vertex1());
    if (a == b || !keep[a] || !keep[b]) continue;
    const EnuPoint site = to_enu(sites[e.cell()->source_index()]);
    // Every point of the edge is equidistant from its two generating sites.
    const double min_clear = geometry::point_segment_distance(site, pos[a], pos[b]);
    if (min_clear < cfg.clearance_floor || !space->segment_free(pos[a], pos[b])) continue;
    raw_edges.push_back({std::min(a, b), std::max(a, b), geo::planar_distance(pos[a], pos[b]), min_clear});
  }

  // Largest connected component; equal sizes resolve to the one holding the lowest vertex index.
  std::vector<std::size_t> parent(vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& e : raw_edges) {
    const std::size_t ra = find(e.a);
    const std::size_t rb = find(e.b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::size_t> component_size(vertices.size(), 0);
  std::vector<char> has_edge(vertices.size(), 0);
  for (const auto& e : raw_edges) {
    has_edge[e.a] = has_edge[e.b] = 1;
  }
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (keep[i] && has_edge[i]) ++component_size[find(i)];
  }
  std::size_t best_root = vertices.size();
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (component_size[i] > 0 && (best_root == vertices.size() || component_size[i] > component_size[best_root])) {
      best_root = i;
    }
  }

  VoronoiGraph g;
  g.generation = generation;
  g.clearance_floor = cfg.clearance_floor;
  g.site_count = sites.size();
  g.space = space;

  if (best_root == vertices.size()) {
    // No edges survived; fall back to the best isolated vertex if any.
    std::size_t lone = vertices.size();
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      if (keep[i]) {
        lone = i;
        break;
      }
    }
    if (lone == vertices.size()) {
      throw SiteBlocked("site fully blocked: no free roadmap node at clearance " +
                        std::to_string(cfg.clearance_floor) + " m");
    }
    g.nodes.push_back({pos[lone], site_clear[lone]});
    return g;
  }

  std::vector<std::size_t> remap(vertices.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (keep[i] && has_edge[i] && find(i) == best_root) {
      remap[i] = g.nodes.size();
      g.nodes.push_back({pos[i], site_clear[i]});
    }
  }
  for (const auto& e : raw_edges) {
    if (remap[e.a] == std::numeric_limits<std::size_t>::max()) continue;
    g.edges.push_back({remap[e.a], remap[e.b], e.length, e.min_clearance});
  }
  return g;
}

AugmentedGraph augment(const VoronoiGraph& graph, const EnuPoint& start, const EnuPoint& goal, int connect_k) {
  const FreeSpace& space = *graph.space;
  if (!space.point_free(start)) {
    throw PlacementError("start (" + std::to_string(start.east) + ", " + std::to_string(start.north) +
                         ") is not in free space");
  }
  if (!space.point_free(goal)) {
    throw PlacementError("goal (" + std::to_string(goal.east) + ", " + std::to_string(goal.north) +
                         ") is not in free space");
  }

  AugmentedGraph aug;
  const std::size_t n = graph.nodes.size();
  aug.nodes.reserve(n + 2);
  for (const auto& node : graph.nodes) aug.nodes.push_back(node.position);
  aug.nodes.push_back(start);
  aug.nodes.push_back(goal);
  aug.start = n;
  aug.goal = n + 1;
  aug.adjacency.assign(n + 2, {});
  for (const auto& e : graph.edges) {
    aug.adjacency[e.a].emplace_back(e.b, e.length);
    aug.adjacency[e.b].emplace_back(e.a, e.length);
  }

  const auto connect = [&](std::size_t terminal, const EnuPoint& p, const char* what) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(connect_k, 1)), n);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double da = geo::planar_distance(p, graph.nodes[a].position);
                        const double db = geo::planar_distance(p, graph.nodes[b].position);
                        return da != db ? da < db : a < b;
                      });
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t node = order[i];
      if (space.segment_free(p, graph.nodes[node].position)) {
        const double len = geo::planar_distance(p, graph.nodes[node].position);
        aug.adjacency[terminal].emplace_back(node, len);
        aug.adjacency[node].emplace_back(terminal, len);
        return;
      }
    }
    throw Unreachable(std::string("unreachable: no clear connection from ") + what + " to the roadmap");
  };
  connect(aug.start, start, "start");
  connect(aug.goal, goal, "goal");
  return aug;
}

SearchResult astar(const AugmentedGraph& g) {
  const std::size_t n = g.nodes.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Slightly under-scaled so the bound stays below rounded path sums.
  const auto h = [&](std::size_t v) { return geo::planar_distance(g.nodes[v], g.nodes[g.goal]) * (1.0 - 1e-9); };

  std::vector<double> cost(n, inf);
  std::vector<std::size_t> prev(n, n);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  SearchResult result;
  cost[g.start] = 0.0;
  open.emplace(h(g.start), g.start);
  while (!open.empty()) {
    const auto [f, u] = open.top();
    open.pop();
    if (f > cost[u] + h(u)) continue;  // stale entry; reopened nodes are pushed again
    result.expanded.push_back(u);
    if (u == g.goal) break;
    for (const auto& [v, w] : g.adjacency[u]) {
      const double c = cost[u] + w;
      if (c < cost[v]) {
        cost[v] = c;
        prev[v] = u;
        open.emplace(c + h(v), v);
      }
    }
  }
  if (cost[g.goal] == inf) {
    throw Unreachable("unreachable: goal is not connected to start on the roadmap");
  }
  for (std::size_t v = g.goal; v != n; v = prev[v]) {
    result.nodes.push_back(v);
    if (v == g.start) break;
  }
  std::reverse(result.nodes.begin(), result.nodes.end());
  result.cost = cost[g.goal];
  return result;
}

double path_clearance(std::span<const EnuPoint> waypoints, const FreeSpace& space) {
  if (waypoints.empty()) return 0.0;
  if (waypoints.size() == 1) return space.clearance(waypoints[0]);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    best = std::min(best, space.segment_clearance(waypoints[i - 1], waypoints[i]));
  }
  return best;
}

PlannedPath simplify(const PlannedPath& path, const FreeSpace& space) {
  const auto& w = path.waypoints;
  if (w.size() <= 2) return path;
  PlannedPath out;
  out.graph_generation = path.graph_generation;
  out.waypoints.push_back(w.front());
  std::size_t i = 0;
  while (i + 1 < w.size()) {
    std::size_t j = w.size() - 1;
    while (j > i + 1 && !space.segment_free(w[i], w[j])) --j;
    out.waypoints.push_back(w[j]);
    i = j;
  }
  out.length = path_length(out.waypoints);
  out.min_clearance = path_clearance(out.waypoints, space);
  return out;
}

PlannedPath simplify(const PlannedPath& path, const SiteMap& map, std::span<const DynamicObstacle> obstacles,
                     double clearance_floor) {
  return simplify(path, FreeSpace(map, obstacles, clearance_floor));
}

PlanDetail plan_detailed(const VoronoiGraph& graph, const EnuPoint& start, const EnuPoint& goal,
                         const PlannerConfig& cfg) {
  if (!graph.space) {
    throw Error("graph has no free-space model");
  }
  const AugmentedGraph aug = augment(graph, start, goal, cfg.connect_k);
  PlanDetail d;
  d.search = astar(aug);
  for (std::size_t v : d.search.nodes) d.raw.waypoints.push_back(aug.nodes[v]);
  d.raw.length = path_length(d.raw.waypoints);
  d.raw.min_clearance = path_clearance(d.raw.waypoints, *graph.space);
  d.raw.graph_generation = graph.generation;
  d.path = simplify(d.raw, *graph.space);
  return d;
}

PlannedPath plan(const VoronoiGraph& graph, const EnuPoint& start, const EnuPoint& goal, const PlannerConfig& cfg) {
  return plan_detailed(graph, start, goal, cfg).path;
}

nlohmann::json graph_to_json(const VoronoiGraph& graph) {
  nlohmann::json j;
  j["generation"] = graph.generation;
  j["clearance_floor"] = graph.clearance_floor;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : graph.nodes) {
    j["nodes"].push_back({n.position.east, n.position.north, n.clearance});
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges) {
    j["edges"].push_back({e.a, e.b});
  }
  return j;
}

}  // namespace siteops::planner
