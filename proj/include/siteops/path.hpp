#pragma once

#include <cstdint>
#include <vector>

#include "siteops/geo.hpp"

namespace siteops {

/// Waypoint route handed to a vehicle. `length` is the sum of segment lengths.
struct PlannedPath {
  std::vector<geo::EnuPoint> waypoints;
  double length = 0.0;
  double min_clearance = 0.0;
  std::uint64_t graph_generation = 0;
};

double path_length(const std::vector<geo::EnuPoint>& waypoints);

}  // namespace siteops
