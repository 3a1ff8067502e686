#pragma once

// Planar geometry on the east-north plane. The `up` component is ignored.

#include <span>
#include <vector>

#include "siteops/geo.hpp"

namespace siteops::geometry {

using geo::EnuPoint;
using Polygon = std::vector<EnuPoint>;

double cross(const EnuPoint& o, const EnuPoint& a, const EnuPoint& b);

double point_segment_distance(const EnuPoint& p, const EnuPoint& a, const EnuPoint& b);

/// True for proper and touching intersections, including collinear overlap.
bool segments_intersect(const EnuPoint& a, const EnuPoint& b, const EnuPoint& c, const EnuPoint& d);

double segment_segment_distance(const EnuPoint& a, const EnuPoint& b, const EnuPoint& c, const EnuPoint& d);

/// Positive for counter-clockwise vertex order.
double signed_area(std::span<const EnuPoint> poly);

/// Even-odd test; points on an edge may fall either way.
bool point_in_polygon(const EnuPoint& p, std::span<const EnuPoint> poly);

/// Distance from p to the polygon outline (not the interior).
double distance_to_outline(const EnuPoint& p, std::span<const EnuPoint> poly);

double segment_outline_distance(const EnuPoint& a, const EnuPoint& b, std::span<const EnuPoint> poly);

/// No two non-adjacent edges touch and no adjacent edges overlap.
bool is_simple(std::span<const EnuPoint> poly);

/// Points along the closed outline at most `spacing` apart, vertices included.
std::vector<EnuPoint> sample_outline(std::span<const EnuPoint> poly, double spacing);

}  // namespace siteops::geometry
