#include "siteops/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace siteops::geometry {

double cross(const EnuPoint& o, const EnuPoint& a, const EnuPoint& b) {
  return (a.east - o.east) * (b.north - o.north) - (a.north - o.north) * (b.east - o.east);
}

double point_segment_distance(const EnuPoint& p, const EnuPoint& a, const EnuPoint& b) {
  const double dx = b.east - a.east;
  const double dy = b.north - a.north;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp(((p.east - a.east) * dx + (p.north - a.north) * dy) / len2, 0.0, 1.0);
  }
  return std::hypot(p.east - (a.east + t * dx), p.north - (a.north + t * dy));
}

namespace {

int orientation(const EnuPoint& a, const EnuPoint& b, const EnuPoint& c) {
  const double v = cross(a, b, c);
  if (v > 0.0) return 1;
  if (v < 0.0) return -1;
  return 0;
}

bool on_segment(const EnuPoint& a, const EnuPoint& b, const EnuPoint& p) {
  return std::min(a.east, b.east) <= p.east && p.east <= std::max(a.east, b.east) &&
         std::min(a.north, b.north) <= p.north && p.north <= std::max(a.north, b.north);
}

}  // namespace

bool segments_intersect(const EnuPoint& a, const EnuPoint& b, const EnuPoint& c, const EnuPoint& d) {
  const int o1 = orientation(a, b, c);
  const int o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a);
  const int o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

double segment_segment_distance(const EnuPoint& a, const EnuPoint& b, const EnuPoint& c, const EnuPoint& d) {
  if (segments_intersect(a, b, c, d)) {
    return 0.0;
  }
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d), point_segment_distance(c, a, b),
                   point_segment_distance(d, a, b)});
}

double signed_area(std::span<const EnuPoint> poly) {
  double s = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    s += p.east * q.north - q.east * p.north;
  }
  return 0.5 * s;
}

bool point_in_polygon(const EnuPoint& p, std::span<const EnuPoint> poly) {
  bool inside = false;
  for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.north > p.north) != (b.north > p.north)) {
      const double x = (b.east - a.east) * (p.north - a.north) / (b.north - a.north) + a.east;
      if (p.east < x) inside = !inside;
    }
  }
  return inside;
}

double distance_to_outline(const EnuPoint& p, std::span<const EnuPoint> poly) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
  }
  return best;
}

double segment_outline_distance(const EnuPoint& a, const EnuPoint& b, std::span<const EnuPoint> poly) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    best = std::min(best, segment_segment_distance(a, b, poly[i], poly[(i + 1) % n]));
    if (best == 0.0) break;
  }
  return best;
}

bool is_simple(std::span<const EnuPoint> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    if (a == b) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& c = poly[j];
      const auto& d = poly[(j + 1) % n];
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges share one vertex; they must not fold back onto each other.
        const EnuPoint& shared = (j == i + 1) ? b : a;
        const EnuPoint& other1 = (j == i + 1) ? a : b;
        const EnuPoint& other2 = (j == i + 1) ? d : c;
        if (orientation(shared, other1, other2) == 0) {
          const double dot = (other1.east - shared.east) * (other2.east - shared.east) +
                             (other1.north - shared.north) * (other2.north - shared.north);
          if (dot > 0.0) return false;
        }
        continue;
      }
      if (segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

std::vector<EnuPoint> sample_outline(std::span<const EnuPoint> poly, double spacing) {
  std::vector<EnuPoint> out;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    const double len = std::hypot(b.east - a.east, b.north - a.north);
    const int steps = std::max(1, static_cast<int>(std::ceil(len / spacing - 1e-9)));
    for (int k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) / steps;
      out.push_back({a.east + t * (b.east - a.east), a.north + t * (b.north - a.north), 0.0});
    }
  }
  return out;
}

}  // namespace siteops::geometry
