#include "siteops/geo.hpp"

#include <cmath>

#include "siteops/error.hpp"

namespace siteops::geo {

namespace {

// Local-tangent validity limit for the ENU conversions.
constexpr double kMaxBaseline = 100'000.0;

struct EnuBasis {
  double sin_lat, cos_lat, sin_lon, cos_lon;

  explicit EnuBasis(const GeoPoint& origin)
      : sin_lat(std::sin(deg2rad(origin.lat))),
        cos_lat(std::cos(deg2rad(origin.lat))),
        sin_lon(std::sin(deg2rad(origin.lon))),
        cos_lon(std::cos(deg2rad(origin.lon))) {}
};

}  // namespace

void validate(const GeoPoint& p) {
  if (!std::isfinite(p.lat) || p.lat < -90.0 || p.lat > 90.0) {
    throw ValidationError("latitude out of range [-90, 90]", "lat");
  }
  if (!std::isfinite(p.lon) || p.lon < -180.0 || p.lon > 180.0) {
    throw ValidationError("longitude out of range [-180, 180]", "lon");
  }
  if (!std::isfinite(p.alt)) {
    throw ValidationError("altitude must be finite", "alt");
  }
}

void validate(const EnuPoint& p) {
  if (!std::isfinite(p.east) || !std::isfinite(p.north) || !std::isfinite(p.up)) {
    throw ValidationError("ENU components must be finite", "enu");
  }
}

double normalize_yaw(double yaw) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(yaw, two_pi);
  if (y <= -std::numbers::pi) {
    y += two_pi;
  } else if (y > std::numbers::pi) {
    y -= two_pi;
  }
  return y;
}

Ecef to_ecef(const GeoPoint& p) {
  using namespace wgs84;
  const double lat = deg2rad(p.lat);
  const double lon = deg2rad(p.lon);
  const double sin_lat = std::sin(lat);
  const double cos_lat = std::cos(lat);
  const double n = kSemiMajor / std::sqrt(1.0 - kEccentricitySq * sin_lat * sin_lat);
  return {(n + p.alt) * cos_lat * std::cos(lon), (n + p.alt) * cos_lat * std::sin(lon),
          (n * (1.0 - kEccentricitySq) + p.alt) * sin_lat};
}

GeoPoint from_ecef(const Ecef& e) {
  using namespace wgs84;
  const double p = std::hypot(e.x, e.y);
  const double lon = std::atan2(e.y, e.x);

  // Fixed-point iteration on latitude; converges to machine precision in a
  // handful of steps for terrestrial heights.
  double lat = std::atan2(e.z, p * (1.0 - kEccentricitySq));
  double alt = 0.0;
  for (int i = 0; i < 16; ++i) {
    const double sin_lat = std::sin(lat);
    const double n = kSemiMajor / std::sqrt(1.0 - kEccentricitySq * sin_lat * sin_lat);
    const double cos_lat = std::cos(lat);
    if (std::abs(cos_lat) > 1e-6) {
      alt = p / cos_lat - n;
    } else {
      alt = e.z / sin_lat - n * (1.0 - kEccentricitySq);
    }
    const double next = std::atan2(e.z, p * (1.0 - kEccentricitySq * n / (n + alt)));
    const bool done = std::abs(next - lat) < 1e-15;
    lat = next;
    if (done) {
      break;
    }
  }
  return {rad2deg(lat), rad2deg(lon), alt};
}

EnuPoint geodetic_to_enu(const GeoPoint& origin, const GeoPoint& p) {
  validate(origin);
  validate(p);
  if (origin == p) {
    return {};
  }
  const Ecef o = to_ecef(origin);
  const Ecef q = to_ecef(p);
  const double dx = q.x - o.x;
  const double dy = q.y - o.y;
  const double dz = q.z - o.z;
  if (std::sqrt(dx * dx + dy * dy + dz * dz) >= kMaxBaseline) {
    throw ValidationError("point is beyond the 100 km local-tangent limit", "position");
  }
  const EnuBasis b(origin);
  return {-b.sin_lon * dx + b.cos_lon * dy,
          -b.sin_lat * b.cos_lon * dx - b.sin_lat * b.sin_lon * dy + b.cos_lat * dz,
          b.cos_lat * b.cos_lon * dx + b.cos_lat * b.sin_lon * dy + b.sin_lat * dz};
}

GeoPoint enu_to_geodetic(const GeoPoint& origin, const EnuPoint& p) {
  validate(origin);
  validate(p);
  if (p.east == 0.0 && p.north == 0.0 && p.up == 0.0) {
    return origin;
  }
  const EnuBasis b(origin);
  const Ecef o = to_ecef(origin);
  const double dx = -b.sin_lon * p.east - b.sin_lat * b.cos_lon * p.north + b.cos_lat * b.cos_lon * p.up;
  const double dy = b.cos_lon * p.east - b.sin_lat * b.sin_lon * p.north + b.cos_lat * b.sin_lon * p.up;
  const double dz = b.cos_lat * p.north + b.sin_lat * p.up;
  return from_ecef({o.x + dx, o.y + dy, o.z + dz});
}

double planar_distance(const EnuPoint& a, const EnuPoint& b) {
  return std::hypot(b.east - a.east, b.north - a.north);
}

}  // namespace siteops::geo
