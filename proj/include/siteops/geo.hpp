#pragma once

#include <numbers>

namespace siteops::geo {

/// WGS84 geodetic position. Degrees, meters above the ellipsoid.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  double alt = 0.0;

  bool operator==(const GeoPoint&) const = default;
};

/// Local east-north-up offset from a site origin, meters.
struct EnuPoint {
  double east = 0.0;
  double north = 0.0;
  double up = 0.0;

  bool operator==(const EnuPoint&) const = default;
};

/// Ground pose. Yaw is counter-clockwise from east, kept in (-pi, pi].
struct Pose2D {
  EnuPoint position;
  double yaw = 0.0;
};

struct Ecef {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

namespace wgs84 {
inline constexpr double kSemiMajor = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kEccentricitySq = kFlattening * (2.0 - kFlattening);
}  // namespace wgs84

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Throws ValidationError on out-of-range latitude/longitude or non-finite altitude.
void validate(const GeoPoint& p);
void validate(const EnuPoint& p);

double normalize_yaw(double yaw);

Ecef to_ecef(const GeoPoint& p);
GeoPoint from_ecef(const Ecef& e);

EnuPoint geodetic_to_enu(const GeoPoint& origin, const GeoPoint& p);
GeoPoint enu_to_geodetic(const GeoPoint& origin, const EnuPoint& p);

double planar_distance(const EnuPoint& a, const EnuPoint& b);

}  // namespace siteops::geo
