#include <doctest.h>

#include <cmath>
#include <numbers>

#include "siteops/error.hpp"
#include "siteops/geo.hpp"
#include "siteops/random.hpp"

using namespace siteops;
using namespace siteops::geo;

namespace {

// Meridian arc length from the equator to `lat_deg` on WGS84, by composite
// Simpson quadrature of the meridional radius of curvature.
double meridian_arc(double lat_deg) {
  const double a = 6378137.0;
  const double f = 1.0 / 298.257223563;
  const double e2 = f * (2.0 - f);
  const double phi = lat_deg * std::numbers::pi / 180.0;
  auto m = [&](double t) {
    const double s = std::sin(t);
    return a * (1.0 - e2) / std::pow(1.0 - e2 * s * s, 1.5);
  };
  const int n = 1000;
  const double h = phi / n;
  double sum = m(0.0) + m(phi);
  for (int i = 1; i < n; ++i) {
    sum += (i % 2 ? 4.0 : 2.0) * m(i * h);
  }
  return sum * h / 3.0;
}

}  // namespace

TEST_CASE("origin maps to zero") {
  const GeoPoint o{40.78, 29.45, 120.0};
  const EnuPoint e = geodetic_to_enu(o, o);
  CHECK(e.east == 0.0);
  CHECK(e.north == 0.0);
  CHECK(e.up == 0.0);
  CHECK(enu_to_geodetic(o, {}) == o);
}

TEST_CASE("thousandth of a degree of latitude at the equator matches the meridian arc") {
  const double oracle = meridian_arc(0.001);
  CHECK(std::abs(oracle - 110.574) < 0.01);

  const EnuPoint e = geodetic_to_enu({0, 0, 0}, {0.001, 0, 0});
  CHECK(std::abs(e.north - oracle) < 0.01);
  CHECK(std::abs(e.east) < 1e-9);

  const GeoPoint back = enu_to_geodetic({0, 0, 0}, e);
  CHECK(std::abs(back.lat - 0.001) < 1e-12);
  CHECK(std::abs(back.lon) < 1e-12);
  CHECK(std::abs(back.alt) < 1e-6);
}

TEST_CASE("up-only offset keeps latitude and longitude") {
  const GeoPoint o{40.78, 29.45, 55.0};
  const GeoPoint p = enu_to_geodetic(o, {0, 0, 10});
  CHECK(std::abs(p.lat - o.lat) < 1e-11);
  CHECK(std::abs(p.lon - o.lon) < 1e-11);
  CHECK(std::abs(p.alt - 65.0) < 1e-6);
}

TEST_CASE("round trip within 1e-9 degrees for points within 1 km") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const GeoPoint o{rng.uniform(-80, 80), rng.uniform(-179, 179), rng.uniform(-50, 500)};
    const EnuPoint offset{rng.uniform(-700, 700), rng.uniform(-700, 700), rng.uniform(-50, 50)};
    const GeoPoint p = enu_to_geodetic(o, offset);
    const GeoPoint q = enu_to_geodetic(o, geodetic_to_enu(o, p));
    REQUIRE(std::abs(q.lat - p.lat) < 1e-9);
    REQUIRE(std::abs(q.lon - p.lon) < 1e-9);
    const EnuPoint r = geodetic_to_enu(o, p);
    REQUIRE(std::abs(r.east - offset.east) < 1e-5);
    REQUIRE(std::abs(r.north - offset.north) < 1e-5);
  }
}

TEST_CASE("validation rejects out-of-range coordinates") {
  CHECK_THROWS_AS(geodetic_to_enu({91, 0, 0}, {0, 0, 0}), ValidationError);
  CHECK_THROWS_AS(geodetic_to_enu({0, 0, 0}, {0, 181, 0}), ValidationError);
  CHECK_THROWS_AS(geodetic_to_enu({0, 0, 0}, {0, 0, NAN}), ValidationError);
  CHECK_THROWS_AS(enu_to_geodetic({0, -200, 0}, {}), ValidationError);
  CHECK_THROWS_AS(geodetic_to_enu({0, 0, 0}, {1.0, 0, 0}), ValidationError);  // ~110 km baseline
}

TEST_CASE("planar distance") {
  CHECK(planar_distance({1, 2, 3}, {1, 2, 9}) == 0.0);
  CHECK(planar_distance({0, 0, 0}, {3, 4, 0}) == 5.0);

  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const EnuPoint a{rng.uniform(-100, 100), rng.uniform(-100, 100), 0};
    const EnuPoint b{rng.uniform(-100, 100), rng.uniform(-100, 100), 0};
    const EnuPoint c{rng.uniform(-100, 100), rng.uniform(-100, 100), 0};
    CHECK(planar_distance(a, b) == planar_distance(b, a));
    CHECK(planar_distance(a, c) <= planar_distance(a, b) + planar_distance(b, c) + 1e-12);
  }
}

TEST_CASE("yaw normalization lands in (-pi, pi]") {
  const double pi = std::numbers::pi;
  CHECK(normalize_yaw(pi) == doctest::Approx(pi));
  CHECK(normalize_yaw(-pi) == doctest::Approx(pi));
  CHECK(normalize_yaw(3 * pi / 2) == doctest::Approx(-pi / 2));
  CHECK(normalize_yaw(0.25) == doctest::Approx(0.25));
}
