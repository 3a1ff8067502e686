#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "siteops/error.hpp"
#include "siteops/geolocator.hpp"

using namespace siteops;
using namespace siteops::geoloc;
using geo::EnuPoint;
using geo::GeoPoint;

namespace {

const GeoPoint kOrigin{40.7862, 29.4495, 80.0};
const ImageSize kImage{1920, 1080};

// Constant 125 px/m, i.e. an 8 m pinhole altitude with f = 1000 px.
scale::ScaleModel flat_model() { return scale::ScaleModel::from_raw({125.0, 0.0}, 3.0, 20.0); }

scale::ScaleModel pinhole_cubic() {
  std::vector<scale::ScaleSample> s;
  for (int i = 0; i <= 170; ++i) {
    const double h = 3.0 + 0.1 * i;
    s.push_back({h, 1000.0 / h});
  }
  scale::FitConfig cfg;
  cfg.inlier_threshold = 40.0;
  return scale::fit_ransac(s, 3, cfg);
}

DroneFix fix_at(const EnuPoint& p, double yaw, std::int64_t ts = 0) {
  return {geo::enu_to_geodetic(kOrigin, p), yaw, p.up, ts};
}

EnuPoint rotate(double x, double y, double yaw) {
  return {std::cos(yaw) * x - std::sin(yaw) * y, std::sin(yaw) * x + std::cos(yaw) * y, 0.0};
}

}  // namespace

TEST_CASE("center detection lands under the drone") {
  for (double yaw : {0.0, 0.7, -2.0, std::numbers::pi}) {
    const Detection d{960, 540, 20, 20, ObjectClass::person, 0.9};
    const EnuPoint e = detection_to_enu(d, fix_at({10, 20, 8}, yaw), flat_model(), kImage, kOrigin);
    CHECK(e.east == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(e.north == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(e.up == 0.0);
  }
}

TEST_CASE("pixel offsets scale by 1/ppm and rotate with yaw") {
  const Detection right{1060, 540, 10, 10, ObjectClass::person, 0.9};
  const EnuPoint e0 = detection_to_enu(right, fix_at({0, 0, 8}, 0.0), flat_model(), kImage, kOrigin);
  CHECK(e0.east == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(std::abs(e0.north) < 1e-6);

  const EnuPoint e90 = detection_to_enu(right, fix_at({0, 0, 8}, std::numbers::pi / 2), flat_model(), kImage, kOrigin);
  CHECK(std::abs(e90.east) < 1e-6);
  CHECK(e90.north == doctest::Approx(0.8).epsilon(1e-9));

  // Image up is +y before rotation.
  const Detection up{960, 440, 10, 10, ObjectClass::person, 0.9};
  const EnuPoint eu = detection_to_enu(up, fix_at({0, 0, 8}, 0.0), flat_model(), kImage, kOrigin);
  CHECK(eu.north == doctest::Approx(0.8).epsilon(1e-9));

  for (double theta : {0.0, std::numbers::pi / 2, std::numbers::pi, -std::numbers::pi / 2}) {
    const Detection d{1200, 300, 10, 10, ObjectClass::cone, 0.9};
    const EnuPoint got = detection_to_enu(d, fix_at({3, -4, 8}, theta), flat_model(), kImage, kOrigin);
    const EnuPoint want = rotate(240.0 / 125.0, 240.0 / 125.0, theta);
    CHECK(got.east - 3.0 == doctest::Approx(want.east).epsilon(1e-7).scale(1.0));
    CHECK(got.north + 4.0 == doctest::Approx(want.north).epsilon(1e-7).scale(1.0));
  }
}

TEST_CASE("reports") {
  const Detection center{960, 540, 10, 10, ObjectClass::person, 0.8};
  const DroneFix fix{kOrigin, 0.3, 8.0, 1234};
  const auto r = to_report(center, fix, flat_model(), kImage, kOrigin);
  REQUIRE(r);
  CHECK(r->position.lat == doctest::Approx(kOrigin.lat).epsilon(1e-12));
  CHECK(r->position.lon == doctest::Approx(kOrigin.lon).epsilon(1e-12));
  CHECK(r->source_ts == 1234);
  CHECK(r->cls == ObjectClass::person);
  CHECK(r->confidence == 0.8);

  Detection weak = center;
  weak.confidence = 0.4;
  CHECK_FALSE(to_report(weak, fix, flat_model(), kImage, kOrigin));

  Rng rng(3);
  const auto model = pinhole_cubic();
  for (int i = 0; i < 200; ++i) {
    const Detection d{rng.uniform(10, 1900), rng.uniform(10, 1070), 5, 5, ObjectClass::person, 0.9};
    const DroneFix f = fix_at({rng.uniform(-40, 40), rng.uniform(-20, 20), rng.uniform(5, 15)}, rng.uniform(-3, 3));
    const auto rep = to_report(d, f, model, kImage, kOrigin);
    REQUIRE(rep);
    const GeoPoint want = geo::enu_to_geodetic(kOrigin, detection_to_enu(d, f, model, kImage, kOrigin));
    CHECK(rep->position == want);
  }
}

TEST_CASE("scale model errors propagate") {
  const Detection d{960, 540, 10, 10, ObjectClass::person, 0.9};
  CHECK_THROWS_AS(detection_to_enu(d, fix_at({0, 0, 60}, 0.0), flat_model(), kImage, kOrigin), scale::ExtrapolationError);
}

TEST_CASE("detector presets mirror the throughput table") {
  const auto presets = builtin_presets();
  CHECK(presets.size() == 8);
  const auto m7 = make_profile(presets, "YoloLC-192", "m7");
  CHECK(m7.fps == 0.85);
  CHECK(m7.input_size == 192);
  CHECK(m7.name == "YoloLC-192 on M7");
  CHECK(make_profile(presets, "YoloLC-192", "a72").fps == 257.9);
  CHECK(make_profile(presets, "ST-SSDv1-256", "i7").fps == 208.8);
  CHECK(make_profile(presets, "TinyYolo-416", "m7").fps == 0.05);
  CHECK_THROWS_AS(make_profile(presets, "YoloLC-192", "gpu"), ValidationError);
  CHECK_THROWS_AS(make_profile(presets, "Unknown", "m7"), ValidationError);

  std::ostringstream out;
  write_presets_csv(out, presets);
  std::istringstream in(out.str());
  const auto back = read_presets_csv(in);
  REQUIRE(back.size() == presets.size());
  CHECK(back[4].model == "YoloLC-192");
  CHECK(back[4].fps_a72 == 257.9);
}

TEST_CASE("simulated detections invert geolocation") {
  const auto model = pinhole_cubic();
  const double ppm8 = scale::predict_ppm(model, 8.0);
  NoiseConfig noisy;
  noisy.miss_probability = 0.0;
  Rng rng(17);

  SUBCASE("actor directly below") {
    const std::vector<Actor> actors{{{5, 5, 0}, ObjectClass::person}};
    const auto dets = simulate_detections(actors, fix_at({5, 5, 8}, 0.4), model, kImage, kOrigin, noisy, rng);
    REQUIRE(dets.size() == 1);
    CHECK(std::abs(dets[0].cx - 960) < 5 * noisy.pixel_sigma);
    CHECK(std::abs(dets[0].cy - 540) < 5 * noisy.pixel_sigma);
    validate(dets[0], kImage);
  }

  SUBCASE("noisy round trip stays within 3 sigma") {
    const double sigma_m = noisy.pixel_sigma / ppm8;
    int outside = 0;
    for (int i = 0; i < 1000; ++i) {
      const double yaw = rng.uniform(-3.1, 3.1);
      const EnuPoint drone{rng.uniform(-30, 30), rng.uniform(-15, 15), 8.0};
      const EnuPoint offset = rotate(rng.uniform(-6, 6), rng.uniform(-3, 3), yaw);
      const Actor a{{drone.east + offset.east, drone.north + offset.north, 0}, ObjectClass::person};
      const auto fix = fix_at(drone, yaw);
      const auto dets = simulate_detections(std::span(&a, 1), fix, model, kImage, kOrigin, noisy, rng);
      REQUIRE(dets.size() == 1);
      const EnuPoint back = detection_to_enu(dets[0], fix, model, kImage, kOrigin);
      const double ex = back.east - a.position.east;
      const double ey = back.north - a.position.north;
      if (std::abs(ex) > 3 * sigma_m || std::abs(ey) > 3 * sigma_m) ++outside;
    }
    // Per-axis 3-sigma band holds ~99.7% of draws.
    CHECK(outside <= 15);
  }

  SUBCASE("noiseless round trip is unbiased at any yaw") {
    NoiseConfig clean;
    clean.pixel_sigma = 0.0;
    clean.miss_probability = 0.0;
    double sx = 0, sy = 0;
    for (int i = 0; i < 1000; ++i) {
      const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const EnuPoint drone{rng.uniform(-30, 30), rng.uniform(-15, 15), 8.0};
      const EnuPoint offset = rotate(rng.uniform(-6, 6), rng.uniform(-3, 3), yaw);
      const Actor a{{drone.east + offset.east, drone.north + offset.north, 0}, ObjectClass::person};
      const auto fix = fix_at(drone, yaw);
      const auto dets = simulate_detections(std::span(&a, 1), fix, model, kImage, kOrigin, clean, rng);
      REQUIRE(dets.size() == 1);
      const EnuPoint back = detection_to_enu(dets[0], fix, model, kImage, kOrigin);
      sx += back.east - a.position.east;
      sy += back.north - a.position.north;
      CHECK(std::hypot(back.east - a.position.east, back.north - a.position.north) < 1e-6);
    }
    CHECK(std::hypot(sx / 1000, sy / 1000) < 0.1);
  }

  SUBCASE("actors outside the footprint are never detected") {
    const Footprint fp = camera_footprint(model, 8.0, kImage);
    CHECK(fp.along_x == doctest::Approx(1920 / ppm8));
    for (int i = 0; i < 500; ++i) {
      const double yaw = rng.uniform(-3, 3);
      const double x = rng.uniform(-30, 30);
      const double y = rng.uniform(-30, 30);
      const bool inside = std::abs(x) < fp.along_x / 2 && std::abs(y) < fp.along_y / 2;
      const EnuPoint off = rotate(x, y, yaw);
      const Actor a{{off.east, off.north, 0}, ObjectClass::person};
      const auto dets = simulate_detections(std::span(&a, 1), fix_at({0, 0, 8}, yaw), model, kImage, kOrigin, noisy, rng);
      if (!inside) {
        const bool near_edge = std::abs(std::abs(x) - fp.along_x / 2) < 1e-6 || std::abs(std::abs(y) - fp.along_y / 2) < 1e-6;
        if (!near_edge) CHECK(dets.empty());
      } else {
        CHECK(dets.size() == 1);
      }
    }
  }
}

TEST_CASE("detector cadence follows the profile rate") {
  DetectorSimulator sim(make_profile(builtin_presets(), "YoloLC-192", "m7"), pinhole_cubic(), kImage, NoiseConfig{}, 1);
  int frames = 0;
  for (std::int64_t t = 0; t < 10'000; t += 100) {
    if (sim.poll({}, fix_at({0, 0, 8}, 0.0, t), kOrigin)) ++frames;
  }
  // 0.85 frames/s: frames start at 0, 1176.5, ..., 9411.8 ms
  CHECK(frames == 9);

  DetectorSimulator fast(make_profile(builtin_presets(), "YoloLC-192", "a72"), pinhole_cubic(), kImage, NoiseConfig{}, 1);
  int fast_frames = 0;
  for (std::int64_t t = 0; t < 1'000; t += 100) {
    if (fast.poll({}, fix_at({0, 0, 8}, 0.0, t), kOrigin)) ++fast_frames;
  }
  CHECK(fast_frames == 10);  // capped by the 10 Hz tick
}
