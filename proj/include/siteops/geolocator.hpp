#pragma once

// Image-frame detections from the surveying UAV to world-frame object reports,
// and a rate-calibrated detector simulator standing in for on-board inference.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siteops/geo.hpp"
#include "siteops/random.hpp"
#include "siteops/scale_model.hpp"

namespace siteops::geoloc {

enum class ObjectClass { person, cone, vehicle };

std::string_view to_string(ObjectClass c);
/// Throws ValidationError for unknown names.
ObjectClass object_class_from_string(std::string_view name);

struct ImageSize {
  int width = 1920;
  int height = 1080;
};

/// Bounding box in pixels, origin at the top-left of the image.
struct Detection {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  ObjectClass cls = ObjectClass::person;
  double confidence = 0.0;
};

struct DroneFix {
  geo::GeoPoint position;
  double yaw = 0.0;           // rad, CCW from east; the image +x axis points along it
  double altitude_agl = 0.0;  // m
  std::int64_t timestamp = 0; // ms
};

struct ObjectReport {
  geo::GeoPoint position;
  ObjectClass cls = ObjectClass::person;
  double confidence = 0.0;
  std::int64_t source_ts = 0;
};

struct DetectorProfile {
  std::string name;
  double fps = 0.0;
  int input_size = 0;  // px, square model input
};

/// One row of the throughput table: frames per second per processor.
struct DetectorPreset {
  std::string model;
  double size_kb = 0.0;
  double fps_i7 = 0.0;
  double fps_a72 = 0.0;
  double fps_m7 = 0.0;
};

inline constexpr double kDefaultConfidenceFloor = 0.5;
inline constexpr double kDefaultSurveyAltitude = 8.0;

/// Measured rates of the quantized detectors on i7-8700, Cortex-A72 and Cortex-M7.
std::span<const DetectorPreset> builtin_presets();
std::vector<DetectorPreset> read_presets_csv(std::istream& in);
void write_presets_csv(std::ostream& out, std::span<const DetectorPreset> presets);

/// `processor` is one of "i7", "a72", "m7". Throws ValidationError when unknown.
DetectorProfile make_profile(std::span<const DetectorPreset> presets, std::string_view model,
                             std::string_view processor);

void validate(const Detection& d, const ImageSize& image);

geo::EnuPoint detection_to_enu(const Detection& d, const DroneFix& fix, const scale::ScaleModel& model,
                               const ImageSize& image, const geo::GeoPoint& origin);

/// Nullopt when the detection's confidence is below `confidence_floor`.
std::optional<ObjectReport> to_report(const Detection& d, const DroneFix& fix, const scale::ScaleModel& model,
                                      const ImageSize& image, const geo::GeoPoint& origin,
                                      double confidence_floor = kDefaultConfidenceFloor);

struct Actor {
  geo::EnuPoint position;
  ObjectClass cls = ObjectClass::person;
};

struct NoiseConfig {
  double pixel_sigma = 2.0;
  double miss_probability = 0.05;
  double min_confidence = 0.6;
  double max_confidence = 0.95;
};

/// Ground footprint of the nadir camera, meters along image x and y.
struct Footprint {
  double along_x = 0.0;
  double along_y = 0.0;
};

Footprint camera_footprint(const scale::ScaleModel& model, double altitude, const ImageSize& image);

/// One simulated frame: actors inside the footprint projected into the image
/// (the inverse of detection_to_enu) with pixel noise and random misses.
std::vector<Detection> simulate_detections(std::span<const Actor> actors, const DroneFix& fix,
                                           const scale::ScaleModel& model, const ImageSize& image,
                                           const geo::GeoPoint& origin, const NoiseConfig& noise, Rng& rng);

/// Emits frames at the profile's rate on the simulation clock.
class DetectorSimulator {
 public:
  DetectorSimulator(DetectorProfile profile, scale::ScaleModel camera, ImageSize image, NoiseConfig noise,
                    std::uint64_t seed);

  const DetectorProfile& profile() const { return profile_; }
  const scale::ScaleModel& camera() const { return camera_; }
  const ImageSize& image() const { return image_; }

  /// Returns a frame when one is due at `fix.timestamp`, otherwise nullopt.
  std::optional<std::vector<Detection>> poll(std::span<const Actor> actors, const DroneFix& fix,
                                             const geo::GeoPoint& origin);

 private:
  DetectorProfile profile_;
  scale::ScaleModel camera_;
  ImageSize image_;
  NoiseConfig noise_;
  Rng rng_;
  std::optional<double> next_frame_ms_;
};

}  // namespace siteops::geoloc
