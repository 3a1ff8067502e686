#include "siteops/geolocator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "siteops/error.hpp"

namespace siteops::geoloc {

namespace {

const std::array<DetectorPreset, 8> kPresets{{
    {"ST-SSDv1-192", 594.4, 365.1, 124.7, 0.39},
    {"ST-SSDv1-256", 789.8, 208.8, 74.4, 0.21},
    {"SSDv2-256", 1559.2, 66.4, 33.6, 0.13},
    {"SSDv2-416", 1604.2, 25.0, 12.7, 0.06},
    {"YoloLC-192", 339.3, 796.6, 257.9, 0.85},
    {"YoloLC-256", 339.3, 447.1, 131.2, 0.44},
    {"TinyYolo-224", 11105.5, 74.7, 18.2, 0.13},
    {"TinyYolo-416", 11105.5, 22.0, 5.4, 0.05},
}};

double physical_size(ObjectClass c) {
  switch (c) {
    case ObjectClass::person: return 0.6;
    case ObjectClass::cone: return 0.4;
    case ObjectClass::vehicle: return 3.0;
  }
  return 1.0;
}

}  // namespace

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::person: return "person";
    case ObjectClass::cone: return "cone";
    case ObjectClass::vehicle: return "vehicle";
  }
  return "person";
}

ObjectClass object_class_from_string(std::string_view name) {
  if (name == "person") return ObjectClass::person;
  if (name == "cone") return ObjectClass::cone;
  if (name == "vehicle") return ObjectClass::vehicle;
  throw ValidationError("unknown object class '" + std::string(name) + "'", "class");
}

std::span<const DetectorPreset> builtin_presets() { return kPresets; }

std::vector<DetectorPreset> read_presets_csv(std::istream& in) {
  std::vector<DetectorPreset> out;
  std::string line;
  int line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "model,size_kb,fps_i7,fps_a72,fps_m7") {
        throw ValidationError("line " + std::to_string(line_no) + ": unexpected header", "header");
      }
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 5 columns", "row");
    }
    try {
      out.push_back({cells[0], std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4])});
    } catch (const std::exception&) {
      throw ValidationError("line " + std::to_string(line_no) + ": bad number", "row");
    }
  }
  if (out.empty()) {
    throw ValidationError("no detector presets", "rows");
  }
  return out;
}

void write_presets_csv(std::ostream& out, std::span<const DetectorPreset> presets) {
  out << "model,size_kb,fps_i7,fps_a72,fps_m7\n";
  for (const auto& p : presets) {
    out << p.model << ',' << p.size_kb << ',' << p.fps_i7 << ',' << p.fps_a72 << ',' << p.fps_m7 << '\n';
  }
}

DetectorProfile make_profile(std::span<const DetectorPreset> presets, std::string_view model,
                             std::string_view processor) {
  const auto it = std::find_if(presets.begin(), presets.end(), [&](const auto& p) { return p.model == model; });
  if (it == presets.end()) {
    throw ValidationError("unknown detector model '" + std::string(model) + "'", "detector.profile");
  }
  double fps = 0.0;
  std::string label;
  if (processor == "i7") {
    fps = it->fps_i7;
    label = "i7";
  } else if (processor == "a72") {
    fps = it->fps_a72;
    label = "A72";
  } else if (processor == "m7") {
    fps = it->fps_m7;
    label = "M7";
  } else {
    throw ValidationError("unknown processor '" + std::string(processor) + "'", "detector.processor");
  }
  if (!(fps > 0.0)) {
    throw ValidationError("profile fps must be positive", "detector.profile");
  }
  int input = 0;
  if (const auto dash = it->model.rfind('-'); dash != std::string::npos) {
    input = std::atoi(it->model.c_str() + dash + 1);
  }
  return {it->model + " on " + label, fps, input};
}

void validate(const Detection& d, const ImageSize& image) {
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
    throw ValidationError("confidence outside [0, 1]", "confidence");
  }
  if (d.w < 0.0 || d.h < 0.0 || d.cx - d.w / 2 < -1e-9 || d.cy - d.h / 2 < -1e-9 ||
      d.cx + d.w / 2 > image.width + 1e-9 || d.cy + d.h / 2 > image.height + 1e-9) {
    throw ValidationError("bounding box outside the image", "box");
  }
}

geo::EnuPoint detection_to_enu(const Detection& d, const DroneFix& fix, const scale::ScaleModel& model,
                               const ImageSize& image, const geo::GeoPoint& origin) {
  const double ppm = scale::predict_ppm(model, fix.altitude_agl);
  // Image y grows downward; flip so +y is "up" in the image plane.
  const double x = (d.cx - image.width / 2.0) / ppm;
  const double y = -(d.cy - image.height / 2.0) / ppm;
  const double c = std::cos(fix.yaw);
  const double s = std::sin(fix.yaw);
  const geo::EnuPoint drone = geo::geodetic_to_enu(origin, fix.position);
  return {drone.east + c * x - s * y, drone.north + s * x + c * y, 0.0};
}

std::optional<ObjectReport> to_report(const Detection& d, const DroneFix& fix, const scale::ScaleModel& model,
                                      const ImageSize& image, const geo::GeoPoint& origin, double confidence_floor) {
  if (d.confidence < confidence_floor) {
    return std::nullopt;
  }
  const geo::EnuPoint local = detection_to_enu(d, fix, model, image, origin);
  return ObjectReport{geo::enu_to_geodetic(origin, local), d.cls, d.confidence, fix.timestamp};
}

Footprint camera_footprint(const scale::ScaleModel& model, double altitude, const ImageSize& image) {
  const double ppm = scale::predict_ppm(model, altitude);
  return {image.width / ppm, image.height / ppm};
}

std::vector<Detection> simulate_detections(std::span<const Actor> actors, const DroneFix& fix,
                                           const scale::ScaleModel& model, const ImageSize& image,
                                           const geo::GeoPoint& origin, const NoiseConfig& noise, Rng& rng) {
  std::vector<Detection> out;
  const double ppm = scale::predict_ppm(model, fix.altitude_agl);
  const geo::EnuPoint drone = geo::geodetic_to_enu(origin, fix.position);
  const double c = std::cos(fix.yaw);
  const double s = std::sin(fix.yaw);
  for (const auto& actor : actors) {
    const double de = actor.position.east - drone.east;
    const double dn = actor.position.north - drone.north;
    const double x = c * de + s * dn;
    const double y = -s * de + c * dn;
    const double px = image.width / 2.0 + x * ppm;
    const double py = image.height / 2.0 - y * ppm;
    if (px < 0.0 || px >= image.width || py < 0.0 || py >= image.height) {
      continue;
    }
    // Draw every random value even for misses so one actor's outcome does not
    // shift the others' noise.
    const bool missed = rng.bernoulli(noise.miss_probability);
    const double nx = rng.normal(0.0, noise.pixel_sigma);
    const double ny = rng.normal(0.0, noise.pixel_sigma);
    const double conf = rng.uniform(noise.min_confidence, noise.max_confidence);
    if (missed) {
      continue;
    }
    Detection d;
    d.cx = std::clamp(px + nx, 0.0, static_cast<double>(image.width));
    d.cy = std::clamp(py + ny, 0.0, static_cast<double>(image.height));
    const double size = physical_size(actor.cls) * ppm;
    d.w = std::min(size, 2.0 * std::min(d.cx, image.width - d.cx));
    d.h = std::min(size, 2.0 * std::min(d.cy, image.height - d.cy));
    d.cls = actor.cls;
    d.confidence = std::clamp(conf, 0.0, 1.0);
    out.push_back(d);
  }
  return out;
}

DetectorSimulator::DetectorSimulator(DetectorProfile profile, scale::ScaleModel camera, ImageSize image,
                                     NoiseConfig noise, std::uint64_t seed)
    : profile_(std::move(profile)), camera_(std::move(camera)), image_(image), noise_(noise), rng_(seed) {
  if (!(profile_.fps > 0.0)) {
    throw ValidationError("detector fps must be positive", "detector.profile");
  }
}

std::optional<std::vector<Detection>> DetectorSimulator::poll(std::span<const Actor> actors, const DroneFix& fix,
                                                              const geo::GeoPoint& origin) {
  const double now = static_cast<double>(fix.timestamp);
  if (next_frame_ms_ && now < *next_frame_ms_) {
    return std::nullopt;
  }
  const double period = 1000.0 / profile_.fps;
  next_frame_ms_ = next_frame_ms_ ? *next_frame_ms_ + period : now + period;
  if (*next_frame_ms_ <= now) {
    next_frame_ms_ = now + period;
  }
  return simulate_detections(actors, fix, camera_, image_, origin, noise_, rng_);
}

}  // namespace siteops::geoloc
