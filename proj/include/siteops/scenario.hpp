#pragma once

// Scenario documents and the simulated world they describe.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siteops/bus/endpoint.hpp"
#include "siteops/geolocator.hpp"
#include "siteops/sitemap.hpp"
#include "siteops/tasking.hpp"
#include "siteops/vehicle_sim.hpp"

namespace siteops::sim {

/// Scripted ground actor walking back and forth along `path` from `start`.
struct ActorScript {
  std::string name;
  EnuPoint start;
  std::vector<EnuPoint> path;
  geoloc::ObjectClass cls = geoloc::ObjectClass::person;
  double appear_at_s = 0.0;
  std::optional<double> disappear_at_s;
  double speed = 1.0;  // m/s

  std::optional<EnuPoint> position_at(double t_s) const;
};

struct VehicleEntry {
  VehicleSpec spec;
  geo::Pose2D start;
};

struct Scenario {
  std::string name;
  std::filesystem::path map_path;
  sitemap::SiteMap map;
  std::uint64_t seed = 1;
  std::vector<VehicleEntry> vehicles;
  geoloc::DetectorProfile detector;
  double confidence_floor = geoloc::kDefaultConfidenceFloor;
  std::vector<ActorScript> actors;
  std::optional<nlohmann::json> operation;
  double max_sim_time_s = 900.0;
  double drop_probability = 0.0;
};

/// Throws ValidationError naming the offending field (e.g. `vehicles[1].kind`).
Scenario scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

using EndpointFactory = std::function<std::unique_ptr<bus::Endpoint>(const std::string& client_id)>;

/// Counters for the metrics report.
struct WorldStats {
  std::uint64_t frames = 0;
  std::uint64_t detections = 0;
  std::uint64_t reports = 0;
  std::uint64_t orders_accepted = 0;
  std::uint64_t orders_rejected = 0;
};

/// All simulated vehicles, actors and the UAV detector, one bus session per vehicle.
class SimWorld {
 public:
  SimWorld(const Scenario& scenario, const scale::ScaleModel& camera, const EndpointFactory& endpoints);

  /// Applies received orders, ticks every vehicle, runs the detector and publishes in vehicle-id order.
  void step(const SimClock& clock);

  const std::vector<SimVehicle>& vehicles() const { return vehicles_; }
  const SimVehicle* vehicle(const std::string& id) const;
  /// Actors present at `t_s`, in scenario order.
  std::vector<std::pair<std::size_t, geoloc::Actor>> actors_at(double t_s) const;
  const WorldStats& stats() const { return stats_; }

 private:
  const Scenario& scenario_;
  scale::ScaleModel camera_;
  std::vector<SimVehicle> vehicles_;  // ascending id
  std::vector<std::unique_ptr<bus::Endpoint>> endpoints_;
  std::vector<std::optional<geoloc::DetectorSimulator>> detectors_;
  // Reports wait for inference to finish: one frame period after capture.
  std::vector<std::vector<std::pair<std::int64_t, geoloc::ObjectReport>>> inflight_;
  bool announced_ = false;
  WorldStats stats_;
};

}  // namespace siteops::sim
