#pragma once

// Tick-based kinematic vehicles that follow bus orders and publish state.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "siteops/bus/messages.hpp"
#include "siteops/geolocator.hpp"
#include "siteops/scale_model.hpp"
#include "siteops/sitemap.hpp"
#include "siteops/tasking.hpp"

namespace siteops::sim {

using geo::EnuPoint;
using tasking::VehicleKind;

struct VehicleSpec {
  std::string id;
  VehicleKind kind = VehicleKind::ugv;
  double max_speed = 2.5;          // m/s
  double turn_rate = 1.0;          // rad/s
  double arrival_tolerance = 0.5;  // m
  double state_rate = 10.0;        // Hz

  /// Throws ValidationError naming the first non-positive field.
  void validate() const;
};

/// Speeds: excavator 1.5, ugv 2.5, uav 5.0 m/s.
VehicleSpec default_spec(const std::string& id, VehicleKind kind);

struct SimClock {
  std::int64_t tick = 0;
  double dt = 0.1;          // s
  double time_scale = 1.0;  // simulated seconds per wall second
  std::int64_t epoch_ms = 0;  // timestamp of tick 0

  std::int64_t now_ms() const {
    return epoch_ms + static_cast<std::int64_t>(std::llround(static_cast<double>(tick) * dt * 1000.0));
  }
};

enum class OrderDecision { accepted, stale, invalid };

class SimVehicle {
 public:
  /// `start.position.up` is the initial altitude (UAV only).
  SimVehicle(VehicleSpec spec, const geo::Pose2D& start, const sitemap::SiteMap& map);

  /// Accepted iff the order is valid for this vehicle and its update_id is newer than the last
  /// one accepted for the same order_id. The route is replaced before the next tick.
  OrderDecision accept_order(const bus::OrderMsg& order);

  /// Advances one step. Returns a state message every ceil(1 / (state_rate * dt)) ticks.
  std::optional<bus::StateMsg> tick(const SimClock& clock);

  bus::StateMsg state(std::int64_t now_ms) const;

  const VehicleSpec& spec() const { return spec_; }
  const EnuPoint& position() const { return position_; }
  double yaw() const { return yaw_; }
  double odometer() const { return odometer_; }
  bool driving() const { return driving_; }
  bool idle() const;
  const std::string& order_id() const { return order_id_; }
  std::int64_t update_id() const { return update_id_; }
  /// Remaining route: current position, then the nodes not yet reached.
  std::vector<EnuPoint> remaining_route() const;

 private:
  struct Node {
    std::string id;
    EnuPoint position;
    std::optional<bus::Action> action;
  };

  void reach_current_node();
  void move(double dt);

  VehicleSpec spec_;
  sitemap::SiteMap map_;
  EnuPoint position_;
  double yaw_ = 0.0;
  double odometer_ = 0.0;
  bool driving_ = false;

  std::string order_id_;
  std::int64_t update_id_ = -1;
  std::map<std::string, std::int64_t> accepted_updates_;
  std::vector<Node> nodes_;
  std::size_t cursor_ = 0;
  std::string last_node_id_;
  std::vector<bus::ActionState> action_states_;
  std::optional<std::size_t> running_action_;  // index into action_states_
  double action_elapsed_ = 0.0;
};

/// Boustrophedon route over the boundary's bounding box, passes parallel to its longer side.
/// Swath spacing is the cross-track footprint width at `altitude` times (1 - overlap).
/// Throws RangeError when the model is not valid at `altitude`, ValidationError for overlap outside [0, 1).
std::vector<EnuPoint> survey_route(const sitemap::SiteMap& map, double altitude, double swath_overlap,
                                   const scale::ScaleModel& camera, const geoloc::ImageSize& image = {});

}  // namespace siteops::sim
