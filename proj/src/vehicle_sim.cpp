#include "siteops/vehicle_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "siteops/error.hpp"

namespace siteops::sim {

void VehicleSpec::validate() const {
  if (id.empty()) throw ValidationError("must not be empty", "id");
  if (!(max_speed > 0)) throw ValidationError("must be positive", "max_speed");
  if (!(turn_rate > 0)) throw ValidationError("must be positive", "turn_rate");
  if (!(arrival_tolerance > 0)) throw ValidationError("must be positive", "arrival_tolerance");
  if (!(state_rate > 0)) throw ValidationError("must be positive", "state_rate");
}

VehicleSpec default_spec(const std::string& id, VehicleKind kind) {
  VehicleSpec s;
  s.id = id;
  s.kind = kind;
  switch (kind) {
    case VehicleKind::excavator:
      s.max_speed = 1.5;
      s.turn_rate = 0.5;
      break;
    case VehicleKind::ugv:
      s.max_speed = 2.5;
      s.turn_rate = 1.0;
      break;
    case VehicleKind::uav:
      s.max_speed = 5.0;
      s.turn_rate = 2.0;
      break;
  }
  return s;
}

SimVehicle::SimVehicle(VehicleSpec spec, const geo::Pose2D& start, const sitemap::SiteMap& map)
    : spec_(std::move(spec)), map_(map), position_(start.position), yaw_(geo::normalize_yaw(start.yaw)) {
  spec_.validate();
  if (spec_.kind != VehicleKind::uav) position_.up = 0.0;
}

OrderDecision SimVehicle::accept_order(const bus::OrderMsg& order) {
  try {
    order.validate();
  } catch (const ValidationError&) {
    return OrderDecision::invalid;
  }
  if (order.vehicle_id != spec_.id) return OrderDecision::invalid;
  const auto prev = accepted_updates_.find(order.order_id);
  if (prev != accepted_updates_.end() && order.update_id <= prev->second) return OrderDecision::stale;
  accepted_updates_[order.order_id] = order.update_id;

  order_id_ = order.order_id;
  update_id_ = order.update_id;
  nodes_.clear();
  action_states_.clear();
  for (const auto& n : order.nodes) {
    EnuPoint p = geo::geodetic_to_enu(map_.origin, n.position);
    if (spec_.kind != VehicleKind::uav) p.up = 0.0;
    nodes_.push_back({n.node_id, p, n.action});
    if (n.action) action_states_.push_back({n.action->action_id, "waiting"});
  }
  cursor_ = 0;
  last_node_id_.clear();
  running_action_.reset();
  action_elapsed_ = 0.0;
  return OrderDecision::accepted;
}

bool SimVehicle::idle() const { return cursor_ >= nodes_.size() && !running_action_; }

std::vector<EnuPoint> SimVehicle::remaining_route() const {
  std::vector<EnuPoint> out{position_};
  for (std::size_t i = cursor_; i < nodes_.size(); ++i) out.push_back(nodes_[i].position);
  return out;
}

void SimVehicle::reach_current_node() {
  const Node& n = nodes_[cursor_];
  last_node_id_ = n.id;
  if (n.action) {
    for (std::size_t i = 0; i < action_states_.size(); ++i) {
      if (action_states_[i].action_id == n.action->action_id) {
        action_states_[i].status = "running";
        running_action_ = i;
        action_elapsed_ = 0.0;
        break;
      }
    }
    if (running_action_ && n.action->duration_s <= 0.0) {
      action_states_[*running_action_].status = "finished";
      running_action_.reset();
      ++cursor_;
    }
    return;
  }
  ++cursor_;
}

namespace {

double distance(const EnuPoint& a, const EnuPoint& b, bool three_d) {
  const double de = b.east - a.east;
  const double dn = b.north - a.north;
  const double du = three_d ? b.up - a.up : 0.0;
  return std::sqrt(de * de + dn * dn + du * du);
}

}  // namespace

void SimVehicle::move(double dt) {
  const bool air = spec_.kind == VehicleKind::uav;
  const auto arrive_while_close = [&] {
    while (cursor_ < nodes_.size() && !running_action_ &&
           distance(position_, nodes_[cursor_].position, air) <= spec_.arrival_tolerance) {
      reach_current_node();
    }
  };
  arrive_while_close();
  if (cursor_ >= nodes_.size() || running_action_) return;

  const EnuPoint target = nodes_[cursor_].position;
  const double d = distance(position_, target, air);
  const double de = target.east - position_.east;
  const double dn = target.north - position_.north;
  if (air) {
    const double s = std::min(spec_.max_speed * dt, d);
    position_.east += s * de / d;
    position_.north += s * dn / d;
    position_.up += s * (target.up - position_.up) / d;
    if (std::hypot(de, dn) > 1e-9) yaw_ = std::atan2(dn, de);
    odometer_ += s;
    driving_ = s > 0.0;
  } else {
    const double error = geo::normalize_yaw(std::atan2(dn, de) - yaw_);
    const double max_turn = spec_.turn_rate * dt;
    const double turn = std::clamp(error, -max_turn, max_turn);
    yaw_ = geo::normalize_yaw(yaw_ + turn);
    const double s = std::min(spec_.max_speed * dt, d) * std::max(0.0, std::cos(error - turn));
    position_.east += s * std::cos(yaw_);
    position_.north += s * std::sin(yaw_);
    odometer_ += s;
    driving_ = s > 0.0 || turn != 0.0;
  }
  arrive_while_close();
}

std::optional<bus::StateMsg> SimVehicle::tick(const SimClock& clock) {
  driving_ = false;
  if (running_action_) {
    action_elapsed_ += clock.dt;
    const double duration = nodes_[cursor_].action->duration_s;
    if (action_elapsed_ >= duration - 1e-9) {
      action_states_[*running_action_].status = "finished";
      running_action_.reset();
      ++cursor_;
    }
  } else {
    move(clock.dt);
  }
  const auto period =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(1.0 / (spec_.state_rate * clock.dt) - 1e-9)));
  if (clock.tick % period != 0) return std::nullopt;
  return state(clock.now_ms());
}

bus::StateMsg SimVehicle::state(std::int64_t now_ms) const {
  bus::StateMsg m;
  m.vehicle_id = spec_.id;
  m.position = geo::enu_to_geodetic(map_.origin, position_);
  m.yaw = yaw_;
  m.order_id = order_id_;
  m.order_update_id = std::max<std::int64_t>(update_id_, 0);
  m.last_node_id = last_node_id_;
  m.driving = driving_;
  m.action_states = action_states_;
  m.battery = 1.0;
  if (spec_.kind != VehicleKind::uav && !map_.inside_boundary(position_)) m.errors.push_back("boundary_breach");
  m.timestamp = now_ms;
  return m;
}

std::vector<EnuPoint> survey_route(const sitemap::SiteMap& map, double altitude, double swath_overlap,
                                   const scale::ScaleModel& camera, const geoloc::ImageSize& image) {
  if (!(swath_overlap >= 0.0 && swath_overlap < 1.0)) {
    throw ValidationError("must lie in [0, 1)", "swath_overlap");
  }
  if (map.boundary.empty()) throw ValidationError("boundary is empty", "boundary");
  const geoloc::Footprint fp = geoloc::camera_footprint(camera, altitude, image);
  const double cross = fp.along_y;  // image +x points along the direction of travel
  const double swath = cross * (1.0 - swath_overlap);

  double min_e = std::numeric_limits<double>::infinity(), max_e = -min_e;
  double min_n = min_e, max_n = -min_e;
  for (const auto& p : map.boundary) {
    min_e = std::min(min_e, p.east);
    max_e = std::max(max_e, p.east);
    min_n = std::min(min_n, p.north);
    max_n = std::max(max_n, p.north);
  }
  const bool along_east = (max_e - min_e) >= (max_n - min_n);
  const double lo = along_east ? min_n : min_e;
  const double hi = along_east ? max_n : max_e;
  // Pass ends stop half a footprint short of the box edge; the footprint still reaches it.
  const double box0 = along_east ? min_e : min_n;
  const double box1 = along_east ? max_e : max_n;
  const double inset = std::min(0.5 * fp.along_x, 0.5 * (box1 - box0));
  const double a0 = box0 + inset;
  const double a1 = box1 - inset;

  std::vector<double> lanes;
  if (hi - lo <= cross) {
    lanes.push_back(0.5 * (lo + hi));
  } else {
    const double first = lo + 0.5 * cross;
    const double last = hi - 0.5 * cross;
    const int n = static_cast<int>(std::ceil((last - first) / swath - 1e-9)) + 1;
    for (int i = 0; i < n; ++i) lanes.push_back(std::min(first + i * swath, last));
  }

  std::vector<EnuPoint> route;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const double from = i % 2 == 0 ? a0 : a1;
    const double to = i % 2 == 0 ? a1 : a0;
    const auto point = [&](double along) {
      return along_east ? EnuPoint{along, lanes[i], altitude} : EnuPoint{lanes[i], along, altitude};
    };
    route.push_back(point(from));
    route.push_back(point(to));
  }
  return route;
}

}  // namespace siteops::sim
