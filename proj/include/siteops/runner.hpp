#pragma once

// Closed-loop scenario runs: simulated fleet, bus and coordinator in one process on one clock.

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "siteops/bus/broker.hpp"
#include "siteops/bus/endpoint.hpp"
#include "siteops/coordinator.hpp"
#include "siteops/scenario.hpp"

namespace siteops::sim {

struct RunOptions {
  double time_scale = 0.0;  // simulated seconds per wall second; 0 runs unpaced
  double dt = 0.1;
  std::optional<double> max_sim_time_s;  // overrides the scenario
  coord::CoordinatorConfig coordinator;
};

class ScenarioRunner {
 public:
  explicit ScenarioRunner(Scenario scenario, RunOptions options = {});

  /// Submits the scenario's operation, if any. Returns its id.
  std::optional<std::string> submit();
  /// One tick: vehicles publish, the coordinator reacts, clock advances.
  void step();
  /// Steps until the operation finishes or the time limit passes; returns the metrics.
  nlohmann::json run();

  bool finished() const;
  /// done | failed | cancelled | deadline | running
  std::string outcome() const;
  nlohmann::json metrics() const;

  const Scenario& scenario() const { return scenario_; }
  const SimClock& clock() const { return clock_; }
  double sim_time_s() const { return static_cast<double>(clock_.now_ms()) / 1000.0; }
  bus::Broker& broker() { return broker_; }
  coord::Coordinator& coordinator() { return *coordinator_; }
  const SimWorld& world() const { return *world_; }
  const std::optional<std::string>& operation_id() const { return operation_id_; }

 private:
  void track_detections();

  Scenario scenario_;
  RunOptions options_;
  scale::ScaleModel camera_;
  bus::Broker broker_;
  std::unique_ptr<bus::LocalEndpoint> coord_endpoint_;
  std::unique_ptr<coord::Coordinator> coordinator_;
  std::unique_ptr<SimWorld> world_;
  SimClock clock_;
  std::optional<std::string> operation_id_;
  std::map<std::size_t, double> first_detected_s_;  // actor index -> time
  std::set<std::uint64_t> obstacle_ids_;
  std::chrono::steady_clock::time_point wall_start_;
};

}  // namespace siteops::sim
