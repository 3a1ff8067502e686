#pragma once

// Ground control back end: owns the world model, planner and tasking, closes the loop with
// the fleet over the bus and publishes an ordered event log for supervisors.

#include <atomic>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siteops/bus/endpoint.hpp"
#include "siteops/bus/topic.hpp"
#include "siteops/events.hpp"
#include "siteops/planner.hpp"
#include "siteops/scale_model.hpp"
#include "siteops/sitemap.hpp"
#include "siteops/tasking.hpp"

namespace siteops::coord {

using geo::EnuPoint;

struct CoordinatorConfig {
  double clearance_floor = 2.0;                // m
  int replan_check_period = 5;                 // loop iterations
  std::int64_t unreachable_timeout_ms = 60'000;
  double confidence_floor = geoloc::kDefaultConfidenceFloor;
  std::size_t event_retention = 10'000;
  double arrival_slack = 1.0;                  // m; a navigate step this close to its goal is already done
  std::string manufacturer{bus::kDefaultManufacturer};
  planner::PlannerConfig planner;
  sitemap::RegistryConfig registry;

  /// Throws ValidationError naming the first bad field.
  void validate() const;
};

/// Reply to a supervisor command, shaped like an HTTP response.
struct CommandResult {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
};

struct CoordinatorStats {
  std::uint64_t iterations = 0;
  std::uint64_t orders_issued = 0;
  std::uint64_t plans_issued = 0;
  std::uint64_t replans = 0;
  std::uint64_t halts = 0;
  std::uint64_t graph_builds = 0;
  std::uint64_t reports_ingested = 0;
  std::uint64_t reports_below_floor = 0;
  std::uint64_t reports_outside = 0;
  std::uint64_t unsafe_orders = 0;  // orders whose route was blocked when issued; expected 0
  std::vector<std::int64_t> report_latency_ms;
};

/// Record of the last order sent to a vehicle.
struct IssuedOrder {
  std::string vehicle_id;
  std::string order_id;
  std::int64_t update_id = 0;
  std::string kind;  // navigate | act | survey | halt
  std::vector<EnuPoint> waypoints;
  std::uint64_t graph_generation = 0;
  std::int64_t issued_at = 0;
  bool replan = false;
};

class Coordinator {
 public:
  Coordinator(sitemap::SiteMap map, CoordinatorConfig cfg, bus::Endpoint& endpoint,
              scale::ScaleModel camera = scale::calibrated_pinhole_model());

  /// One loop iteration at simulation time `now_ms`. Only the loop thread may call this.
  void step(std::int64_t now_ms);

  // Supervisor commands. Thread-safe; applied in arrival order at the start of the next step.
  std::future<CommandResult> submit_operation(nlohmann::json doc);
  std::future<CommandResult> cancel_operation(std::string op_id);
  /// `{east, north}` or `{lat, lon}`, optional `radius` (m) and `ttl_s` (omit to keep until cleared).
  std::future<CommandResult> inject_obstacle(nlohmann::json doc);
  std::future<CommandResult> clear_obstacle(std::uint64_t id);
  std::future<CommandResult> pause_vehicle(std::string vehicle_id);
  std::future<CommandResult> resume_vehicle(std::string vehicle_id);

  /// World state as of the end of the last step. Thread-safe.
  nlohmann::json snapshot() const;
  const EventLog& events() const { return events_; }
  EventLog& events() { return events_; }

  // Loop-thread views, for the scenario runner and tests.
  const tasking::TaskManager& tasks() const { return tasks_; }
  const sitemap::ObstacleRegistry& registry() const { return registry_; }
  const CoordinatorStats& stats() const { return stats_; }
  const CoordinatorConfig& config() const { return cfg_; }
  const std::map<std::string, IssuedOrder>& orders() const { return orders_; }
  std::uint64_t graph_generation() const { return graph_ ? graph_->generation : 0; }
  std::vector<sitemap::DynamicObstacle> live_obstacles() const { return registry_.live_obstacles(now_); }
  /// Plans against the current live obstacles without issuing anything.
  PlannedPath plan_query(const EnuPoint& start, const EnuPoint& goal);

 private:
  struct Exec {
    std::string task_id;
    std::size_t cursor = 0;
    tasking::StepKind kind = tasking::StepKind::navigate;
    bool issued = false;   // an order for this step is out
    bool halted = false;   // stopped in place (unreachable goal or paused)
    std::optional<std::int64_t> blocked_since;
    std::string order_id;
    std::int64_t update_id = -1;
    std::vector<std::string> node_ids;
    std::vector<EnuPoint> route;
    std::string last_node;
    EnuPoint goal;
    int survey_pass = 0;
  };

  using Command = std::function<CommandResult()>;
  std::future<CommandResult> enqueue(Command cmd);
  void apply_commands();

  void handle_message(const bus::Envelope& env);
  void handle_state(const std::string& vehicle_id, const bus::StateMsg& st);
  void expire_obstacles();
  void drive_tasks();
  void start_step(const std::string& vehicle_id, const tasking::Task& task);
  void check_routes();
  void reconcile();

  bool issue_navigate(const std::string& vehicle_id, Exec& exec, bool replan);
  void issue_order(const std::string& vehicle_id, Exec& exec, const std::string& kind,
                   const std::vector<EnuPoint>& waypoints, std::optional<bus::Action> action, bool replan);
  void halt(const std::string& vehicle_id, Exec& exec, bool replan);
  std::int64_t next_update(const std::string& order_id);
  const planner::VoronoiGraph& graph();
  void emit(const std::string& kind, nlohmann::json payload);
  void emit_diffs();
  void publish_snapshot();

  std::string order_topic(const std::string& vehicle_id) const;

  sitemap::SiteMap map_;
  CoordinatorConfig cfg_;
  bus::Endpoint& endpoint_;
  scale::ScaleModel camera_;
  tasking::TaskManager tasks_;
  sitemap::ObstacleRegistry registry_;
  EventLog events_;
  CoordinatorStats stats_;

  std::int64_t now_ = 0;
  std::map<std::string, tasking::VehicleKind> announced_;  // connected, awaiting first state
  std::map<std::string, std::string> connection_;          // vehicle -> online | offline | broken
  std::map<std::string, Exec> execs_;                      // per vehicle
  std::map<std::string, std::int64_t> update_counters_;
  std::map<std::string, IssuedOrder> orders_;              // last order per vehicle
  std::map<std::string, bus::StateMsg> last_state_;

  std::optional<planner::VoronoiGraph> graph_;
  std::uint64_t obstacle_version_ = 0;
  std::uint64_t graph_version_ = ~0ULL;
  std::uint64_t next_generation_ = 1;
  std::uint64_t last_event_gen_ = 0;  // roadmap generation stamped on the latest event

  // Last emitted record per entity; events are the differences.
  std::map<std::string, nlohmann::json> seen_vehicles_;
  std::map<std::uint64_t, nlohmann::json> seen_obstacles_;
  std::map<std::string, nlohmann::json> seen_tasks_;
  std::map<std::string, nlohmann::json> seen_operations_;

  std::mutex cmd_mu_;
  std::vector<std::pair<Command, std::promise<CommandResult>>> commands_;
  mutable std::mutex snap_mu_;
  nlohmann::json snapshot_;
};

/// Applies one event to a snapshot document; folding the events after a snapshot's seq
/// reproduces later snapshots (apart from `seq` and `time_ms`).
nlohmann::json fold_event(nlohmann::json snapshot, const EventRecord& event);

nlohmann::json to_json(const IssuedOrder& o, const geo::GeoPoint& origin);

}  // namespace siteops::coord
