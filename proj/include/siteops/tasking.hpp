#pragma once

// Operations, the task sequences they expand into, and proximity-based assignment.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "siteops/geo.hpp"
#include "siteops/sitemap.hpp"

namespace siteops::tasking {

using geo::EnuPoint;

enum class VehicleKind { excavator, ugv, uav };
enum class Capability { excavate, haul, survey };

std::string_view to_string(VehicleKind k);
std::string_view to_string(Capability c);
/// Throws ValidationError for unknown names.
VehicleKind vehicle_kind_from_string(std::string_view s);
Capability capability_of(VehicleKind k);

inline constexpr double kLoadSeconds = 30.0;
inline constexpr double kDumpSeconds = 15.0;

enum class StepKind { navigate, act, wait, survey };

struct Step {
  StepKind kind = StepKind::navigate;
  std::string zone;  // navigate target zone, if any
  EnuPoint target;   // navigate target; survey start
  std::string action;  // act: load | dump | hover
  double duration_s = 0.0;
  double altitude = 0.0;      // survey
  double swath_overlap = 0.0; // survey
  bool repeat = false;        // survey: keep sweeping until the rest of the operation is finished
  std::string waits_for;      // barrier that must be signalled before the step starts
  std::string signals;        // barrier raised when the step completes
};

std::string_view to_string(StepKind k);

enum class TaskStatus { pending, assigned, active, done, failed };

std::string_view to_string(TaskStatus s);
bool terminal(TaskStatus s);
/// Forward moves along pending -> assigned -> active -> done|failed. A task that has not
/// started may also fail directly (cancellation).
bool transition_allowed(TaskStatus from, TaskStatus to);

struct Task {
  std::string id;
  std::string operation_id;
  Capability capability = Capability::haul;
  std::vector<Step> steps;
  std::size_t cursor = 0;
  TaskStatus status = TaskStatus::pending;
  std::optional<std::string> vehicle;
  std::string failure;

  const Step* current() const { return cursor < steps.size() ? &steps[cursor] : nullptr; }
  /// Target of the first navigate or survey step, used for proximity.
  std::optional<EnuPoint> anchor() const;
};

enum class OperationKind { load_dump, survey };

struct OperationRequest {
  OperationKind kind = OperationKind::load_dump;
  std::string load_zone;
  std::string dump_zone;
  int cycles = 1;
  double survey_altitude = 8.0;
  double swath_overlap = 0.1;
};

/// Parses `{kind, load_zone, dump_zone, cycles}` or `{kind: "survey", survey_pattern: {altitude_m, overlap}}`.
/// Throws ValidationError naming the offending field.
OperationRequest operation_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const OperationRequest& req);

enum class OperationStatus { active, done, failed, cancelled };
std::string_view to_string(OperationStatus s);

struct Operation {
  std::string id;
  OperationRequest request;
  std::vector<std::string> task_ids;
  OperationStatus status = OperationStatus::active;
  std::set<std::string> signals;
};

/// Expands an operation into tasks with ids `<op>-excavate`, `<op>-haul`, `<op>-survey`.
/// Throws ValidationError for unknown zones or cycles < 1.
std::vector<Task> parse_operation(const OperationRequest& req, const std::string& op_id,
                                  const sitemap::SiteMap& map);

enum class VehicleStatus { idle, busy, offline };
std::string_view to_string(VehicleStatus s);

struct VehicleRecord {
  std::string id;
  VehicleKind kind = VehicleKind::ugv;
  geo::Pose2D pose;
  VehicleStatus status = VehicleStatus::offline;
  std::optional<std::string> current_task;
  std::int64_t last_timestamp = -1;
  bool paused = false;
};

struct Assignment {
  std::string task_id;
  std::string vehicle_id;
};

/// For each task in order: the idle vehicle with the required capability and the smallest
/// straight-line distance to the task anchor; equal distances go to the smaller id.
/// Mutates tasks and fleet; unmatched tasks stay pending.
std::vector<Assignment> assign(std::vector<Task*> pending, std::map<std::string, VehicleRecord>& fleet);

struct TaskTransition {
  std::string task_id;
  TaskStatus from;
  TaskStatus to;
};

/// Per-vehicle update distilled from a state message by the coordinator.
struct VehicleUpdate {
  std::string vehicle_id;
  geo::Pose2D pose;
  std::int64_t timestamp = 0;
  bool step_complete = false;
  bool error = false;
  std::string error_text;
};

enum class UpdateOutcome { applied, stale, unknown_vehicle };

/// Single-writer book of operations, tasks and the fleet.
class TaskManager {
 public:
  explicit TaskManager(sitemap::SiteMap map);

  /// Returns the new operation id (`op-1`, `op-2`, ...). Duplicate submissions are independent.
  std::string submit(const OperationRequest& req);
  /// Fails every unfinished task of the operation. False if unknown or already finished.
  bool cancel(const std::string& op_id);

  VehicleRecord& register_vehicle(const std::string& id, VehicleKind kind, const geo::Pose2D& pose);
  /// Marks offline and fails its task.
  void set_offline(const std::string& id, const std::string& reason);

  std::vector<Assignment> assign_pending();

  void activate(const std::string& task_id);
  /// Moves the step cursor; completes the task after the last step.
  void advance(const std::string& task_id);
  void fail(const std::string& task_id, const std::string& reason);

  UpdateOutcome on_vehicle_state(const VehicleUpdate& u);

  void signal(const std::string& op_id, const std::string& name);
  bool signalled(const std::string& op_id, const std::string& name) const;

  /// Transitions since the last call, in the order they happened.
  std::vector<TaskTransition> drain_transitions();
  /// Operations that finished since the last call.
  std::vector<std::string> drain_finished_operations();

  const std::map<std::string, Task>& tasks() const { return tasks_; }
  const std::map<std::string, Operation>& operations() const { return operations_; }
  const std::map<std::string, VehicleRecord>& fleet() const { return fleet_; }
  std::map<std::string, VehicleRecord>& fleet() { return fleet_; }
  const Task* task(const std::string& id) const;
  const Task* task_of(const std::string& vehicle_id) const;
  const sitemap::SiteMap& map() const { return map_; }

  /// True when every non-repeating task of the operation is terminal.
  bool ground_work_finished(const std::string& op_id) const;

 private:
  void set_status(Task& t, TaskStatus to);
  void release(Task& t);
  void refresh_operation(const std::string& op_id);

  sitemap::SiteMap map_;
  std::map<std::string, Operation> operations_;
  std::map<std::string, Task> tasks_;
  std::deque<std::string> queue_;  // pending task ids, FIFO
  std::map<std::string, VehicleRecord> fleet_;
  std::vector<TaskTransition> transitions_;
  std::vector<std::string> finished_ops_;
  std::uint64_t next_op_ = 1;
};

}  // namespace siteops::tasking
