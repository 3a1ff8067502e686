#include "siteops/tasking.hpp"

#include <algorithm>
#include <limits>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "siteops/error.hpp"

namespace siteops::tasking {

using nlohmann::json;

std::string_view to_string(VehicleKind k) {
  switch (k) {
    case VehicleKind::excavator: return "excavator";
    case VehicleKind::ugv: return "ugv";
    case VehicleKind::uav: return "uav";
  }
  return "unknown";
}

std::string_view to_string(Capability c) {
  switch (c) {
    case Capability::excavate: return "excavate";
    case Capability::haul: return "haul";
    case Capability::survey: return "survey";
  }
  return "unknown";
}

VehicleKind vehicle_kind_from_string(std::string_view s) {
  if (s == "excavator") return VehicleKind::excavator;
  if (s == "ugv") return VehicleKind::ugv;
  if (s == "uav") return VehicleKind::uav;
  throw ValidationError("unknown vehicle kind '" + std::string(s) + "'", "kind");
}

Capability capability_of(VehicleKind k) {
  switch (k) {
    case VehicleKind::excavator: return Capability::excavate;
    case VehicleKind::ugv: return Capability::haul;
    case VehicleKind::uav: return Capability::survey;
  }
  return Capability::haul;
}

std::string_view to_string(StepKind k) {
  switch (k) {
    case StepKind::navigate: return "navigate";
    case StepKind::act: return "act";
    case StepKind::wait: return "wait";
    case StepKind::survey: return "survey";
  }
  return "unknown";
}

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::pending: return "pending";
    case TaskStatus::assigned: return "assigned";
    case TaskStatus::active: return "active";
    case TaskStatus::done: return "done";
    case TaskStatus::failed: return "failed";
  }
  return "unknown";
}

bool terminal(TaskStatus s) { return s == TaskStatus::done || s == TaskStatus::failed; }

bool transition_allowed(TaskStatus from, TaskStatus to) {
  switch (from) {
    case TaskStatus::pending: return to == TaskStatus::assigned || to == TaskStatus::failed;
    case TaskStatus::assigned: return to == TaskStatus::active || to == TaskStatus::failed;
    case TaskStatus::active: return to == TaskStatus::done || to == TaskStatus::failed;
    case TaskStatus::done:
    case TaskStatus::failed: return false;
  }
  return false;
}

std::optional<EnuPoint> Task::anchor() const {
  for (const auto& s : steps) {
    if (s.kind == StepKind::navigate || s.kind == StepKind::survey) return s.target;
  }
  return std::nullopt;
}

std::string_view to_string(OperationStatus s) {
  switch (s) {
    case OperationStatus::active: return "active";
    case OperationStatus::done: return "done";
    case OperationStatus::failed: return "failed";
    case OperationStatus::cancelled: return "cancelled";
  }
  return "unknown";
}

std::string_view to_string(VehicleStatus s) {
  switch (s) {
    case VehicleStatus::idle: return "idle";
    case VehicleStatus::busy: return "busy";
    case VehicleStatus::offline: return "offline";
  }
  return "unknown";
}

OperationRequest operation_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("operation must be an object", "operation");
  OperationRequest req;
  if (!doc.contains("kind") || !doc["kind"].is_string()) throw ValidationError("missing or not a string", "kind");
  const std::string kind = doc["kind"];
  const auto str = [&](const char* name) {
    if (!doc.contains(name) || !doc[name].is_string() || doc[name].get<std::string>().empty()) {
      throw ValidationError("missing or not a string", name);
    }
    return doc[name].get<std::string>();
  };
  if (kind == "load_dump") {
    req.kind = OperationKind::load_dump;
    req.load_zone = str("load_zone");
    req.dump_zone = str("dump_zone");
    if (doc.contains("cycles")) {
      if (!doc["cycles"].is_number_integer()) throw ValidationError("must be an integer", "cycles");
      req.cycles = doc["cycles"].get<int>();
    }
    if (req.cycles < 1) throw ValidationError("must be at least 1", "cycles");
  } else if (kind == "survey") {
    req.kind = OperationKind::survey;
  } else {
    throw ValidationError("unknown operation kind '" + kind + "'", "kind");
  }
  if (doc.contains("survey_pattern")) {
    const auto& p = doc["survey_pattern"];
    if (!p.is_object()) throw ValidationError("must be an object", "survey_pattern");
    if (p.contains("altitude_m")) {
      if (!p["altitude_m"].is_number()) throw ValidationError("must be a number", "survey_pattern.altitude_m");
      req.survey_altitude = p["altitude_m"];
    }
    if (p.contains("overlap")) {
      if (!p["overlap"].is_number()) throw ValidationError("must be a number", "survey_pattern.overlap");
      req.swath_overlap = p["overlap"];
    }
  }
  if (!(req.survey_altitude > 0.0)) throw ValidationError("must be positive", "survey_pattern.altitude_m");
  if (!(req.swath_overlap >= 0.0 && req.swath_overlap < 1.0)) {
    throw ValidationError("must lie in [0, 1)", "survey_pattern.overlap");
  }
  return req;
}

json to_json(const OperationRequest& req) {
  json j;
  j["kind"] = req.kind == OperationKind::load_dump ? "load_dump" : "survey";
  if (req.kind == OperationKind::load_dump) {
    j["load_zone"] = req.load_zone;
    j["dump_zone"] = req.dump_zone;
    j["cycles"] = req.cycles;
  }
  j["survey_pattern"] = {{"altitude_m", req.survey_altitude}, {"overlap", req.swath_overlap}};
  return j;
}

namespace {

EnuPoint zone(const sitemap::SiteMap& map, const std::string& name, const char* field) {
  const auto it = map.zones.find(name);
  if (it == map.zones.end()) throw ValidationError("unknown zone '" + name + "'", field);
  return it->second;
}

Step make_step(StepKind kind, const std::string& zone_name, const EnuPoint& target) {
  Step s;
  s.kind = kind;
  s.zone = zone_name;
  s.target = target;
  return s;
}

Step act_step(const std::string& zone_name, const EnuPoint& target, const char* action, double seconds) {
  Step s = make_step(StepKind::act, zone_name, target);
  s.action = action;
  s.duration_s = seconds;
  return s;
}

Task make_task(const std::string& id, const std::string& op_id, Capability cap) {
  Task t;
  t.id = id;
  t.operation_id = op_id;
  t.capability = cap;
  return t;
}

Step survey_step(const OperationRequest& req, const sitemap::SiteMap& map, bool repeat) {
  double min_e = std::numeric_limits<double>::infinity();
  double min_n = min_e;
  for (const auto& p : map.boundary) {
    min_e = std::min(min_e, p.east);
    min_n = std::min(min_n, p.north);
  }
  Step s;
  s.kind = StepKind::survey;
  s.target = {min_e, min_n, 0.0};
  s.altitude = req.survey_altitude;
  s.swath_overlap = req.swath_overlap;
  s.repeat = repeat;
  return s;
}

}  // namespace

std::vector<Task> parse_operation(const OperationRequest& req, const std::string& op_id,
                                  const sitemap::SiteMap& map) {
  std::vector<Task> tasks;
  if (req.kind == OperationKind::survey) {
    Task survey = make_task(op_id + "-survey", op_id, Capability::survey);
    survey.steps.push_back(survey_step(req, map, false));
    tasks.push_back(std::move(survey));
    return tasks;
  }
  if (req.cycles < 1) throw ValidationError("must be at least 1", "cycles");
  const EnuPoint load = zone(map, req.load_zone, "load_zone");
  const EnuPoint dump = zone(map, req.dump_zone, "dump_zone");

  Task exc = make_task(op_id + "-excavate", op_id, Capability::excavate);
  Task haul = make_task(op_id + "-haul", op_id, Capability::haul);
  for (int k = 1; k <= req.cycles; ++k) {
    const std::string arrived = "hauler_at_load_" + std::to_string(k);
    const std::string loaded = "loaded_" + std::to_string(k);

    exc.steps.push_back(make_step(StepKind::navigate, req.load_zone, load));
    Step dig = act_step(req.load_zone, load, "load", kLoadSeconds);
    dig.waits_for = arrived;
    dig.signals = loaded;
    exc.steps.push_back(dig);

    Step to_load = make_step(StepKind::navigate, req.load_zone, load);
    to_load.signals = arrived;
    haul.steps.push_back(to_load);
    Step wait = make_step(StepKind::wait, req.load_zone, load);
    wait.waits_for = loaded;
    haul.steps.push_back(wait);
    haul.steps.push_back(make_step(StepKind::navigate, req.dump_zone, dump));
    haul.steps.push_back(act_step(req.dump_zone, dump, "dump", kDumpSeconds));
  }
  tasks.push_back(std::move(exc));
  tasks.push_back(std::move(haul));
  Task survey = make_task(op_id + "-survey", op_id, Capability::survey);
  survey.steps.push_back(survey_step(req, map, true));
  tasks.push_back(std::move(survey));
  return tasks;
}

std::vector<Assignment> assign(std::vector<Task*> pending, std::map<std::string, VehicleRecord>& fleet) {
  std::vector<Assignment> out;
  for (Task* t : pending) {
    if (t->status != TaskStatus::pending) continue;
    const auto anchor = t->anchor();
    VehicleRecord* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    // std::map iterates ids in ascending order, so strict < keeps the smaller id on ties.
    for (auto& [id, v] : fleet) {
      if (v.status != VehicleStatus::idle || v.paused || capability_of(v.kind) != t->capability) continue;
      const double d = anchor ? geo::planar_distance(v.pose.position, *anchor) : 0.0;
      if (d < best_d) {
        best_d = d;
        best = &v;
      }
    }
    if (!best) continue;
    t->status = TaskStatus::assigned;
    t->vehicle = best->id;
    best->status = VehicleStatus::busy;
    best->current_task = t->id;
    out.push_back({t->id, best->id});
  }
  return out;
}

TaskManager::TaskManager(sitemap::SiteMap map) : map_(std::move(map)) {}

std::string TaskManager::submit(const OperationRequest& req) {
  const std::string id = "op-" + std::to_string(next_op_);
  auto tasks = parse_operation(req, id, map_);
  ++next_op_;
  Operation op{id, req, {}, OperationStatus::active, {}};
  for (auto& t : tasks) {
    op.task_ids.push_back(t.id);
    queue_.push_back(t.id);
    transitions_.push_back({t.id, TaskStatus::pending, TaskStatus::pending});
    tasks_.emplace(t.id, std::move(t));
  }
  operations_.emplace(id, std::move(op));
  return id;
}

bool TaskManager::cancel(const std::string& op_id) {
  const auto it = operations_.find(op_id);
  if (it == operations_.end() || it->second.status != OperationStatus::active) return false;
  for (const auto& tid : it->second.task_ids) {
    Task& t = tasks_.at(tid);
    if (!terminal(t.status)) {
      t.failure = "cancelled";
      set_status(t, TaskStatus::failed);
      release(t);
    }
  }
  it->second.status = OperationStatus::cancelled;
  finished_ops_.push_back(op_id);
  return true;
}

VehicleRecord& TaskManager::register_vehicle(const std::string& id, VehicleKind kind, const geo::Pose2D& pose) {
  auto& v = fleet_[id];
  if (v.id.empty()) {
    v.id = id;
    v.pose = pose;
  }
  v.kind = kind;
  if (v.status == VehicleStatus::offline) {
    v.status = v.current_task ? VehicleStatus::busy : VehicleStatus::idle;
  }
  return v;
}

void TaskManager::set_offline(const std::string& id, const std::string& reason) {
  const auto it = fleet_.find(id);
  if (it == fleet_.end()) return;
  if (it->second.current_task) fail(*it->second.current_task, reason);
  it->second.status = VehicleStatus::offline;
}

std::vector<Assignment> TaskManager::assign_pending() {
  std::vector<Task*> pending;
  for (const auto& id : queue_) pending.push_back(&tasks_.at(id));
  auto out = tasking::assign(pending, fleet_);
  for (const auto& a : out) {
    transitions_.push_back({a.task_id, TaskStatus::pending, TaskStatus::assigned});
  }
  std::erase_if(queue_, [&](const std::string& id) { return tasks_.at(id).status != TaskStatus::pending; });
  return out;
}

void TaskManager::set_status(Task& t, TaskStatus to) {
  if (!transition_allowed(t.status, to)) {
    throw Error("task " + t.id + ": illegal transition " + std::string(to_string(t.status)) + " -> " +
                std::string(to_string(to)));
  }
  transitions_.push_back({t.id, t.status, to});
  t.status = to;
}

void TaskManager::release(Task& t) {
  if (!t.vehicle) return;
  const auto it = fleet_.find(*t.vehicle);
  if (it != fleet_.end() && it->second.current_task == t.id) {
    it->second.current_task.reset();
    if (it->second.status == VehicleStatus::busy) it->second.status = VehicleStatus::idle;
  }
}

void TaskManager::refresh_operation(const std::string& op_id) {
  auto& op = operations_.at(op_id);
  if (op.status != OperationStatus::active) return;
  bool all_terminal = true;
  bool any_failed = false;
  for (const auto& tid : op.task_ids) {
    const Task& t = tasks_.at(tid);
    all_terminal = all_terminal && terminal(t.status);
    any_failed = any_failed || t.status == TaskStatus::failed;
  }
  if (!all_terminal) return;
  op.status = any_failed ? OperationStatus::failed : OperationStatus::done;
  finished_ops_.push_back(op_id);
}

void TaskManager::activate(const std::string& task_id) {
  Task& t = tasks_.at(task_id);
  set_status(t, TaskStatus::active);
}

void TaskManager::advance(const std::string& task_id) {
  Task& t = tasks_.at(task_id);
  if (t.status != TaskStatus::active) return;
  const Step* s = t.current();
  if (s && !s->signals.empty()) operations_.at(t.operation_id).signals.insert(s->signals);
  ++t.cursor;
  if (t.cursor >= t.steps.size()) {
    set_status(t, TaskStatus::done);
    release(t);
    refresh_operation(t.operation_id);
  }
}

void TaskManager::fail(const std::string& task_id, const std::string& reason) {
  Task& t = tasks_.at(task_id);
  if (terminal(t.status)) return;
  t.failure = reason;
  set_status(t, TaskStatus::failed);
  release(t);
  std::erase(queue_, task_id);
  refresh_operation(t.operation_id);
}

UpdateOutcome TaskManager::on_vehicle_state(const VehicleUpdate& u) {
  const auto it = fleet_.find(u.vehicle_id);
  if (it == fleet_.end()) {
    spdlog::debug("state from unregistered vehicle {} dropped", u.vehicle_id);
    return UpdateOutcome::unknown_vehicle;
  }
  VehicleRecord& v = it->second;
  if (u.timestamp < v.last_timestamp) return UpdateOutcome::stale;
  v.last_timestamp = u.timestamp;
  v.pose = u.pose;
  if (u.error) {
    set_offline(v.id, u.error_text.empty() ? "vehicle error" : u.error_text);
    return UpdateOutcome::applied;
  }
  if (u.step_complete && v.current_task) advance(*v.current_task);
  return UpdateOutcome::applied;
}

void TaskManager::signal(const std::string& op_id, const std::string& name) {
  operations_.at(op_id).signals.insert(name);
}

bool TaskManager::signalled(const std::string& op_id, const std::string& name) const {
  if (name.empty()) return true;
  const auto it = operations_.find(op_id);
  return it != operations_.end() && it->second.signals.count(name) > 0;
}

std::vector<TaskTransition> TaskManager::drain_transitions() { return std::exchange(transitions_, {}); }

std::vector<std::string> TaskManager::drain_finished_operations() { return std::exchange(finished_ops_, {}); }

const Task* TaskManager::task(const std::string& id) const {
  const auto it = tasks_.find(id);
  return it == tasks_.end() ? nullptr : &it->second;
}

const Task* TaskManager::task_of(const std::string& vehicle_id) const {
  const auto it = fleet_.find(vehicle_id);
  if (it == fleet_.end() || !it->second.current_task) return nullptr;
  return task(*it->second.current_task);
}

bool TaskManager::ground_work_finished(const std::string& op_id) const {
  const auto& op = operations_.at(op_id);
  for (const auto& tid : op.task_ids) {
    const Task& t = tasks_.at(tid);
    const bool repeating = !t.steps.empty() && t.steps.front().repeat;
    if (!repeating && !terminal(t.status)) return false;
  }
  return true;
}

}  // namespace siteops::tasking
