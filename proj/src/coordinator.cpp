#include "siteops/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "siteops/bus/topic.hpp"
#include "siteops/error.hpp"
#include "siteops/vehicle_sim.hpp"

namespace siteops::coord {

using nlohmann::json;
using tasking::StepKind;
using tasking::TaskStatus;

void CoordinatorConfig::validate() const {
  if (!(clearance_floor > 0)) throw ValidationError("must be positive", "clearance_floor");
  if (replan_check_period <= 0) throw ValidationError("must be positive", "replan_check_period");
  if (unreachable_timeout_ms <= 0) throw ValidationError("must be positive", "unreachable_timeout_ms");
  if (!(confidence_floor >= 0 && confidence_floor <= 1)) throw ValidationError("must lie in [0, 1]", "confidence_floor");
  if (event_retention == 0) throw ValidationError("must be positive", "event_retention");
  if (!(arrival_slack >= 0)) throw ValidationError("must be non-negative", "arrival_slack");
}

namespace {

json point_json(const EnuPoint& p, const geo::GeoPoint& origin) {
  const auto g = geo::enu_to_geodetic(origin, p);
  return {{"east", p.east}, {"north", p.north}, {"up", p.up}, {"lat", g.lat}, {"lon", g.lon}};
}

json obstacle_json(const sitemap::DynamicObstacle& o, const geo::GeoPoint& origin) {
  json j = point_json(o.position, origin);
  j["id"] = o.id;
  j["radius"] = o.radius;
  j["class"] = geoloc::to_string(o.cls);
  j["last_seen"] = o.last_seen;
  j["ttl_ms"] = o.ttl;
  j["supervisor"] = o.supervisor;
  return j;
}

json task_json(const tasking::Task& t) {
  const auto* step = t.current();
  return {{"id", t.id},
          {"operation_id", t.operation_id},
          {"capability", tasking::to_string(t.capability)},
          {"status", tasking::to_string(t.status)},
          {"vehicle", t.vehicle ? json(*t.vehicle) : json(nullptr)},
          {"cursor", t.cursor},
          {"steps", t.steps.size()},
          {"step", step ? json(tasking::to_string(step->kind)) : json(nullptr)},
          {"zone", step && !step->zone.empty() ? json(step->zone) : json(nullptr)},
          {"failure", t.failure}};
}

json operation_json(const tasking::Operation& op) {
  return {{"id", op.id},
          {"kind", op.request.kind == tasking::OperationKind::survey ? "survey" : "load_dump"},
          {"status", tasking::to_string(op.status)},
          {"task_ids", op.task_ids},
          {"signals", op.signals},
          {"request", tasking::to_json(op.request)}};
}

bool terminal(tasking::OperationStatus s) { return s != tasking::OperationStatus::active; }

CommandResult error_result(int status, const std::string& message, const std::string& field = {}) {
  CommandResult r{status, {{"error", message}}};
  if (!field.empty()) r.body["field"] = field;
  return r;
}

}  // namespace

json to_json(const IssuedOrder& o, const geo::GeoPoint& origin) {
  json pts = json::array();
  for (const auto& p : o.waypoints) pts.push_back(point_json(p, origin));
  return {{"vehicle_id", o.vehicle_id}, {"order_id", o.order_id},   {"update_id", o.update_id},
          {"kind", o.kind},             {"waypoints", pts},         {"graph_generation", o.graph_generation},
          {"issued_at", o.issued_at},   {"replan", o.replan}};
}

Coordinator::Coordinator(sitemap::SiteMap map, CoordinatorConfig cfg, bus::Endpoint& endpoint,
                         scale::ScaleModel camera)
    : map_(std::move(map)),
      cfg_(std::move(cfg)),
      endpoint_(endpoint),
      camera_(std::move(camera)),
      tasks_(map_),
      registry_(map_, cfg_.registry),
      events_(cfg_.event_retention) {
  cfg_.validate();
  cfg_.planner.clearance_floor = cfg_.clearance_floor;
  const std::string prefix = "fleet/v1/" + cfg_.manufacturer + "/+/";
  endpoint_.subscribe(prefix + "state");
  endpoint_.subscribe(prefix + "connection");
  endpoint_.subscribe(prefix + "objects");
  publish_snapshot();
}

std::string Coordinator::order_topic(const std::string& vehicle_id) const {
  return bus::topic_for(vehicle_id, bus::TopicKind::order, cfg_.manufacturer);
}

// ---- commands ----

std::future<CommandResult> Coordinator::enqueue(Command cmd) {
  std::promise<CommandResult> p;
  auto f = p.get_future();
  std::lock_guard lock(cmd_mu_);
  commands_.emplace_back(std::move(cmd), std::move(p));
  return f;
}

void Coordinator::apply_commands() {
  std::vector<std::pair<Command, std::promise<CommandResult>>> batch;
  {
    std::lock_guard lock(cmd_mu_);
    batch.swap(commands_);
  }
  for (auto& [cmd, promise] : batch) {
    try {
      promise.set_value(cmd());
    } catch (const ValidationError& e) {
      promise.set_value(error_result(422, e.what(), e.field()));
    } catch (const std::exception& e) {
      promise.set_value(error_result(500, e.what()));
    }
  }
}

std::future<CommandResult> Coordinator::submit_operation(json doc) {
  return enqueue([this, doc = std::move(doc)] {
    const auto req = tasking::operation_from_json(doc);
    const std::string id = tasks_.submit(req);
    spdlog::info("operation {} submitted", id);
    return CommandResult{201, {{"operation_id", id}, {"task_ids", tasks_.operations().at(id).task_ids}}};
  });
}

std::future<CommandResult> Coordinator::cancel_operation(std::string op_id) {
  return enqueue([this, op_id = std::move(op_id)] {
    const auto it = tasks_.operations().find(op_id);
    if (it == tasks_.operations().end()) return error_result(404, "unknown operation '" + op_id + "'");
    if (!tasks_.cancel(op_id)) return error_result(409, "operation '" + op_id + "' already finished");
    return CommandResult{200, {{"operation_id", op_id}, {"status", "cancelled"}}};
  });
}

std::future<CommandResult> Coordinator::inject_obstacle(json doc) {
  return enqueue([this, doc = std::move(doc)] {
    if (!doc.is_object()) throw ValidationError("expected an object", "obstacle");
    const auto num = [&](const char* key) {
      if (!doc[key].is_number()) throw ValidationError("must be a number", key);
      return doc[key].get<double>();
    };
    EnuPoint p;
    if (doc.contains("east") || doc.contains("north")) {
      p = {num("east"), num("north"), 0.0};
    } else if (doc.contains("lat") && doc.contains("lon")) {
      geo::GeoPoint g{num("lat"), num("lon"), 0.0};
      geo::validate(g);
      p = geo::geodetic_to_enu(map_.origin, g);
      p.up = 0.0;
    } else {
      throw ValidationError("give east/north or lat/lon", "position");
    }
    if (!map_.inside_boundary(p)) throw ValidationError("outside the site boundary", "position");
    const double radius = doc.contains("radius") ? num("radius") : cfg_.registry.person_radius;
    if (!(radius > 0)) throw ValidationError("must be positive", "radius");
    std::int64_t ttl = -1;
    if (doc.contains("ttl_s") && !doc["ttl_s"].is_null()) {
      const double t = num("ttl_s");
      if (!(t >= 0)) throw ValidationError("must be non-negative", "ttl_s");
      ttl = static_cast<std::int64_t>(std::llround(t * 1000.0));
    }
    auto cls = geoloc::ObjectClass::person;
    if (doc.contains("class")) {
      try {
        cls = geoloc::object_class_from_string(doc["class"].get<std::string>());
      } catch (const std::exception& e) {
        throw ValidationError(e.what(), "class");
      }
    }
    const auto o = registry_.inject(p, radius, now_, ttl, cls);
    ++obstacle_version_;
    spdlog::info("supervisor obstacle {} at ({:.1f}, {:.1f}) r={:.1f}", o.id, p.east, p.north, radius);
    return CommandResult{201, obstacle_json(o, map_.origin)};
  });
}

std::future<CommandResult> Coordinator::clear_obstacle(std::uint64_t id) {
  return enqueue([this, id] {
    if (!registry_.clear(id)) return error_result(404, "unknown obstacle " + std::to_string(id));
    ++obstacle_version_;
    return CommandResult{200, {{"id", id}, {"cleared", true}}};
  });
}

std::future<CommandResult> Coordinator::pause_vehicle(std::string vehicle_id) {
  return enqueue([this, vehicle_id = std::move(vehicle_id)] {
    auto& fleet = tasks_.fleet();
    const auto it = fleet.find(vehicle_id);
    if (it == fleet.end()) return error_result(404, "unknown vehicle '" + vehicle_id + "'");
    it->second.paused = true;
    const auto e = execs_.find(vehicle_id);
    if (e != execs_.end() && e->second.issued && !e->second.halted) halt(vehicle_id, e->second, false);
    return CommandResult{200, {{"vehicle_id", vehicle_id}, {"paused", true}}};
  });
}

std::future<CommandResult> Coordinator::resume_vehicle(std::string vehicle_id) {
  return enqueue([this, vehicle_id = std::move(vehicle_id)] {
    auto& fleet = tasks_.fleet();
    const auto it = fleet.find(vehicle_id);
    if (it == fleet.end()) return error_result(404, "unknown vehicle '" + vehicle_id + "'");
    it->second.paused = false;
    // The interrupted step starts over from the current pose.
    const auto e = execs_.find(vehicle_id);
    if (e != execs_.end()) {
      e->second.issued = false;
      e->second.halted = false;
      e->second.blocked_since.reset();
    }
    return CommandResult{200, {{"vehicle_id", vehicle_id}, {"paused", false}}};
  });
}

// ---- loop ----

void Coordinator::step(std::int64_t now_ms) {
  now_ = now_ms;
  ++stats_.iterations;
  apply_commands();
  for (const auto& env : endpoint_.drain()) handle_message(env);
  expire_obstacles();
  if (stats_.iterations % static_cast<std::uint64_t>(cfg_.replan_check_period) == 0) check_routes();
  reconcile();
  tasks_.assign_pending();
  drive_tasks();
  emit_diffs();
  publish_snapshot();
}

void Coordinator::handle_message(const bus::Envelope& env) {
  // fleet/v1/<manufacturer>/<vehicle>/<kind>
  std::vector<std::string> seg;
  std::size_t start = 0;
  for (;;) {
    const auto slash = env.topic.find('/', start);
    seg.push_back(env.topic.substr(start, slash - start));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  if (seg.size() != 5) return;
  const std::string& vid = seg[3];
  const std::string& kind = seg[4];
  try {
    if (kind == "connection") {
      const auto c = bus::connection_from_json(env.payload);
      connection_[vid] = std::string(bus::to_string(c.connection_state));
      if (c.connection_state == bus::ConnectionState::online) {
        const auto vk = tasking::vehicle_kind_from_string(c.vehicle_kind);
        const auto& fleet = tasks_.fleet();
        if (const auto it = fleet.find(vid); it != fleet.end()) {
          tasks_.register_vehicle(vid, vk, it->second.pose);
        } else {
          announced_[vid] = vk;
        }
        spdlog::info("{} online ({})", vid, c.vehicle_kind);
      } else {
        spdlog::warn("{} {}", vid, bus::to_string(c.connection_state));
        announced_.erase(vid);
        if (tasks_.fleet().count(vid)) tasks_.set_offline(vid, "connection " + connection_[vid]);
        execs_.erase(vid);
      }
    } else if (kind == "state") {
      handle_state(vid, bus::state_from_json(env.payload));
    } else if (kind == "objects") {
      const auto r = bus::object_report_from_json(env.payload);
      if (r.confidence < cfg_.confidence_floor) {
        ++stats_.reports_below_floor;
        return;
      }
      stats_.report_latency_ms.push_back(now_ - r.source_ts);
      if (registry_.ingest_report(r, now_)) {
        ++stats_.reports_ingested;
        ++obstacle_version_;
      } else {
        ++stats_.reports_outside;
      }
    }
  } catch (const Error& e) {
    spdlog::warn("dropping {} message from {}: {}", kind, vid, e.what());
  } catch (const json::exception& e) {
    spdlog::warn("dropping {} message from {}: {}", kind, vid, e.what());
  }
}

void Coordinator::handle_state(const std::string& vid, const bus::StateMsg& st) {
  if (st.vehicle_id != vid) return;
  geo::Pose2D pose{geo::geodetic_to_enu(map_.origin, st.position), st.yaw};
  if (!tasks_.fleet().count(vid)) {
    const auto a = announced_.find(vid);
    if (a == announced_.end()) {
      spdlog::debug("state from {} before its connection message dropped", vid);
      return;
    }
    tasks_.register_vehicle(vid, a->second, pose);
    announced_.erase(a);
  }
  if (tasks_.fleet().at(vid).kind != tasking::VehicleKind::uav) pose.position.up = 0.0;
  if (st.timestamp < tasks_.fleet().at(vid).last_timestamp) return;
  last_state_[vid] = st;

  bool complete = false;
  auto e = execs_.find(vid);
  if (e != execs_.end()) {
    Exec& x = e->second;
    if (x.issued && !x.halted && st.order_id == x.order_id && st.order_update_id == x.update_id) {
      x.last_node = st.last_node_id;
      const bool actions_done = std::all_of(st.action_states.begin(), st.action_states.end(),
                                            [](const bus::ActionState& a) { return a.status == "finished"; });
      complete = !x.node_ids.empty() && st.last_node_id == x.node_ids.back() && !st.driving && actions_done;
    }
    if (complete && x.kind == StepKind::survey) {
      const auto* task = tasks_.task(x.task_id);
      const auto* s = task ? task->current() : nullptr;
      if (s && s->repeat && !tasks_.ground_work_finished(task->operation_id)) {
        ++x.survey_pass;
        issue_order(vid, x, "survey", x.route, std::nullopt, false);
        complete = false;
      }
    }
  }

  tasking::VehicleUpdate u{vid, pose, st.timestamp, complete, !st.errors.empty(), {}};
  for (const auto& err : st.errors) u.error_text += (u.error_text.empty() ? "" : ", ") + err;
  tasks_.on_vehicle_state(u);
  if (u.error || complete) execs_.erase(vid);
}

void Coordinator::expire_obstacles() {
  const auto gone = registry_.expire(now_);
  if (!gone.empty()) ++obstacle_version_;
}

const planner::VoronoiGraph& Coordinator::graph() {
  if (!graph_ || graph_version_ != obstacle_version_) {
    graph_.reset();
    const auto live = registry_.live_obstacles(now_);
    graph_ = planner::build_graph(map_, live, cfg_.planner, next_generation_++);
    graph_version_ = obstacle_version_;
    ++stats_.graph_builds;
  }
  return *graph_;
}

PlannedPath Coordinator::plan_query(const EnuPoint& start, const EnuPoint& goal) {
  return planner::plan(graph(), start, goal, cfg_.planner);
}

std::int64_t Coordinator::next_update(const std::string& order_id) {
  auto [it, fresh] = update_counters_.try_emplace(order_id, 0);
  return it->second++;
}

void Coordinator::issue_order(const std::string& vid, Exec& exec, const std::string& kind,
                              const std::vector<EnuPoint>& waypoints, std::optional<bus::Action> action,
                              bool replan) {
  exec.update_id = next_update(exec.order_id);
  bus::OrderMsg msg;
  msg.order_id = exec.order_id;
  msg.update_id = exec.update_id;
  msg.vehicle_id = vid;
  exec.node_ids.clear();
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    bus::OrderNode n;
    n.node_id = exec.order_id + "-" + std::to_string(exec.update_id) + "-" + std::to_string(i);
    n.position = geo::enu_to_geodetic(map_.origin, waypoints[i]);
    if (i + 1 == waypoints.size()) n.action = action;
    if (i > 0) msg.edges.push_back({n.node_id + "-e", exec.node_ids.back(), n.node_id});
    exec.node_ids.push_back(n.node_id);
    msg.nodes.push_back(std::move(n));
  }
  msg.validate();
  endpoint_.publish(order_topic(vid), bus::to_json(msg), 1, now_);
  exec.issued = true;
  exec.route = waypoints;
  exec.last_node.clear();

  ++stats_.orders_issued;
  if (kind == "navigate") {
    ++stats_.plans_issued;
    if (sitemap::blocks_path(std::span<const EnuPoint>(waypoints), live_obstacles(), cfg_.clearance_floor)) {
      ++stats_.unsafe_orders;
      spdlog::error("order {} update {} crosses a live obstacle", exec.order_id, exec.update_id);
    }
  }
  if (replan) ++stats_.replans;

  IssuedOrder rec{vid, exec.order_id, exec.update_id, kind, waypoints, graph_generation(), now_, replan};
  orders_[vid] = rec;
  emit(replan ? "replan" : "plan_issued", {{"path", to_json(rec, map_.origin)}});
  spdlog::info("{} {} {} update {} ({} waypoints)", replan ? "replan" : "order", vid, exec.order_id, exec.update_id,
               waypoints.size());
}

void Coordinator::halt(const std::string& vid, Exec& exec, bool replan) {
  EnuPoint here = tasks_.fleet().at(vid).pose.position;
  issue_order(vid, exec, "halt", {here}, std::nullopt, replan);
  exec.halted = true;
  ++stats_.halts;
}

bool Coordinator::issue_navigate(const std::string& vid, Exec& exec, bool replan) {
  EnuPoint start = tasks_.fleet().at(vid).pose.position;
  start.up = 0.0;
  PlannedPath path;
  try {
    path = planner::plan(graph(), start, exec.goal, cfg_.planner);
  } catch (const Error& e) {
    spdlog::warn("{}: no route to ({:.1f}, {:.1f}): {}", vid, exec.goal.east, exec.goal.north, e.what());
    if (!exec.halted) halt(vid, exec, replan);
    if (!exec.blocked_since) exec.blocked_since = now_;
    return false;
  }
  exec.halted = false;
  exec.blocked_since.reset();
  issue_order(vid, exec, "navigate", path.waypoints, std::nullopt, replan);
  return true;
}

void Coordinator::check_routes() {
  const auto live = registry_.live_obstacles(now_);
  for (auto& [vid, exec] : execs_) {
    if (!exec.issued || exec.kind != StepKind::navigate) continue;
    const auto& v = tasks_.fleet().at(vid);
    if (v.paused) continue;
    if (exec.halted) {
      if (issue_navigate(vid, exec, true)) continue;
      if (now_ - *exec.blocked_since >= cfg_.unreachable_timeout_ms) {
        tasks_.fail(exec.task_id, "goal unreachable");
      }
      continue;
    }
    std::vector<EnuPoint> remaining{v.pose.position};
    remaining.front().up = 0.0;
    const auto reached = std::find(exec.node_ids.begin(), exec.node_ids.end(), exec.last_node);
    const std::size_t next = reached == exec.node_ids.end() ? 0 : static_cast<std::size_t>(reached - exec.node_ids.begin()) + 1;
    for (std::size_t i = next; i < exec.route.size(); ++i) remaining.push_back(exec.route[i]);
    if (sitemap::blocks_path(std::span<const EnuPoint>(remaining), live, cfg_.clearance_floor)) {
      spdlog::info("{}: route to ({:.1f}, {:.1f}) blocked", vid, exec.goal.east, exec.goal.north);
      issue_navigate(vid, exec, true);
    }
  }
}

void Coordinator::reconcile() {
  for (auto it = execs_.begin(); it != execs_.end();) {
    const auto& [vid, exec] = *it;
    const auto* task = tasks_.task(exec.task_id);
    const bool owned = task && !tasking::terminal(task->status) && task->vehicle == vid;
    if (owned) {
      ++it;
      continue;
    }
    // Stop a vehicle whose work was withdrawn mid-step.
    const auto c = connection_.find(vid);
    if (exec.issued && !exec.halted && c != connection_.end() && c->second == "online" && tasks_.fleet().count(vid)) {
      halt(vid, it->second, false);
    }
    it = execs_.erase(it);
  }
}

void Coordinator::start_step(const std::string& vid, const tasking::Task& task) {
  Exec& exec = execs_[vid];
  if (exec.task_id != task.id || exec.cursor != task.cursor) {
    exec = Exec{};
    exec.task_id = task.id;
    exec.cursor = task.cursor;
    exec.kind = task.current()->kind;
    exec.order_id = task.id + "-s" + std::to_string(task.cursor);
    exec.goal = task.current()->target;
  }
}

void Coordinator::drive_tasks() {
  // A repeating survey ends with the ground work it supports.
  for (const auto& [op_id, op] : tasks_.operations()) {
    if (terminal(op.status) || !tasks_.ground_work_finished(op_id)) continue;
    for (const auto& tid : op.task_ids) {
      const auto* t = tasks_.task(tid);
      const auto* s = t->current();
      if (!s || s->kind != StepKind::survey || !s->repeat) continue;
      if (t->status == TaskStatus::pending) {
        tasks_.fail(tid, "no survey vehicle available");
      } else if (t->status == TaskStatus::assigned || t->status == TaskStatus::active) {
        if (t->status == TaskStatus::assigned) tasks_.activate(tid);
        while (tasks_.task(tid)->status == TaskStatus::active) tasks_.advance(tid);
      }
    }
  }

  for (const auto& [tid, task] : tasks_.tasks()) {
    if ((task.status != TaskStatus::assigned && task.status != TaskStatus::active) || !task.vehicle) continue;
    const std::string vid = *task.vehicle;
    if (task.status == TaskStatus::assigned) tasks_.activate(tid);
    const auto& v = tasks_.fleet().at(vid);

    for (std::size_t guard = 0; guard <= task.steps.size() && task.status == TaskStatus::active; ++guard) {
      const tasking::Step* step = task.current();
      if (!step) break;
      start_step(vid, task);
      Exec& exec = execs_.at(vid);
      if (exec.issued || v.paused) break;

      bool done = false;
      switch (step->kind) {
        case StepKind::wait:
          done = tasks_.signalled(task.operation_id, step->waits_for);
          break;
        case StepKind::navigate: {
          EnuPoint here = v.pose.position;
          here.up = 0.0;
          if (geo::planar_distance(here, exec.goal) <= cfg_.arrival_slack) {
            done = true;
          } else {
            issue_navigate(vid, exec, false);
          }
          break;
        }
        case StepKind::act:
          if (tasks_.signalled(task.operation_id, step->waits_for)) {
            issue_order(vid, exec, "act", {v.pose.position},
                        bus::Action{exec.order_id + "-a", step->action, step->duration_s}, false);
          }
          break;
        case StepKind::survey:
          try {
            const auto route = sim::survey_route(map_, step->altitude, step->swath_overlap, camera_);
            issue_order(vid, exec, "survey", route, std::nullopt, false);
          } catch (const Error& e) {
            tasks_.fail(tid, std::string("survey: ") + e.what());
          }
          break;
      }
      if (!done) break;
      tasks_.advance(tid);
      execs_.erase(vid);
    }
  }
}

// ---- events and snapshots ----

namespace {

json vehicle_json(const tasking::VehicleRecord& v, const std::string& connection, const geo::GeoPoint& origin) {
  json pose = point_json(v.pose.position, origin);
  pose["yaw"] = v.pose.yaw;
  return {{"id", v.id},
          {"kind", tasking::to_string(v.kind)},
          {"status", tasking::to_string(v.status)},
          {"connection", connection},
          {"paused", v.paused},
          {"pose", pose},
          {"current_task", v.current_task ? json(*v.current_task) : json(nullptr)},
          {"last_timestamp", v.last_timestamp}};
}

}  // namespace

void Coordinator::emit(const std::string& kind, json payload) {
  last_event_gen_ = graph_generation();
  events_.append(kind, std::move(payload), now_, last_event_gen_);
}

void Coordinator::emit_diffs() {
  for (const auto& [vid, v] : tasks_.fleet()) {
    const auto c = connection_.find(vid);
    json rec = vehicle_json(v, c == connection_.end() ? "unknown" : c->second, map_.origin);
    auto& seen = seen_vehicles_[vid];
    if (seen != rec) {
      emit("vehicle_state", {{"vehicle", rec}});
      seen = std::move(rec);
    }
  }

  std::map<std::uint64_t, json> live;
  for (const auto& o : registry_.live_obstacles(now_)) live[o.id] = obstacle_json(o, map_.origin);
  for (auto it = seen_obstacles_.begin(); it != seen_obstacles_.end();) {
    if (live.count(it->first)) {
      ++it;
      continue;
    }
    emit("obstacle_expired", {{"id", it->first}});
    it = seen_obstacles_.erase(it);
  }
  for (auto& [id, rec] : live) {
    auto& seen = seen_obstacles_[id];
    if (seen != rec) {
      emit("obstacle_added", {{"obstacle", rec}});
      seen = rec;
    }
  }

  const auto op_record = [&](const std::string& op_id) {
    json rec = operation_json(tasks_.operations().at(op_id));
    seen_operations_[op_id] = rec;
    return rec;
  };
  std::set<std::string> reported;
  for (const auto& tr : tasks_.drain_transitions()) {
    const auto& t = *tasks_.task(tr.task_id);
    json rec = task_json(t);
    emit("task_transition", {{"task", rec},
                             {"from", tasking::to_string(tr.from)},
                             {"to", tasking::to_string(tr.to)},
                             {"operation", op_record(t.operation_id)}});
    seen_tasks_[t.id] = std::move(rec);
  }
  for (const auto& [tid, t] : tasks_.tasks()) {
    json rec = task_json(t);
    auto& seen = seen_tasks_[tid];
    if (seen == rec) continue;
    const auto status = tasking::to_string(t.status);
    emit("task_transition",
         {{"task", rec}, {"from", status}, {"to", status}, {"operation", op_record(t.operation_id)}});
    seen = std::move(rec);
  }
  for (const auto& op_id : tasks_.drain_finished_operations()) {
    emit("operation_done", {{"operation", op_record(op_id)}});
    spdlog::info("operation {} {}", op_id, tasking::to_string(tasks_.operations().at(op_id).status));
  }
  for (const auto& [op_id, op] : tasks_.operations()) {
    json rec = operation_json(op);
    if (seen_operations_[op_id] != rec) {
      emit("operation_done", {{"operation", op_record(op_id)}});
    }
  }
}

void Coordinator::publish_snapshot() {
  json paths = json::object();
  for (const auto& [vid, o] : orders_) paths[vid] = to_json(o, map_.origin);
  json vehicles = json::object(), obstacles = json::object(), tasks = json::object(), ops = json::object();
  for (const auto& [k, v] : seen_vehicles_) vehicles[k] = v;
  for (const auto& [k, v] : seen_obstacles_) obstacles[std::to_string(k)] = v;
  for (const auto& [k, v] : seen_tasks_) tasks[k] = v;
  for (const auto& [k, v] : seen_operations_) ops[k] = v;
  json snap = {{"schema", "snapshot/1"},
               {"seq", events_.latest_seq()},
               {"time_ms", now_},
               {"graph_generation", last_event_gen_},
               {"vehicles", vehicles},
               {"obstacles", obstacles},
               {"paths", paths},
               {"tasks", tasks},
               {"operations", ops}};
  std::lock_guard lock(snap_mu_);
  snapshot_ = std::move(snap);
}

json Coordinator::snapshot() const {
  std::lock_guard lock(snap_mu_);
  return snapshot_;
}

json fold_event(json snap, const EventRecord& e) {
  const auto& p = e.payload;
  if (e.kind == "gap") return snap;
  if (e.kind == "vehicle_state") {
    snap["vehicles"][p.at("vehicle").at("id").get<std::string>()] = p.at("vehicle");
  } else if (e.kind == "obstacle_added") {
    snap["obstacles"][std::to_string(p.at("obstacle").at("id").get<std::uint64_t>())] = p.at("obstacle");
  } else if (e.kind == "obstacle_expired") {
    snap["obstacles"].erase(std::to_string(p.at("id").get<std::uint64_t>()));
  } else if (e.kind == "plan_issued" || e.kind == "replan") {
    snap["paths"][p.at("path").at("vehicle_id").get<std::string>()] = p.at("path");
  } else if (e.kind == "task_transition") {
    snap["tasks"][p.at("task").at("id").get<std::string>()] = p.at("task");
    snap["operations"][p.at("operation").at("id").get<std::string>()] = p.at("operation");
  } else if (e.kind == "operation_done") {
    snap["operations"][p.at("operation").at("id").get<std::string>()] = p.at("operation");
  } else {
    throw ValidationError("unknown event kind '" + e.kind + "'", "kind");
  }
  snap["seq"] = e.seq;
  snap["time_ms"] = e.timestamp;
  snap["graph_generation"] = e.graph_generation;
  return snap;
}

}  // namespace siteops::coord
