#include "siteops/runner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "siteops/error.hpp"

namespace siteops::sim {

using nlohmann::json;

namespace {

double round3(double x) { return std::round(x * 1000.0) / 1000.0; }

json latency_summary(std::vector<std::int64_t> v) {
  if (v.empty()) return {{"count", 0}};
  std::sort(v.begin(), v.end());
  const auto pct = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
    return v[std::min(idx, v.size() - 1)];
  };
  const double mean = static_cast<double>(std::accumulate(v.begin(), v.end(), std::int64_t{0})) / v.size();
  return {{"count", v.size()}, {"mean", round3(mean)}, {"p50", pct(0.5)}, {"p95", pct(0.95)}, {"max", v.back()}};
}

}  // namespace

ScenarioRunner::ScenarioRunner(Scenario scenario, RunOptions options)
    : scenario_(std::move(scenario)),
      options_(std::move(options)),
      camera_(scale::calibrated_pinhole_model()),
      broker_(bus::BrokerConfig{}, bus::FaultConfig{scenario_.drop_probability, scenario_.seed, {}}) {
  if (!(options_.dt > 0)) throw ValidationError("must be positive", "dt");
  if (options_.time_scale < 0) throw ValidationError("must be non-negative", "time_scale");
  options_.coordinator.confidence_floor = scenario_.confidence_floor;
  coord_endpoint_ = std::make_unique<bus::LocalEndpoint>(broker_, "coordinator");
  coordinator_ = std::make_unique<coord::Coordinator>(scenario_.map, options_.coordinator, *coord_endpoint_, camera_);
  world_ = std::make_unique<SimWorld>(scenario_, camera_, [this](const std::string& id) {
    return std::make_unique<bus::LocalEndpoint>(broker_, id);
  });
  clock_.dt = options_.dt;
  clock_.time_scale = options_.time_scale > 0 ? options_.time_scale : 1.0;
  wall_start_ = std::chrono::steady_clock::now();
}

std::optional<std::string> ScenarioRunner::submit() {
  if (!scenario_.operation) return std::nullopt;
  auto result = coordinator_->submit_operation(*scenario_.operation);
  // Applied at the start of the next coordinator step.
  step();
  const auto r = result.get();
  if (r.status != 201) throw ValidationError(r.body.value("error", "operation rejected"), "operation");
  operation_id_ = r.body.at("operation_id").get<std::string>();
  return operation_id_;
}

void ScenarioRunner::step() {
  const std::int64_t now = clock_.now_ms();
  world_->step(clock_);
  broker_.tick(now);
  coordinator_->step(now);
  broker_.tick(now);
  track_detections();
  ++clock_.tick;

  if (options_.time_scale > 0) {
    const auto due = wall_start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                       std::chrono::duration<double>(sim_time_s() / options_.time_scale));
    std::this_thread::sleep_until(due);
  }
}

void ScenarioRunner::track_detections() {
  const auto live = coordinator_->live_obstacles();
  if (live.empty()) return;
  for (const auto& o : live) obstacle_ids_.insert(o.id);
  const double t = static_cast<double>(clock_.now_ms()) / 1000.0;
  for (const auto& [idx, actor] : world_->actors_at(t)) {
    if (first_detected_s_.count(idx)) continue;
    for (const auto& o : live) {
      if (!o.supervisor && geo::planar_distance(o.position, actor.position) <= 3.0) {
        first_detected_s_[idx] = t;
        spdlog::info("actor {} first reported at t={:.1f}s", scenario_.actors[idx].name, t);
        break;
      }
    }
  }
}

bool ScenarioRunner::finished() const {
  const std::string o = outcome();
  return o != "running";
}

std::string ScenarioRunner::outcome() const {
  if (operation_id_) {
    const auto& ops = coordinator_->tasks().operations();
    const auto it = ops.find(*operation_id_);
    if (it != ops.end() && it->second.status != tasking::OperationStatus::active) {
      return std::string(tasking::to_string(it->second.status));
    }
  }
  const double limit = options_.max_sim_time_s.value_or(scenario_.max_sim_time_s);
  return sim_time_s() >= limit ? "deadline" : "running";
}

json ScenarioRunner::run() {
  if (!operation_id_ && scenario_.operation) submit();
  while (!finished()) step();
  spdlog::info("scenario {} {} at t={:.1f}s ({:.2f}s wall)", scenario_.name, outcome(), sim_time_s(),
               std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start_).count());
  return metrics();
}

json ScenarioRunner::metrics() const {
  json vehicles = json::object();
  double ground = 0.0;
  for (const auto& v : world_->vehicles()) {
    vehicles[v.spec().id] = {{"kind", tasking::to_string(v.spec().kind)}, {"distance_m", round3(v.odometer())}};
    if (v.spec().kind != VehicleKind::uav) ground += v.odometer();
  }
  const auto& cs = coordinator_->stats();
  json actors = json::array();
  for (std::size_t i = 0; i < scenario_.actors.size(); ++i) {
    const auto& a = scenario_.actors[i];
    const auto it = first_detected_s_.find(i);
    actors.push_back({{"name", a.name},
                      {"class", geoloc::to_string(a.cls)},
                      {"first_reported_s", it == first_detected_s_.end() ? json(nullptr) : json(round3(it->second))},
                      {"delay_s", it == first_detected_s_.end() ? json(nullptr) : json(round3(it->second - a.appear_at_s))}});
  }
  const auto& bs = broker_.stats();
  const auto& ws = world_->stats();
  return {{"schema_version", 1},
          {"scenario", scenario_.name},
          {"seed", scenario_.seed},
          {"outcome", outcome()},
          {"operation_id", operation_id_ ? json(*operation_id_) : json(nullptr)},
          {"sim_time_s", round3(sim_time_s())},
          {"ticks", clock_.tick},
          {"vehicles", vehicles},
          {"ground_distance_m", round3(ground)},
          {"planning",
           {{"orders", cs.orders_issued},
            {"plans", cs.plans_issued},
            {"replans", cs.replans},
            {"halts", cs.halts},
            {"graph_builds", cs.graph_builds},
            {"unsafe_orders", cs.unsafe_orders},
            {"graph_generation", coordinator_->graph_generation()}}},
          {"detection",
           {{"frames", ws.frames},
            {"detections", ws.detections},
            {"reports_published", ws.reports},
            {"reports_ingested", cs.reports_ingested},
            {"reports_below_floor", cs.reports_below_floor},
            {"reports_outside", cs.reports_outside},
            {"obstacles", obstacle_ids_.size()},
            {"report_latency_ms", latency_summary(cs.report_latency_ms)},
            {"actors", actors}}},
          {"bus",
           {{"published", bs.published},
            {"delivered", bs.delivered},
            {"redelivered", bs.redelivered},
            {"dropped", bs.dropped},
            {"expired", bs.expired},
            {"undeliverable", bs.undeliverable}}},
          {"events", coordinator_->events().latest_seq()}};
}

}  // namespace siteops::sim
