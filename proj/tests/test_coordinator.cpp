#include <doctest.h>

#include <atomic>
#include <map>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "siteops/api.hpp"
#include "siteops/bus/messages.hpp"
#include "siteops/bus/topic.hpp"
#include "siteops/coordinator.hpp"
#include "siteops/error.hpp"
#include "siteops/runner.hpp"

using namespace siteops;
using namespace siteops::coord;
using geo::EnuPoint;
using nlohmann::json;

namespace {

json scenario_doc(bool with_uav = true) {
  json vehicles = json::array({
      {{"id", "excavator1"}, {"kind", "excavator"}, {"start", "excavator_depot"}, {"yaw", 3.14159}},
      {{"id", "ugv1"}, {"kind", "ugv"}, {"start", "hauler_depot"}, {"yaw", 3.14159}},
  });
  if (with_uav) vehicles.push_back({{"id", "uav1"}, {"kind", "uav"}, {"start", "uav_home"}});
  return {{"name", "coord-test"},
          {"map", "openairlab.map"},
          {"seed", 3},
          {"vehicles", vehicles},
          {"operation", {{"kind", "load_dump"}, {"load_zone", "load"}, {"dump_zone", "dump"}, {"cycles", 1}}},
          {"max_sim_time_s", 600}};
}

std::unique_ptr<sim::ScenarioRunner> make_runner(const json& doc, int period = 5) {
  sim::RunOptions opt;
  opt.coordinator.replan_check_period = period;
  return std::make_unique<sim::ScenarioRunner>(sim::scenario_from_json(doc, SITEOPS_DATA_DIR), opt);
}

std::vector<EventRecord> new_events(const EventLog& log, std::uint64_t& cursor) {
  auto b = log.read(cursor + 1, 1'000'000);
  if (!b.events.empty()) cursor = b.events.back().seq;
  return b.events;
}

std::vector<EnuPoint> path_points(const json& path) {
  std::vector<EnuPoint> out;
  for (const auto& w : path.at("waypoints")) out.push_back({w.at("east"), w.at("north"), 0.0});
  return out;
}

double point_segment(const EnuPoint& p, const EnuPoint& a, const EnuPoint& b) {
  const double dx = b.east - a.east, dy = b.north - a.north;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.east - a.east) * dx + (p.north - a.north) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.east - (a.east + t * dx), p.north - (a.north + t * dy));
}

double distance_to_route(const EnuPoint& p, const std::vector<EnuPoint>& route) {
  double d = route.empty() ? 1e9 : geo::planar_distance(p, route.front());
  for (std::size_t i = 1; i < route.size(); ++i) d = std::min(d, point_segment(p, route[i - 1], route[i]));
  return d;
}

EnuPoint along(const std::vector<EnuPoint>& route, double dist) {
  for (std::size_t i = 1; i < route.size(); ++i) {
    const double seg = geo::planar_distance(route[i - 1], route[i]);
    if (dist <= seg) {
      const double t = dist / seg;
      return {route[i - 1].east + t * (route[i].east - route[i - 1].east),
              route[i - 1].north + t * (route[i].north - route[i - 1].north), 0.0};
    }
    dist -= seg;
  }
  return route.back();
}

/// Publishes an object report as a UAV would.
struct Reporter {
  bus::LocalEndpoint ep;
  geo::GeoPoint origin;
  explicit Reporter(sim::ScenarioRunner& r) : ep(r.broker(), "probe"), origin(r.scenario().map.origin) {}
  void report(const EnuPoint& p, std::int64_t now, double confidence = 0.9) {
    geoloc::ObjectReport rep{geo::enu_to_geodetic(origin, p), geoloc::ObjectClass::person, confidence, now};
    ep.publish(bus::topic_for("probe", bus::TopicKind::objects), bus::to_json(rep), 1, now);
  }
};

json strip(json s) {
  s.erase("seq");
  s.erase("time_ms");
  return s;
}

}  // namespace

TEST_CASE("operation submission") {
  auto r = make_runner(scenario_doc());
  auto& c = r->coordinator();
  auto ok = c.submit_operation(json{{"kind", "load_dump"}, {"load_zone", "load"}, {"dump_zone", "dump"}, {"cycles", 1}});
  auto dup = c.submit_operation(json{{"kind", "load_dump"}, {"load_zone", "load"}, {"dump_zone", "dump"}, {"cycles", 1}});
  auto bad_zone = c.submit_operation(json{{"kind", "load_dump"}, {"load_zone", "quarry"}, {"dump_zone", "dump"}});
  auto bad_doc = c.submit_operation(json{{"kind", "load_dump"}, {"load_zone", "load"}, {"dump_zone", "dump"}, {"cycles", 0}});
  r->step();
  const auto a = ok.get(), b = dup.get(), z = bad_zone.get(), d = bad_doc.get();
  CHECK(a.status == 201);
  CHECK(a.body["task_ids"].size() == 3);
  CHECK(b.status == 201);
  CHECK(a.body["operation_id"] != b.body["operation_id"]);
  CHECK(z.status == 422);
  CHECK(z.body["field"] == "load_zone");
  CHECK(d.status == 422);
  CHECK(d.body["field"] == "cycles");
  CHECK(c.tasks().tasks().size() == 6);
}

TEST_CASE("snapshot lists vehicles only after they connect") {
  sitemap::SiteMap map = sitemap::load_map(std::string(SITEOPS_DATA_DIR) + "/openairlab.map");
  bus::Broker broker;
  bus::LocalEndpoint ep(broker, "coordinator");
  Coordinator c(map, {}, ep);
  c.step(0);
  auto s = c.snapshot();
  CHECK(s["vehicles"].empty());
  CHECK(s["seq"].get<std::uint64_t>() <= c.events().latest_seq());

  bus::LocalEndpoint v(broker, "ugv7");
  const EnuPoint p{12, -3, 0};
  bus::StateMsg st;
  st.vehicle_id = "ugv7";
  st.position = geo::enu_to_geodetic(map.origin, p);
  st.timestamp = 100;
  // State before any connection message is dropped.
  v.publish(bus::topic_for("ugv7", bus::TopicKind::state), bus::to_json(st), 0, 100);
  c.step(100);
  CHECK(c.snapshot()["vehicles"].empty());

  v.publish(bus::topic_for("ugv7", bus::TopicKind::connection),
            bus::to_json(bus::ConnectionMsg{"ugv7", bus::ConnectionState::online, "ugv", 200}), 1, 200);
  st.timestamp = 200;
  v.publish(bus::topic_for("ugv7", bus::TopicKind::state), bus::to_json(st), 0, 200);
  c.step(200);
  s = c.snapshot();
  REQUIRE(s["vehicles"].contains("ugv7"));
  CHECK(s["vehicles"]["ugv7"]["pose"]["east"].get<double>() == doctest::Approx(12.0).epsilon(1e-6));
  CHECK(s["vehicles"]["ugv7"]["status"] == "idle");
  CHECK(s["seq"].get<std::uint64_t>() == c.events().latest_seq());

  v.publish(bus::topic_for("ugv7", bus::TopicKind::connection),
            bus::to_json(bus::ConnectionMsg{"ugv7", bus::ConnectionState::offline, "ugv", 300}), 1, 300);
  c.step(300);
  CHECK(c.snapshot()["vehicles"]["ugv7"]["status"] == "offline");
}

TEST_CASE("snapshot plus later events reproduces later snapshots") {
  auto doc = scenario_doc();
  doc["actors"] = json::array({{{"pos", {-20, -10.5}}, {"path", {{-20, -6}}}, {"speed", 0.3}}});
  auto r = make_runner(doc);
  r->submit();
  json base = r->coordinator().snapshot();
  int checks = 0;
  while (!r->finished()) {
    for (int i = 0; i < 37 && !r->finished(); ++i) r->step();
    const json now = r->coordinator().snapshot();
    json folded = base;
    const auto batch = r->coordinator().events().read(base["seq"].get<std::uint64_t>() + 1, 1'000'000);
    for (const auto& e : batch.events) folded = fold_event(std::move(folded), e);
    CHECK(strip(folded) == strip(now));
    CHECK(now["seq"].get<std::uint64_t>() <= r->coordinator().events().latest_seq());
    base = now;
    ++checks;
  }
  CHECK(checks > 5);
  CHECK(r->outcome() == "done");
}

TEST_CASE("update ids increase and issued routes are clear of live obstacles") {
  auto doc = scenario_doc();
  doc["actors"] = json::array({{{"pos", {-20, -10.5}}, {"path", {{-20, -6}}}, {"speed", 0.3}},
                               {{"pos", {-20, 19}}, {"path", {{20, 19}}}, {"speed", 0.5}}});
  auto r = make_runner(doc);
  r->submit();
  std::uint64_t cursor = 0;
  std::map<std::string, std::int64_t> last_update;
  int plans = 0;
  while (!r->finished()) {
    r->step();
    const auto live = r->coordinator().live_obstacles();
    for (const auto& e : new_events(r->coordinator().events(), cursor)) {
      if (e.kind != "plan_issued" && e.kind != "replan") continue;
      const auto& p = e.payload["path"];
      const std::string oid = p["order_id"];
      const auto u = p["update_id"].get<std::int64_t>();
      if (last_update.count(oid)) CHECK(u > last_update[oid]);
      last_update[oid] = u;
      if (p["kind"] != "navigate") continue;
      ++plans;
      const auto pts = path_points(p);
      for (const auto& o : live) CHECK(distance_to_route(o.position, pts) >= o.radius + 2.0 - 1e-9);
    }
  }
  CHECK(plans >= 3);
  CHECK(r->coordinator().stats().unsafe_orders == 0);
  CHECK(r->coordinator().stats().replans >= 1);
}

namespace {

struct ReplanTrace {
  std::int64_t ticks_to_replan = -1;
  double detour_length = 0.0;
  double reopened_length = 0.0;
  bool detour_clear = false;
  double detour_gap = 0.0;
  std::vector<std::string> events;
};

ReplanTrace replan_trace(int period) {
  ReplanTrace out;
  auto r = make_runner(scenario_doc(), period);
  r->submit();
  Reporter probe(*r);
  for (int i = 0; i < 50; ++i) r->step();
  const auto* ugv = r->world().vehicle("ugv1");
  REQUIRE(r->coordinator().orders().at("ugv1").kind == "navigate");
  const auto route = ugv->remaining_route();
  const EnuPoint person = along(route, 12.0);
  probe.report(person, r->clock().now_ms());

  std::uint64_t cursor = r->coordinator().events().latest_seq();
  const auto start_tick = r->clock().tick;
  json replan;
  while (replan.is_null() && r->clock().tick - start_tick < 10 * period) {
    r->step();
    for (const auto& e : new_events(r->coordinator().events(), cursor)) {
      if (e.kind == "replan" && e.payload["path"]["vehicle_id"] == "ugv1") replan = e.payload["path"];
    }
  }
  REQUIRE_FALSE(replan.is_null());
  out.ticks_to_replan = r->clock().tick - start_tick;
  const auto detour = path_points(replan);
  const auto live = r->coordinator().live_obstacles();
  out.detour_clear = !sitemap::blocks_path(std::span<const EnuPoint>(detour), live, 2.0);
  out.detour_gap = distance_to_route(person, detour);
  out.detour_length = path_length(detour);

  // No further reports: the obstacle ages out and the corridor reopens.
  bool expired = false;
  for (int i = 0; i < 200 && !expired; ++i) {
    r->step();
    for (const auto& e : new_events(r->coordinator().events(), cursor)) expired = expired || e.kind == "obstacle_expired";
  }
  REQUIRE(expired);
  out.reopened_length = r->coordinator().plan_query(detour.front(), detour.back()).length;
  for (const auto& e : r->coordinator().events().read(1, 1'000'000).events) out.events.push_back(to_json(e).dump());
  return out;
}

}  // namespace

TEST_CASE("report on the active route triggers a clear replan; expiry reopens the corridor") {
  for (int period : {5, 3}) {
    const auto t = replan_trace(period);
    CHECK(t.ticks_to_replan <= 2 * period);
    CHECK(t.detour_clear);
    CHECK(t.detour_gap >= 1.0 + 2.0 - 1e-9);  // person radius + clearance floor
    CHECK(t.reopened_length < t.detour_length - 1e-6);
  }
  CHECK(replan_trace(5).events == replan_trace(5).events);
}

TEST_CASE("report away from every route causes no replan") {
  auto r = make_runner(scenario_doc());
  r->submit();
  Reporter probe(*r);
  for (int i = 0; i < 50; ++i) r->step();
  std::vector<std::vector<EnuPoint>> routes;
  for (const auto& v : r->world().vehicles()) {
    if (v.spec().kind != sim::VehicleKind::uav) routes.push_back(v.remaining_route());
  }
  std::optional<EnuPoint> spot;
  for (double e = -45; e <= 45 && !spot; e += 1.0) {
    for (double n = -20; n <= 20 && !spot; n += 1.0) {
      const EnuPoint p{e, n, 0};
      bool far = true;
      for (const auto& rt : routes) far = far && distance_to_route(p, rt) > 8.0;
      if (far && !r->scenario().map.inside_static_obstacle(p)) spot = p;
    }
  }
  REQUIRE(spot);
  probe.report(*spot, r->clock().now_ms());
  std::uint64_t cursor = r->coordinator().events().latest_seq();
  bool added = false, replanned = false;
  for (int i = 0; i < 20; ++i) {
    r->step();
    for (const auto& e : new_events(r->coordinator().events(), cursor)) {
      added = added || e.kind == "obstacle_added";
      replanned = replanned || e.kind == "replan";
    }
  }
  CHECK(added);
  CHECK_FALSE(replanned);
}

TEST_CASE("reports below the confidence floor are ignored") {
  auto r = make_runner(scenario_doc());
  r->submit();
  Reporter probe(*r);
  probe.report({0, 0, 0}, r->clock().now_ms(), 0.3);
  for (int i = 0; i < 3; ++i) r->step();
  CHECK(r->coordinator().live_obstacles().empty());
  CHECK(r->coordinator().stats().reports_below_floor == 1);
}

TEST_CASE("unreachable goal halts the vehicle and fails the task after the timeout") {
  auto r = make_runner(scenario_doc());
  // Permanent supervisor obstacle on the dump zone.
  auto f = r->coordinator().inject_obstacle(json{{"east", 38}, {"north", 5}, {"radius", 2.5}});
  r->step();
  CHECK(f.get().status == 201);
  r->submit();
  std::optional<double> halted_at, failed_at;
  std::uint64_t cursor = 0;
  while (!r->finished() && r->sim_time_s() < 400) {
    r->step();
    for (const auto& e : new_events(r->coordinator().events(), cursor)) {
      if (!halted_at && (e.kind == "plan_issued" || e.kind == "replan") && e.payload["path"]["kind"] == "halt" &&
          e.payload["path"]["vehicle_id"] == "ugv1") {
        halted_at = e.timestamp / 1000.0;
      }
      if (!failed_at && e.kind == "task_transition" && e.payload["task"]["id"] == "op-1-haul" && e.payload["to"] == "failed") {
        failed_at = e.timestamp / 1000.0;
        CHECK(e.payload["task"]["failure"] == "goal unreachable");
      }
    }
  }
  REQUIRE(halted_at);
  REQUIRE(failed_at);
  CHECK(*failed_at - *halted_at >= 60.0);
  CHECK(*failed_at - *halted_at <= 60.0 + 0.1 * 5 + 1e-9);
  CHECK(r->outcome() == "failed");
}

TEST_CASE("pause holds a vehicle in place and resume finishes the job") {
  auto r = make_runner(scenario_doc());
  r->submit();
  for (int i = 0; i < 40; ++i) r->step();
  auto p = r->coordinator().pause_vehicle("ugv1");
  auto unknown = r->coordinator().pause_vehicle("nobody");
  r->step();
  CHECK(p.get().status == 200);
  CHECK(unknown.get().status == 404);
  for (int i = 0; i < 5; ++i) r->step();
  const EnuPoint held = r->world().vehicle("ugv1")->position();
  for (int i = 0; i < 100; ++i) r->step();
  CHECK(geo::planar_distance(held, r->world().vehicle("ugv1")->position()) < 0.6);
  CHECK(r->coordinator().snapshot()["vehicles"]["ugv1"]["paused"] == true);
  auto q = r->coordinator().resume_vehicle("ugv1");
  r->step();
  CHECK(q.get().status == 200);
  while (!r->finished()) r->step();
  CHECK(r->outcome() == "done");
}

TEST_CASE("cancelling an operation fails its tasks and stops the vehicles") {
  auto r = make_runner(scenario_doc());
  r->submit();
  for (int i = 0; i < 30; ++i) r->step();
  auto c = r->coordinator().cancel_operation("op-1");
  auto missing = r->coordinator().cancel_operation("op-9");
  r->step();
  CHECK(c.get().status == 200);
  CHECK(missing.get().status == 404);
  auto again = r->coordinator().cancel_operation("op-1");
  r->step();
  CHECK(again.get().status == 409);
  CHECK(r->outcome() == "cancelled");
  for (const auto& [id, t] : r->coordinator().tasks().tasks()) {
    CHECK(t.status == tasking::TaskStatus::failed);
    CHECK(t.failure == "cancelled");
  }
  CHECK(r->coordinator().orders().at("ugv1").kind == "halt");
  for (int i = 0; i < 20; ++i) r->step();
  const EnuPoint held = r->world().vehicle("ugv1")->position();
  for (int i = 0; i < 50; ++i) r->step();
  CHECK(geo::planar_distance(held, r->world().vehicle("ugv1")->position()) < 1e-9);
}

TEST_CASE("event log retention, gap marker and resumption") {
  EventLog log(5);
  CHECK(log.read(0).events.empty());
  CHECK(log.latest_seq() == 0);
  for (int i = 0; i < 12; ++i) log.append("vehicle_state", {{"i", i}}, i, 0);
  auto b = log.read(1);
  REQUIRE(b.events.size() == 6);
  CHECK(b.events[0].kind == "gap");
  CHECK(b.events[0].payload["oldest_retained"] == 8);
  CHECK(b.events[1].seq == 8);
  CHECK(b.events.back().seq == 12);
  b = log.read(10);
  REQUIRE(b.events.size() == 3);
  CHECK(b.events[0].seq == 10);
  CHECK(log.read(13).events.empty());
  CHECK(event_from_json(to_json(b.events[1])).seq == 11);
  CHECK_THROWS_AS(EventLog(0), ValidationError);
}

TEST_CASE("subscribers that drop and reconnect miss nothing; concurrent readers agree") {
  EventLog log(10'000);
  const int total = 5000;
  const auto subscriber = [&](std::uint64_t seed, std::vector<std::uint64_t>& seen) {
    std::mt19937_64 rng(seed);
    std::uint64_t last = 0;
    while (seen.size() < static_cast<std::size_t>(total)) {
      // One connection: read a few batches, then drop.
      const int batches = static_cast<int>(rng() % 4) + 1;
      for (int k = 0; k < batches && seen.size() < static_cast<std::size_t>(total); ++k) {
        const auto b = log.wait(last + 1, std::chrono::milliseconds(200), 1 + rng() % 50);
        for (const auto& e : b.events) {
          REQUIRE(e.kind != "gap");
          seen.push_back(e.seq);
          last = e.seq;
        }
      }
    }
  };
  std::vector<std::uint64_t> a, b;
  std::thread ta(subscriber, 1, std::ref(a)), tb(subscriber, 2, std::ref(b));
  for (int i = 0; i < total; ++i) {
    log.append("obstacle_added", {{"i", i}}, i, 0);
    if (i % 100 == 0) std::this_thread::sleep_for(std::chrono::microseconds(300));
  }
  ta.join();
  tb.join();
  CHECK(a == b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == i + 1);
}

TEST_CASE("HTTP API") {
  auto r = make_runner(scenario_doc());
  std::atomic<bool> stop{false};
  std::thread loop([&] {
    while (!stop) {
      r->step();
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  });
  ApiServer api(r->coordinator(), "127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", api.port());
  cli.set_read_timeout(10, 0);

  auto res = cli.Get("/api/health");
  REQUIRE(res);
  CHECK(res->status == 200);

  res = cli.Post("/api/operations", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = cli.Post("/api/operations", R"({"kind":"load_dump","load_zone":"pit","dump_zone":"dump"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["field"] == "load_zone");
  res = cli.Post("/api/operations", R"({"kind":"load_dump","load_zone":"load","dump_zone":"dump","cycles":1})",
                 "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const std::string op = json::parse(res->body)["operation_id"];

  res = cli.Get("/api/snapshot");
  REQUIRE(res);
  const auto snap = json::parse(res->body);
  CHECK(snap["schema"] == "snapshot/1");
  CHECK(snap.contains("vehicles"));

  res = cli.Get("/api/events?from_seq=abc");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = cli.Get("/api/events?from_seq=0&max=100000");
  REQUIRE(res);
  auto ev = json::parse(res->body);
  REQUIRE_FALSE(ev["events"].empty());
  for (std::size_t i = 0; i < ev["events"].size(); ++i) CHECK(ev["events"][i]["seq"] == i + 1);
  const auto latest = ev["latest_seq"].get<std::uint64_t>();
  res = cli.Get("/api/events?from_seq=" + std::to_string(latest) + "&wait_ms=3000");
  REQUIRE(res);
  ev = json::parse(res->body);
  REQUIRE_FALSE(ev["events"].empty());
  CHECK(ev["events"][0]["seq"] == latest + 1);

  res = cli.Post("/api/obstacles", R"({"east":70,"north":0})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  res = cli.Post("/api/obstacles", R"({"east":0,"north":22,"radius":1.5,"ttl_s":30})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const auto oid = json::parse(res->body)["id"].get<std::uint64_t>();
  res = cli.Delete("/api/obstacles/" + std::to_string(oid));
  REQUIRE(res);
  CHECK(res->status == 200);
  res = cli.Delete("/api/obstacles/" + std::to_string(oid));
  REQUIRE(res);
  CHECK(res->status == 404);

  res = cli.Post("/api/vehicles/nobody/pause");
  REQUIRE(res);
  CHECK(res->status == 404);
  res = cli.Post("/api/vehicles/ugv1/pause");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = cli.Post("/api/vehicles/ugv1/resume");
  REQUIRE(res);
  CHECK(res->status == 200);

  // Two streaming subscribers see the same gapless sequence.
  const auto stream = [&](std::vector<std::uint64_t>& seqs) {
    httplib::Client sc("127.0.0.1", api.port());
    sc.set_read_timeout(10, 0);
    std::string buffer;
    sc.Get("/api/events/stream?from_seq=0", [&](const char* data, std::size_t n) {
      buffer.append(data, n);
      std::size_t nl;
      while ((nl = buffer.find('\n')) != std::string::npos) {
        const std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        if (!line.empty()) seqs.push_back(json::parse(line)["seq"].get<std::uint64_t>());
      }
      return seqs.size() < 300;
    });
  };
  std::vector<std::uint64_t> s1, s2;
  std::thread t1(stream, std::ref(s1)), t2(stream, std::ref(s2));
  t1.join();
  t2.join();
  REQUIRE(s1.size() >= 300);
  REQUIRE(s2.size() >= 300);
  s1.resize(300);
  s2.resize(300);
  CHECK(s1 == s2);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == i + 1);

  res = cli.Delete("/api/operations/" + op);
  REQUIRE(res);
  CHECK(res->status == 200);
  res = cli.Delete("/api/operations/op-42");
  REQUIRE(res);
  CHECK(res->status == 404);

  stop = true;
  loop.join();
  // Commands with no loop to run them time out instead of hanging.
  res = cli.Post("/api/vehicles/ugv1/pause");
  REQUIRE(res);
  CHECK(res->status == 503);
  api.stop();
}
