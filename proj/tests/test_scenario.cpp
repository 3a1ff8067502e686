#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "siteops/error.hpp"
#include "siteops/random.hpp"
#include "siteops/runner.hpp"

using namespace siteops;
using namespace siteops::sim;
using nlohmann::json;

namespace {

json base_doc() {
  return {{"name", "t"},
          {"map", "openairlab.map"},
          {"seed", 11},
          {"vehicles", json::array({{{"id", "excavator1"}, {"kind", "excavator"}, {"start", "excavator_depot"}},
                                    {{"id", "ugv1"}, {"kind", "ugv"}, {"start", "hauler_depot"}},
                                    {{"id", "uav1"}, {"kind", "uav"}, {"start", "uav_home"}}})},
          {"operation", {{"kind", "load_dump"}, {"load_zone", "load"}, {"dump_zone", "dump"}, {"cycles", 1}}}};
}

std::string field_of(const json& doc) {
  try {
    scenario_from_json(doc, SITEOPS_DATA_DIR);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("scenario parsing") {
  const auto s = scenario_from_json(base_doc(), SITEOPS_DATA_DIR);
  CHECK(s.seed == 11);
  REQUIRE(s.vehicles.size() == 3);
  CHECK(s.vehicles[0].spec.id == "excavator1");
  CHECK(s.vehicles[1].spec.id == "uav1");
  CHECK(s.vehicles[2].spec.id == "ugv1");
  CHECK(s.max_sim_time_s == 900.0);
  CHECK(s.detector.name.rfind("YoloLC-192", 0) == 0);
  CHECK(s.vehicles[2].start.position.east == doctest::Approx(s.map.zones.at("hauler_depot").east));
}

TEST_CASE("scenario validation names the field") {
  auto d = base_doc();
  d.erase("map");
  CHECK(field_of(d) == "map");
  d = base_doc();
  d["seed"] = -1;
  CHECK(field_of(d) == "seed");
  d = base_doc();
  d["vehicles"] = json::array();
  CHECK(field_of(d) == "vehicles");
  d = base_doc();
  d["vehicles"][1]["kind"] = "bulldozer";
  CHECK(field_of(d) == "vehicles[1].kind");
  d = base_doc();
  d["vehicles"][1]["id"] = "excavator1";
  CHECK(field_of(d) == "vehicles[1].id");
  d = base_doc();
  d["vehicles"][0]["start"] = "nowhere";
  CHECK(field_of(d) == "vehicles[0].start");
  d = base_doc();
  d["vehicles"][0]["start"] = {500, 0};
  CHECK(field_of(d) == "vehicles[0].start");
  d = base_doc();
  d["detector"] = {{"fps", 0}};
  CHECK(field_of(d) == "detector.fps");
  d = base_doc();
  d["detector"] = {{"profile", "NoSuchNet"}};
  CHECK(field_of(d).rfind("detector.", 0) == 0);
  d = base_doc();
  d["actors"] = json::array({{{"name", "w"}}});
  CHECK(field_of(d) == "actors[0].pos");
  d = base_doc();
  d["actors"] = json::array({{{"pos", {0, 0}}, {"speed", -1}}});
  CHECK(field_of(d) == "actors[0].speed");
  d = base_doc();
  d["max_sim_time_s"] = 0;
  CHECK(field_of(d) == "max_sim_time_s");
  d = base_doc();
  d["bus"] = {{"drop_probability", 1.0}};
  CHECK(field_of(d) == "bus.drop_probability");
  CHECK_THROWS_AS(load_scenario("/nonexistent/x.scenario"), ValidationError);
}

TEST_CASE("scenario files may carry comments") {
  const auto dir = std::filesystem::temp_directory_path() / "siteops_scn_test";
  std::filesystem::create_directories(dir);
  std::filesystem::copy_file(std::string(SITEOPS_DATA_DIR) + "/openairlab.map", dir / "openairlab.map",
                             std::filesystem::copy_options::overwrite_existing);
  {
    std::ofstream f(dir / "c.scenario");
    f << "// leading comment\n" << base_doc().dump(2) << "\n";
  }
  CHECK(load_scenario(dir / "c.scenario").seed == 11);
  {
    std::ofstream f(dir / "bad.scenario");
    f << "{ \"map\": ";
  }
  CHECK_THROWS_AS(load_scenario(dir / "bad.scenario"), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("actors walk back and forth along their path") {
  ActorScript a;
  a.start = {0, 0, 0};
  a.path = {{10, 0, 0}, {10, 5, 0}};
  a.speed = 2.0;
  a.appear_at_s = 1.0;
  a.disappear_at_s = 100.0;
  CHECK_FALSE(a.position_at(0.5));
  CHECK_FALSE(a.position_at(100.0));
  // Independent oracle: total length 15, period 15 s at 2 m/s.
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double t = rng.uniform(1.0, 99.0);
    double u = std::fmod((t - 1.0) * 2.0, 30.0);
    if (u > 15.0) u = 30.0 - u;
    const double e = u <= 10.0 ? u : 10.0;
    const double n = u <= 10.0 ? 0.0 : u - 10.0;
    const auto p = a.position_at(t);
    REQUIRE(p);
    CHECK(p->east == doctest::Approx(e).epsilon(1e-9));
    CHECK(p->north == doctest::Approx(n).epsilon(1e-9));
  }
  ActorScript still;
  still.start = {3, 4, 0};
  CHECK(still.position_at(50)->east == 3.0);
}

TEST_CASE("bundled scenario completes deterministically") {
  const auto s = load_scenario(std::string(SITEOPS_DATA_DIR) + "/openairlab_load_dump.scenario");
  ScenarioRunner a(s), b(s);
  const auto ma = a.run();
  const auto mb = b.run();
  CHECK(ma.dump() == mb.dump());
  CHECK(ma["outcome"] == "done");
  CHECK(ma["schema_version"] == 1);
  const double ground = ma["ground_distance_m"];
  CHECK(ground >= 150.0);
  CHECK(ground <= 350.0);
  CHECK(ma["planning"]["replans"].get<int>() >= 1);
  CHECK(ma["planning"]["unsafe_orders"] == 0);
  for (const auto& act : ma["detection"]["actors"]) CHECK_FALSE(act["first_reported_s"].is_null());
  const auto& lat = ma["detection"]["report_latency_ms"];
  CHECK(lat["count"].get<int>() > 0);
  CHECK(lat["p50"].get<double>() <= lat["p95"].get<double>());
  CHECK(lat["p95"].get<double>() <= lat["max"].get<double>());

  // A different seed changes detector noise and so the report stream.
  auto s2 = s;
  s2.seed = 8;
  ScenarioRunner c(s2);
  CHECK(c.run()["detection"].dump() != ma["detection"].dump());
}

TEST_CASE("run stops at the simulated deadline") {
  auto d = base_doc();
  d["max_sim_time_s"] = 5;
  ScenarioRunner r(scenario_from_json(d, SITEOPS_DATA_DIR));
  const auto m = r.run();
  CHECK(m["outcome"] == "deadline");
  CHECK(m["sim_time_s"].get<double>() == doctest::Approx(5.0).epsilon(0.02));
}

TEST_CASE("bus drop probability exercises redelivery without breaking the run") {
  auto d = base_doc();
  d["bus"] = {{"drop_probability", 0.2}};
  ScenarioRunner r(scenario_from_json(d, SITEOPS_DATA_DIR));
  const auto m = r.run();
  CHECK(m["outcome"] == "done");
  CHECK(m["bus"]["dropped"].get<int>() > 0);
  CHECK(m["bus"]["redelivered"].get<int>() > 0);
}
