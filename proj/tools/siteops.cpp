// Command-line entry points: scenario runs, the camera-scale degree study and the
// split-process broker / coordinator / sim roles.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "siteops/api.hpp"
#include "siteops/bus/broker.hpp"
#include "siteops/bus/endpoint.hpp"
#include "siteops/coordinator.hpp"
#include "siteops/error.hpp"
#include "siteops/runner.hpp"
#include "siteops/scale_model.hpp"
#include "siteops/scenario.hpp"
#include "siteops/sitemap.hpp"

using namespace siteops;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::int64_t wall_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ValidationError("expected host:port", "bus");
  const std::string port = s.substr(colon + 1);
  if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5 ||
      std::stoi(port) > 65535) {
    throw ValidationError("bad port '" + port + "'", "bus");
  }
  return {s.substr(0, colon), static_cast<std::uint16_t>(std::stoi(port))};
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  double time_scale = 0.0;
  std::optional<double> max_sim_time;
  std::string metrics_out;
  bool headless = false;
  int api_port = 0;
  int replan_period = 5;
};

int run_scenario(const RunArgs& a) {
  auto scenario = sim::load_scenario(a.scenario);
  if (a.seed) scenario.seed = *a.seed;
  sim::RunOptions opt;
  opt.time_scale = a.time_scale;
  opt.max_sim_time_s = a.max_sim_time;
  opt.coordinator.replan_check_period = a.replan_period;
  opt.coordinator.validate();
  sim::ScenarioRunner runner(std::move(scenario), opt);

  std::unique_ptr<coord::ApiServer> api;
  if (!a.headless && a.api_port > 0) api = std::make_unique<coord::ApiServer>(runner.coordinator(), "127.0.0.1", a.api_port);

  runner.submit();
  while (!runner.finished() && !g_stop) runner.step();
  if (api) api->stop();
  const json m = runner.metrics();
  write_output(a.metrics_out, m.dump(2) + "\n");

  if (m["planning"]["unsafe_orders"].get<std::uint64_t>() > 0) {
    spdlog::error("invariant breach: an order crossed a live obstacle");
    return kExitFailure;
  }
  const std::string outcome = m["outcome"];
  if (runner.operation_id() && outcome != "done") {
    spdlog::error("operation ended: {}", outcome);
    return kExitFailure;
  }
  return kExitOk;
}

struct StudyArgs {
  std::string samples;
  std::string heldout;
  bool synthetic = false;
  std::uint64_t seed = 1;
  std::vector<int> degrees{1, 2, 3, 4};
  std::string out;
};

int degree_study(const StudyArgs& a) {
  std::vector<scale::ScaleSample> samples;
  std::vector<scale::HeldOutPair> heldout;
  scale::FitConfig cfg;
  if (a.synthetic) {
    const scale::PinholeConfig pc;
    auto data = scale::generate_pinhole(pc, a.seed);
    samples = std::move(data.samples);
    heldout = std::move(data.heldout);
    cfg = scale::synthetic_study_config(pc, a.seed);
  } else {
    if (a.samples.empty() || a.heldout.empty()) {
      throw ValidationError("give --samples and --heldout, or --synthetic", "inputs");
    }
    std::ifstream s(a.samples), h(a.heldout);
    if (!s) throw ValidationError("cannot open " + a.samples, "samples");
    if (!h) throw ValidationError("cannot open " + a.heldout, "heldout");
    samples = scale::read_samples_csv(s);
    heldout = scale::read_heldout_csv(h);
    cfg.rng_seed = a.seed;
  }
  const auto table = scale::degree_study(samples, heldout, a.degrees, cfg);
  std::ostringstream out;
  table.write_csv(out);
  write_output(a.out, out.str());
  return kExitOk;
}

struct ServeArgs {
  std::string role;
  std::string bus = "127.0.0.1:18830";
  std::string bind = "127.0.0.1";
  std::string map;
  std::string scenario;
  std::string operation;
  int api_port = 8080;
  double duration_s = 0.0;
  int replan_period = 5;
};

bool keep_going(const ServeArgs& a, std::chrono::steady_clock::time_point start) {
  if (g_stop) return false;
  return a.duration_s <= 0 ||
         std::chrono::steady_clock::now() - start < std::chrono::duration<double>(a.duration_s);
}

int serve(const ServeArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const auto [host, port] = parse_address(a.bus);
  if (a.role == "broker") {
    bus::Broker broker;
    bus::TcpBrokerServer server(broker, port, a.bind);
    spdlog::info("broker listening on {}:{}", a.bind, server.port());
    while (keep_going(a, start)) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    return kExitOk;
  }
  if (a.role == "coordinator") {
    if (a.map.empty()) throw ValidationError("required for the coordinator role", "map");
    auto map = sitemap::load_map(a.map);
    coord::CoordinatorConfig cfg;
    cfg.replan_check_period = a.replan_period;
    bus::TcpEndpoint endpoint(host, port, "coordinator");
    coord::Coordinator coordinator(std::move(map), cfg, endpoint);
    coord::ApiServer api(coordinator, a.bind, a.api_port);
    if (!a.operation.empty()) {
      std::ifstream in(a.operation);
      if (!in) throw ValidationError("cannot open " + a.operation, "operation");
      coordinator.submit_operation(json::parse(in));
    }
    auto next = std::chrono::steady_clock::now();
    while (keep_going(a, start)) {
      coordinator.step(wall_ms());
      next += std::chrono::milliseconds(100);
      std::this_thread::sleep_until(next);
    }
    coordinator.events().close();
    return kExitOk;
  }
  if (a.role == "sim") {
    if (a.scenario.empty()) throw ValidationError("required for the sim role", "scenario");
    const auto scenario = sim::load_scenario(a.scenario);
    const auto camera = scale::calibrated_pinhole_model();
    const std::string h = host;
    const std::uint16_t p = port;
    sim::SimWorld world(scenario, camera,
                        [&](const std::string& id) { return std::make_unique<bus::TcpEndpoint>(h, p, id); });
    sim::SimClock clock;
    clock.epoch_ms = wall_ms();
    const auto t0 = std::chrono::steady_clock::now();
    while (keep_going(a, start)) {
      world.step(clock);
      ++clock.tick;
      std::this_thread::sleep_until(t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                             std::chrono::duration<double>(clock.tick * clock.dt)));
    }
    return kExitOk;
  }
  throw ValidationError("expected broker, coordinator or sim", "role");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Site operations: heterogeneous fleet coordination"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario end to end and print its metrics report");
  run_cmd->add_option("scenario", run.scenario, "Scenario file")->required();
  run_cmd->add_option("--seed", run.seed, "Override the scenario seed");
  run_cmd->add_option("--time-scale", run.time_scale, "Simulated seconds per wall second (0: unpaced)")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--max-sim-time", run.max_sim_time, "Simulated time limit in seconds")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--metrics-out", run.metrics_out, "Write the metrics report here instead of stdout");
  run_cmd->add_flag("--headless", run.headless, "Never start the HTTP API");
  run_cmd->add_option("--api-port", run.api_port, "Serve the HTTP API on this port while running")
      ->check(CLI::Range(0, 65535));
  run_cmd->add_option("--replan-period", run.replan_period, "Route check period in ticks")->check(CLI::PositiveNumber);

  StudyArgs study;
  auto* study_cmd = app.add_subcommand("degree-study", "RMSE per polynomial degree and held-out altitude");
  study_cmd->add_option("--samples", study.samples, "CSV altitude_m,pixels_per_meter");
  study_cmd->add_option("--heldout", study.heldout, "CSV pixel_span_px,true_meters,altitude_m");
  study_cmd->add_flag("--synthetic", study.synthetic, "Generate seeded pinhole data instead");
  study_cmd->add_option("--seed", study.seed, "RANSAC / generator seed");
  study_cmd->add_option("--degrees", study.degrees, "Degrees to fit")->delimiter(',');
  study_cmd->add_option("--out", study.out, "Report CSV path (default stdout)");

  ServeArgs srv;
  auto* serve_cmd = app.add_subcommand("serve", "Run one process of a split deployment");
  serve_cmd->add_option("--role", srv.role, "broker | coordinator | sim")
      ->required()
      ->check(CLI::IsMember({"broker", "coordinator", "sim"}));
  serve_cmd->add_option("--bus", srv.bus, "Broker address host:port");
  serve_cmd->add_option("--bind", srv.bind, "Listen address for the broker and the API");
  serve_cmd->add_option("--map", srv.map, "Site map (coordinator)");
  serve_cmd->add_option("--scenario", srv.scenario, "Scenario (sim)");
  serve_cmd->add_option("--operation", srv.operation, "Operation document submitted at start (coordinator)");
  serve_cmd->add_option("--api-port", srv.api_port, "HTTP API port (coordinator)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--duration", srv.duration_s, "Exit after this many seconds (0: until signalled)");
  serve_cmd->add_option("--replan-period", srv.replan_period, "Route check period in ticks")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  auto logger = spdlog::stderr_color_mt("siteops");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*run_cmd) return run_scenario(run);
    if (*study_cmd) return degree_study(study);
    if (*serve_cmd) return serve(srv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const bus::ProtocolError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
