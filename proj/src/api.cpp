#include "siteops/api.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "siteops/error.hpp"

namespace siteops::coord {

using nlohmann::json;
using namespace std::chrono_literals;

namespace {

constexpr auto kCommandTimeout = 5s;
constexpr std::int64_t kMaxWaitMs = 30'000;

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply(httplib::Response& res, std::future<CommandResult> f) {
  if (f.wait_for(kCommandTimeout) != std::future_status::ready) {
    reply(res, 503, {{"error", "coordinator loop is not running"}});
    return;
  }
  const auto r = f.get();
  reply(res, r.status, r.body);
}

std::optional<json> body_json(const httplib::Request& req, httplib::Response& res) {
  json doc = json::parse(req.body, nullptr, false);
  if (doc.is_discarded()) {
    reply(res, 400, {{"error", "request body is not valid JSON"}});
    return std::nullopt;
  }
  return doc;
}

/// Non-negative integer query parameter, or the fallback when absent.
std::optional<std::uint64_t> query_uint(const httplib::Request& req, const char* key, std::uint64_t fallback,
                                        httplib::Response& res) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos || v.size() > 18) {
    reply(res, 400, {{"error", std::string(key) + " must be a non-negative integer"}, {"field", key}});
    return std::nullopt;
  }
  return std::stoull(v);
}

json batch_json(const EventBatch& b) {
  json events = json::array();
  for (const auto& e : b.events) events.push_back(to_json(e));
  return {{"events", events}, {"latest_seq", b.latest_seq}};
}

}  // namespace

struct ApiServer::Impl {
  Coordinator& coord;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<bool> stopping{false};

  explicit Impl(Coordinator& c) : coord(c) {}
};

ApiServer::ApiServer(Coordinator& coordinator, const std::string& host, int port)
    : impl_(std::make_unique<Impl>(coordinator)) {
  auto& srv = impl_->server;
  Impl* self = impl_.get();

  srv.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

  srv.Get("/api/snapshot", [self](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, self->coord.snapshot());
  });

  // Events strictly after from_seq; waits up to wait_ms for the first one.
  srv.Get("/api/events", [self](const httplib::Request& req, httplib::Response& res) {
    const auto from = query_uint(req, "from_seq", 0, res);
    if (!from) return;
    const auto wait = query_uint(req, "wait_ms", 0, res);
    if (!wait) return;
    const auto max = query_uint(req, "max", 1000, res);
    if (!max) return;
    const auto ms = std::chrono::milliseconds(std::min<std::uint64_t>(*wait, kMaxWaitMs));
    const auto& log = self->coord.events();
    const auto b = ms.count() > 0 ? log.wait(*from + 1, ms, std::max<std::uint64_t>(*max, 1))
                                  : log.read(*from + 1, std::max<std::uint64_t>(*max, 1));
    reply(res, 200, batch_json(b));
  });

  // Newline-delimited JSON: replay after from_seq, then live tail. Empty lines are keep-alives.
  srv.Get("/api/events/stream", [self](const httplib::Request& req, httplib::Response& res) {
    const auto from = query_uint(req, "from_seq", 0, res);
    if (!from) return;
    auto next = std::make_shared<std::uint64_t>(*from + 1);
    res.set_chunked_content_provider("application/x-ndjson", [self, next](std::size_t, httplib::DataSink& sink) {
      const auto& log = self->coord.events();
      if (self->stopping || log.closed()) {
        sink.done();
        return false;
      }
      const auto b = log.wait(*next, 500ms, 500);
      std::string chunk;
      for (const auto& e : b.events) {
        chunk += to_json(e).dump();
        chunk += '\n';
        if (e.seq > 0) *next = e.seq + 1;
        else *next = e.payload.at("oldest_retained").get<std::uint64_t>();
      }
      if (chunk.empty()) chunk = "\n";
      return sink.write(chunk.data(), chunk.size());
    });
  });

  srv.Post("/api/operations", [self](const httplib::Request& req, httplib::Response& res) {
    if (auto doc = body_json(req, res)) reply(res, self->coord.submit_operation(std::move(*doc)));
  });
  srv.Delete(R"(/api/operations/([^/]+))", [self](const httplib::Request& req, httplib::Response& res) {
    reply(res, self->coord.cancel_operation(req.matches[1]));
  });
  srv.Post("/api/obstacles", [self](const httplib::Request& req, httplib::Response& res) {
    if (auto doc = body_json(req, res)) reply(res, self->coord.inject_obstacle(std::move(*doc)));
  });
  srv.Delete(R"(/api/obstacles/(\d{1,18}))", [self](const httplib::Request& req, httplib::Response& res) {
    reply(res, self->coord.clear_obstacle(std::stoull(req.matches[1])));
  });
  srv.Post(R"(/api/vehicles/([^/]+)/pause)", [self](const httplib::Request& req, httplib::Response& res) {
    reply(res, self->coord.pause_vehicle(req.matches[1]));
  });
  srv.Post(R"(/api/vehicles/([^/]+)/resume)", [self](const httplib::Request& req, httplib::Response& res) {
    reply(res, self->coord.resume_vehicle(req.matches[1]));
  });

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) reply(res, res.status, {{"error", httplib::status_message(res.status)}});
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", e.what()}});
    }
  });

  if (port == 0) {
    impl_->port = srv.bind_to_any_port(host);
  } else {
    impl_->port = srv.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port <= 0) throw Error("cannot bind HTTP API to " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([self] { self->server.listen_after_bind(); });
  spdlog::info("API listening on http://{}:{}", host, impl_->port);
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::port() const { return impl_->port; }

void ApiServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace siteops::coord
