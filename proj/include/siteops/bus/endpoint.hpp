#pragma once

// Client handles onto the broker: in-process and over TCP.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "siteops/bus/broker.hpp"

namespace siteops::bus {

class Endpoint {
 public:
  explicit Endpoint(std::string client_id) : client_id_(std::move(client_id)) {}
  virtual ~Endpoint() = default;
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  const std::string& client_id() const { return client_id_; }

  virtual void subscribe(const std::string& filter) = 0;
  /// Returns the assigned message id (per-handle counter starting at 1).
  std::uint64_t publish(const std::string& topic, nlohmann::json payload, int qos, std::int64_t now_ms);

  /// Received envelopes in arrival order. Redeliveries of messages already seen are filtered out.
  std::vector<Envelope> drain();

  std::uint64_t duplicates_filtered() const;

 protected:
  virtual void send(const Envelope& env) = 0;
  void accept(const Envelope& env);

 private:
  std::string client_id_;
  std::mutex publish_mu_;
  std::uint64_t next_id_ = 1;
  mutable std::mutex inbox_mu_;
  std::deque<Envelope> inbox_;
  std::map<std::pair<std::string, std::string>, std::uint64_t> last_seen_;
  std::uint64_t duplicates_ = 0;
};

class LocalEndpoint final : public Endpoint {
 public:
  LocalEndpoint(Broker& broker, std::string client_id);
  ~LocalEndpoint() override;

  void subscribe(const std::string& filter) override;

 protected:
  void send(const Envelope& env) override;

 private:
  Broker& broker_;
};

/// Length-prefixed frames: 4-byte big-endian size, then a UTF-8 JSON document.
void write_frame(int fd, const nlohmann::json& frame);
/// Nullopt on orderly close. Throws ProtocolError on a malformed frame.
std::optional<nlohmann::json> read_frame(int fd);

inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

/// Serves the broker over TCP. Port 0 picks a free port.
class TcpBrokerServer {
 public:
  TcpBrokerServer(Broker& broker, std::uint16_t port, const std::string& bind_address = "127.0.0.1",
                  std::int64_t tick_ms = 20);
  ~TcpBrokerServer();
  TcpBrokerServer(const TcpBrokerServer&) = delete;
  TcpBrokerServer& operator=(const TcpBrokerServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  struct Session;
  void accept_loop();
  void serve(std::shared_ptr<Session> s);

  Broker& broker_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::int64_t tick_ms_;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  std::thread ticker_;
  std::mutex sessions_mu_;
  std::vector<std::shared_ptr<Session>> sessions_;
  std::vector<std::thread> workers_;
};

class TcpEndpoint final : public Endpoint {
 public:
  /// Connects and completes the handshake. Throws Error when the broker is unreachable.
  TcpEndpoint(const std::string& host, std::uint16_t port, std::string client_id);
  ~TcpEndpoint() override;

  void subscribe(const std::string& filter) override;
  bool connected() const { return connected_; }

 protected:
  void send(const Envelope& env) override;

 private:
  void read_loop();
  nlohmann::json await_reply(const std::string& type);
  void write(const nlohmann::json& frame);

  int fd_ = -1;
  std::atomic<bool> connected_{false};
  std::mutex write_mu_;
  std::mutex reply_mu_;
  std::condition_variable reply_cv_;
  std::deque<nlohmann::json> replies_;
  std::thread reader_;
};

}  // namespace siteops::bus
