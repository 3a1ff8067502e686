#include "siteops/bus/endpoint.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include <spdlog/spdlog.h>

#include "siteops/bus/topic.hpp"

namespace siteops::bus {

using nlohmann::json;

std::uint64_t Endpoint::publish(const std::string& topic, json payload, int qos, std::int64_t now_ms) {
  if (!valid_topic(topic)) throw ProtocolError("malformed topic '" + topic + "'");
  if (qos != 0 && qos != 1) throw ProtocolError("qos must be 0 or 1");
  std::lock_guard lock(publish_mu_);
  Envelope env;
  env.topic = topic;
  env.publisher = client_id_;
  env.message_id = next_id_++;
  env.qos = qos;
  env.timestamp = now_ms;
  env.payload = std::move(payload);
  send(env);
  return env.message_id;
}

void Endpoint::accept(const Envelope& env) {
  std::lock_guard lock(inbox_mu_);
  auto& last = last_seen_[{env.publisher, env.topic}];
  if (env.message_id <= last) {
    ++duplicates_;
    return;
  }
  last = env.message_id;
  inbox_.push_back(env);
}

std::vector<Envelope> Endpoint::drain() {
  std::lock_guard lock(inbox_mu_);
  std::vector<Envelope> out(std::make_move_iterator(inbox_.begin()), std::make_move_iterator(inbox_.end()));
  inbox_.clear();
  return out;
}

std::uint64_t Endpoint::duplicates_filtered() const {
  std::lock_guard lock(inbox_mu_);
  return duplicates_;
}

LocalEndpoint::LocalEndpoint(Broker& broker, std::string client_id)
    : Endpoint(std::move(client_id)), broker_(broker) {
  broker_.connect(this->client_id(), [this](const Envelope& env) {
    accept(env);
    if (env.qos == 1) broker_.ack(this->client_id(), env.publisher, env.message_id);
  });
}

LocalEndpoint::~LocalEndpoint() { broker_.disconnect(client_id()); }

void LocalEndpoint::subscribe(const std::string& filter) { broker_.subscribe(client_id(), filter); }

void LocalEndpoint::send(const Envelope& env) { broker_.publish(env, env.timestamp); }

// ---- framing ----

namespace {

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("socket write failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

// False on orderly close before any byte was read.
bool read_all(int fd, char* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, data + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw ProtocolError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      if (got == 0 && (errno == ECONNRESET || errno == EBADF || errno == ENOTCONN)) return false;
      throw Error(std::string("socket read failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

std::int64_t steady_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void write_frame(int fd, const json& frame) {
  const std::string body = frame.dump();
  if (body.size() > kMaxFrameBytes) throw ProtocolError("frame too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  const char header[4] = {static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                          static_cast<char>(n)};
  std::string buf(header, 4);
  buf += body;
  write_all(fd, buf.data(), buf.size());
}

std::optional<json> read_frame(int fd) {
  unsigned char header[4];
  if (!read_all(fd, reinterpret_cast<char*>(header), 4)) return std::nullopt;
  const std::uint32_t n = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                          (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (n > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(n) + " exceeds limit");
  std::string body(n, '\0');
  if (n > 0 && !read_all(fd, body.data(), n)) throw ProtocolError("connection closed mid-frame");
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ProtocolError("frame is not a typed JSON object");
  }
  return j;
}

// ---- server ----

struct TcpBrokerServer::Session {
  int fd = -1;
  std::mutex write_mu;
  std::string client_id;

  void write(const json& frame) {
    std::lock_guard lock(write_mu);
    write_frame(fd, frame);
  }
};

TcpBrokerServer::TcpBrokerServer(Broker& broker, std::uint16_t port, const std::string& bind_address,
                                 std::int64_t tick_ms)
    : broker_(broker), tick_ms_(tick_ms) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error("cannot create listening socket");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw ValidationError("not an IPv4 address: " + bind_address, "bus_bind");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw Error("cannot listen on " + bind_address + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
  ticker_ = std::thread([this] {
    while (running_) {
      broker_.tick(steady_ms());
      std::this_thread::sleep_for(std::chrono::milliseconds(tick_ms_));
    }
  });
}

TcpBrokerServer::~TcpBrokerServer() { stop(); }

void TcpBrokerServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  if (ticker_.joinable()) ticker_.join();
  {
    std::lock_guard lock(sessions_mu_);
    for (auto& s : sessions_) ::shutdown(s->fd, SHUT_RDWR);
  }
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  for (auto& s : sessions_) ::close(s->fd);
  ::close(listen_fd_);
}

void TcpBrokerServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto s = std::make_shared<Session>();
    s->fd = fd;
    std::lock_guard lock(sessions_mu_);
    sessions_.push_back(s);
    workers_.emplace_back([this, s] { serve(s); });
  }
}

void TcpBrokerServer::serve(std::shared_ptr<Session> s) {
  try {
    while (running_) {
      auto frame = read_frame(s->fd);
      if (!frame) break;
      const std::string type = (*frame)["type"];
      try {
        if (type == "connect") {
          s->client_id = frame->value("client_id", "");
          std::weak_ptr<Session> weak = s;
          broker_.connect(s->client_id, [weak](const Envelope& env) {
            if (auto live = weak.lock()) {
              try {
                live->write({{"type", "deliver"}, {"envelope", to_json(env)}});
              } catch (const Error&) {
              }
            }
          });
          s->write({{"type", "connack"}, {"client_id", s->client_id}});
        } else if (s->client_id.empty()) {
          throw ProtocolError("first frame must be connect");
        } else if (type == "subscribe") {
          const std::string filter = frame->value("filter", "");
          broker_.subscribe(s->client_id, filter);
          s->write({{"type", "suback"}, {"filter", filter}});
        } else if (type == "publish") {
          if (!frame->contains("envelope")) throw ProtocolError("publish frame without envelope");
          Envelope env = envelope_from_json((*frame)["envelope"]);
          env.publisher = s->client_id;
          broker_.publish(env, steady_ms());
          if (env.qos == 1) s->write({{"type", "puback"}, {"message_id", env.message_id}});
        } else if (type == "ack") {
          broker_.ack(s->client_id, frame->value("publisher", ""), frame->value("message_id", std::uint64_t{0}));
        } else if (type == "disconnect") {
          break;
        } else {
          throw ProtocolError("unknown frame type '" + type + "'");
        }
      } catch (const ProtocolError& e) {
        s->write({{"type", "error"}, {"request", type}, {"message", e.what()}});
      }
    }
  } catch (const Error& e) {
    spdlog::debug("bus session {} closed: {}", s->client_id, e.what());
  }
  if (!s->client_id.empty()) broker_.disconnect(s->client_id);
}

// ---- client ----

TcpEndpoint::TcpEndpoint(const std::string& host, std::uint16_t port, std::string client_id)
    : Endpoint(std::move(client_id)) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error("cannot resolve bus host '" + host + "'");
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    if (fd_ >= 0) ::close(fd_);
    throw Error("cannot connect to bus at " + host + ":" + std::to_string(port));
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  connected_ = true;
  reader_ = std::thread([this] { read_loop(); });
  write({{"type", "connect"}, {"client_id", this->client_id()}});
  await_reply("connack");
}

TcpEndpoint::~TcpEndpoint() {
  if (connected_) {
    try {
      write({{"type", "disconnect"}});
    } catch (const Error&) {
    }
  }
  ::shutdown(fd_, SHUT_RDWR);
  if (reader_.joinable()) reader_.join();
  ::close(fd_);
}

void TcpEndpoint::write(const json& frame) {
  std::lock_guard lock(write_mu_);
  write_frame(fd_, frame);
}

void TcpEndpoint::read_loop() {
  try {
    while (auto frame = read_frame(fd_)) {
      const std::string type = (*frame)["type"];
      if (type == "deliver") {
        const Envelope env = envelope_from_json((*frame)["envelope"]);
        accept(env);
        if (env.qos == 1) {
          write({{"type", "ack"}, {"publisher", env.publisher}, {"message_id", env.message_id}});
        }
      } else if (type == "puback") {
        continue;
      } else if (type == "error" && frame->value("request", "") == "publish") {
        spdlog::warn("bus rejected publish from {}: {}", client_id(), frame->value("message", ""));
      } else {
        std::lock_guard lock(reply_mu_);
        replies_.push_back(std::move(*frame));
        reply_cv_.notify_all();
      }
    }
  } catch (const Error& e) {
    spdlog::debug("bus client {} reader stopped: {}", client_id(), e.what());
  }
  connected_ = false;
  reply_cv_.notify_all();
}

json TcpEndpoint::await_reply(const std::string& type) {
  std::unique_lock lock(reply_mu_);
  const bool ok = reply_cv_.wait_for(lock, std::chrono::seconds(5), [&] { return !replies_.empty() || !connected_; });
  if (!ok || replies_.empty()) throw Error("no " + type + " from bus");
  json reply = std::move(replies_.front());
  replies_.pop_front();
  if (reply["type"] == "error") throw ProtocolError(reply.value("message", "protocol error"));
  if (reply["type"] != type) throw ProtocolError("expected " + type + ", got " + reply["type"].get<std::string>());
  return reply;
}

void TcpEndpoint::subscribe(const std::string& filter) {
  write({{"type", "subscribe"}, {"filter", filter}});
  await_reply("suback");
}

void TcpEndpoint::send(const Envelope& env) {
  if (!connected_) throw Error("bus session closed");
  write({{"type", "publish"}, {"envelope", to_json(env)}});
}

}  // namespace siteops::bus
