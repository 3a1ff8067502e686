#pragma once

// In-process topic broker with QoS 0/1 delivery, acknowledgement timeouts,
// duplicate-flagged redelivery and a seeded frame-drop injector.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "siteops/bus/messages.hpp"
#include "siteops/random.hpp"

namespace siteops::bus {

struct BrokerConfig {
  std::int64_t ack_timeout_ms = 1000;
  int max_retries = 5;
};

/// A frame the fault injector may drop.
struct FaultFrame {
  enum class Kind { deliver, ack } kind = Kind::deliver;
  std::string subscriber;
  std::string publisher;
  std::uint64_t message_id = 0;
  int attempt = 0;  // 1 for the first delivery; 0 for acks
};

/// Drops broker-to-subscriber deliveries and subscriber-to-broker acks with the given
/// probability, or as decided by `script` when one is set.
struct FaultConfig {
  double drop_probability = 0.0;
  std::uint64_t seed = 1;
  std::function<bool(const FaultFrame&)> script;
};

struct BrokerStats {
  std::uint64_t published = 0;
  std::uint64_t delivered = 0;    // delivery frames handed to subscribers, duplicates included
  std::uint64_t redelivered = 0;
  std::uint64_t dropped = 0;      // frames removed by the fault injector
  std::uint64_t acked = 0;
  std::uint64_t expired = 0;        // QoS 1 messages given up after the retry budget
  std::uint64_t undeliverable = 0;  // expired without a single delivery reaching the subscriber
};

class Broker {
 public:
  using Deliver = std::function<void(const Envelope&)>;

  explicit Broker(BrokerConfig cfg = {}, FaultConfig faults = {});

  /// Replaces any previous session with the same id; its queued traffic is discarded.
  void connect(const std::string& client_id, Deliver deliver);
  void disconnect(const std::string& client_id);
  bool connected(const std::string& client_id) const;

  /// Throws ProtocolError for an invalid filter or unknown client.
  void subscribe(const std::string& client_id, const std::string& filter);

  /// Routes to every matching subscription. Throws ProtocolError for a malformed topic or qos.
  void publish(const Envelope& env, std::int64_t now_ms);

  void ack(const std::string& client_id, const std::string& publisher, std::uint64_t message_id);

  /// Redelivers timed-out QoS 1 messages and advances queues.
  void tick(std::int64_t now_ms);

  /// Messages waiting or in flight for all subscribers.
  std::size_t pending() const;
  BrokerStats stats() const;

 private:
  struct Pending {
    Envelope env;
    bool in_flight = false;
    bool reached = false;
    int attempts = 0;
    std::int64_t deadline = 0;
  };
  // subscriber, publisher, topic
  using QueueKey = std::tuple<std::string, std::string, std::string>;
  struct Outgoing {
    Deliver deliver;
    Envelope env;
  };

  void collect(std::int64_t now, std::vector<Outgoing>& out);
  bool drop(const FaultFrame& frame);
  void pump(std::int64_t now);

  BrokerConfig cfg_;
  FaultConfig faults_;
  Rng rng_;
  mutable std::mutex mu_;
  std::recursive_mutex dispatch_mu_;
  std::map<std::string, Deliver> sessions_;
  std::map<std::string, std::vector<std::string>> subscriptions_;
  std::map<QueueKey, std::deque<Pending>> queues_;
  std::int64_t last_now_ = 0;
  BrokerStats stats_;
};

}  // namespace siteops::bus
