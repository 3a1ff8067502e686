#include "siteops/bus/broker.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "siteops/bus/topic.hpp"

namespace siteops::bus {

namespace {
thread_local int pump_depth = 0;
}

Broker::Broker(BrokerConfig cfg, FaultConfig faults) : cfg_(cfg), faults_(faults), rng_(faults.seed) {}

void Broker::connect(const std::string& client_id, Deliver deliver) {
  if (client_id.empty()) throw ProtocolError("client id must not be empty");
  std::lock_guard lock(mu_);
  sessions_[client_id] = std::move(deliver);
  subscriptions_.erase(client_id);
  std::erase_if(queues_, [&](const auto& kv) { return std::get<0>(kv.first) == client_id; });
}

void Broker::disconnect(const std::string& client_id) {
  std::lock_guard lock(mu_);
  sessions_.erase(client_id);
  subscriptions_.erase(client_id);
  std::erase_if(queues_, [&](const auto& kv) { return std::get<0>(kv.first) == client_id; });
}

bool Broker::connected(const std::string& client_id) const {
  std::lock_guard lock(mu_);
  return sessions_.count(client_id) > 0;
}

void Broker::subscribe(const std::string& client_id, const std::string& filter) {
  if (!valid_filter(filter)) throw ProtocolError("invalid topic filter '" + filter + "'");
  std::lock_guard lock(mu_);
  if (!sessions_.count(client_id)) throw ProtocolError("unknown client '" + client_id + "'");
  auto& subs = subscriptions_[client_id];
  if (std::find(subs.begin(), subs.end(), filter) == subs.end()) subs.push_back(filter);
}

void Broker::publish(const Envelope& env, std::int64_t now_ms) {
  if (!valid_topic(env.topic)) throw ProtocolError("malformed topic '" + env.topic + "'");
  if (env.qos != 0 && env.qos != 1) throw ProtocolError("qos must be 0 or 1");
  {
    std::lock_guard lock(mu_);
    ++stats_.published;
    last_now_ = std::max(last_now_, now_ms);
    for (const auto& [client, filters] : subscriptions_) {
      const bool match = std::any_of(filters.begin(), filters.end(),
                                     [&](const std::string& f) { return topic_matches(f, env.topic); });
      if (!match) continue;
      Pending p;
      p.env = env;
      p.env.dup = false;
      queues_[{client, env.publisher, env.topic}].push_back(std::move(p));
    }
  }
  pump(now_ms);
}

void Broker::ack(const std::string& client_id, const std::string& publisher, std::uint64_t message_id) {
  std::lock_guard lock(mu_);
  if (drop({FaultFrame::Kind::ack, client_id, publisher, message_id, 0})) return;
  for (auto& [key, q] : queues_) {
    if (std::get<0>(key) != client_id || std::get<1>(key) != publisher || q.empty()) continue;
    const Pending& front = q.front();
    if (front.in_flight && front.env.qos == 1 && front.env.message_id == message_id) {
      ++stats_.acked;
      q.pop_front();
      return;
    }
  }
}

void Broker::tick(std::int64_t now_ms) { pump(now_ms); }

bool Broker::drop(const FaultFrame& frame) {
  bool dropped = false;
  if (faults_.script) {
    dropped = faults_.script(frame);
  } else if (faults_.drop_probability > 0.0) {
    dropped = rng_.bernoulli(faults_.drop_probability);
  }
  if (dropped) ++stats_.dropped;
  return dropped;
}

void Broker::collect(std::int64_t now, std::vector<Outgoing>& out) {
  for (auto it = queues_.begin(); it != queues_.end();) {
    auto& [key, q] = *it;
    const auto session = sessions_.find(std::get<0>(key));
    while (!q.empty() && session != sessions_.end()) {
      Pending& p = q.front();
      if (p.env.qos == 0) {
        if (!drop({FaultFrame::Kind::deliver, std::get<0>(key), p.env.publisher, p.env.message_id, 1})) {
          ++stats_.delivered;
          out.push_back({session->second, p.env});
        }
        q.pop_front();
        continue;
      }
      if (p.in_flight) {
        if (now < p.deadline) break;
        if (p.attempts > cfg_.max_retries) {
          ++stats_.expired;
          if (!p.reached) ++stats_.undeliverable;
          spdlog::warn("bus: giving up on {} #{} to {} after {} attempts", p.env.topic, p.env.message_id,
                       std::get<0>(key), p.attempts);
          q.pop_front();
          continue;
        }
        p.env.dup = true;
        ++stats_.redelivered;
      }
      p.in_flight = true;
      ++p.attempts;
      p.deadline = now + cfg_.ack_timeout_ms;
      if (!drop({FaultFrame::Kind::deliver, std::get<0>(key), p.env.publisher, p.env.message_id, p.attempts})) {
        p.reached = true;
        ++stats_.delivered;
        out.push_back({session->second, p.env});
      }
      break;
    }
    it = q.empty() ? queues_.erase(it) : std::next(it);
  }
}

void Broker::pump(std::int64_t now_ms) {
  std::lock_guard dispatch(dispatch_mu_);
  // Deliveries triggered from inside a callback are picked up by the outer loop.
  if (pump_depth > 0) return;
  ++pump_depth;
  try {
    for (;;) {
      std::vector<Outgoing> out;
      {
        std::lock_guard lock(mu_);
        last_now_ = std::max(last_now_, now_ms);
        collect(last_now_, out);
      }
      if (out.empty()) break;
      for (const auto& o : out) o.deliver(o.env);
    }
  } catch (...) {
    --pump_depth;
    throw;
  }
  --pump_depth;
}

std::size_t Broker::pending() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [key, q] : queues_) n += q.size();
  return n;
}

BrokerStats Broker::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace siteops::bus
