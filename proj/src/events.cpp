#include "siteops/events.hpp"

#include "siteops/error.hpp"

namespace siteops::coord {

using nlohmann::json;

json to_json(const EventRecord& e) {
  return {{"seq", e.seq}, {"kind", e.kind}, {"timestamp", e.timestamp},
          {"graph_generation", e.graph_generation}, {"payload", e.payload}};
}

EventRecord event_from_json(const json& j) {
  if (!j.is_object() || !j.contains("seq") || !j.contains("kind")) throw ValidationError("malformed event", "event");
  EventRecord e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.kind = j.at("kind").get<std::string>();
  e.timestamp = j.value("timestamp", std::int64_t{0});
  e.graph_generation = j.value("graph_generation", std::uint64_t{0});
  e.payload = j.value("payload", json::object());
  return e;
}

EventLog::EventLog(std::size_t retention) : retention_(retention) {
  if (retention_ == 0) throw ValidationError("must be positive", "retention");
}

std::uint64_t EventLog::append(std::string kind, json payload, std::int64_t timestamp,
                               std::uint64_t graph_generation) {
  std::uint64_t seq;
  {
    std::lock_guard lock(mu_);
    seq = next_seq_++;
    ring_.push_back({seq, std::move(kind), timestamp, graph_generation, std::move(payload)});
    if (ring_.size() > retention_) ring_.pop_front();
  }
  cv_.notify_all();
  return seq;
}

EventBatch EventLog::read_locked(std::uint64_t from_seq, std::size_t max) const {
  EventBatch out;
  out.latest_seq = next_seq_ - 1;
  from_seq = std::max<std::uint64_t>(from_seq, 1);
  if (ring_.empty()) return out;
  const std::uint64_t oldest = ring_.front().seq;
  if (from_seq < oldest) {
    EventRecord gap;
    gap.kind = "gap";
    gap.payload = {{"requested_from", from_seq}, {"oldest_retained", oldest}, {"missed", oldest - from_seq}};
    out.events.push_back(std::move(gap));
    from_seq = oldest;
  }
  for (std::size_t i = from_seq - oldest; i < ring_.size() && out.events.size() < max; ++i) {
    out.events.push_back(ring_[i]);
  }
  return out;
}

EventBatch EventLog::read(std::uint64_t from_seq, std::size_t max) const {
  std::lock_guard lock(mu_);
  return read_locked(from_seq, max);
}

EventBatch EventLog::wait(std::uint64_t from_seq, std::chrono::milliseconds timeout, std::size_t max) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || next_seq_ > std::max<std::uint64_t>(from_seq, 1); });
  return read_locked(from_seq, max);
}

std::uint64_t EventLog::latest_seq() const {
  std::lock_guard lock(mu_);
  return next_seq_ - 1;
}

std::uint64_t EventLog::oldest_seq() const {
  std::lock_guard lock(mu_);
  return ring_.empty() ? next_seq_ : ring_.front().seq;
}

void EventLog::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventLog::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

}  // namespace siteops::coord
