#pragma once

// Ordered event log behind the console stream: bounded retention, sequence numbers from 1.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace siteops::coord {

struct EventRecord {
  std::uint64_t seq = 0;  // 0 only on gap markers
  std::string kind;
  std::int64_t timestamp = 0;  // simulation ms
  std::uint64_t graph_generation = 0;
  nlohmann::json payload;
};

nlohmann::json to_json(const EventRecord& e);
EventRecord event_from_json(const nlohmann::json& j);

struct EventBatch {
  /// Starts with a `gap` marker when events before the oldest retained one were requested.
  std::vector<EventRecord> events;
  std::uint64_t latest_seq = 0;
};

/// Multi-reader, single-writer. Readers may block until new events arrive.
class EventLog {
 public:
  explicit EventLog(std::size_t retention = 10'000);

  std::uint64_t append(std::string kind, nlohmann::json payload, std::int64_t timestamp,
                       std::uint64_t graph_generation);

  /// Events with seq >= from_seq, at most `max` of them.
  EventBatch read(std::uint64_t from_seq, std::size_t max = 1000) const;
  /// As read(), but waits up to `timeout` for an event with seq >= from_seq.
  EventBatch wait(std::uint64_t from_seq, std::chrono::milliseconds timeout, std::size_t max = 1000) const;

  std::uint64_t latest_seq() const;
  std::uint64_t oldest_seq() const;
  std::size_t retention() const { return retention_; }
  /// Wakes all waiting readers (used on shutdown).
  void close();
  bool closed() const;

 private:
  EventBatch read_locked(std::uint64_t from_seq, std::size_t max) const;

  std::size_t retention_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::deque<EventRecord> ring_;
  std::uint64_t next_seq_ = 1;
  bool closed_ = false;
};

}  // namespace siteops::coord
