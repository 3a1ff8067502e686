#pragma once

// HTTP front of the coordinator: JSON commands, snapshot, long-poll and streamed events.

#include <cstdint>
#include <memory>
#include <string>

#include "siteops/coordinator.hpp"

namespace siteops::coord {

class ApiServer {
 public:
  /// Binds immediately; port 0 picks a free port. Throws Error when the bind fails.
  ApiServer(Coordinator& coordinator, const std::string& host = "127.0.0.1", int port = 8080);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  int port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace siteops::coord
