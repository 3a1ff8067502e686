#include "siteops/bus/topic.hpp"

#include <vector>

namespace siteops::bus {

namespace {

std::vector<std::string_view> split(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t slash = s.find('/', start);
    if (slash == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, slash - start));
    start = slash + 1;
  }
}

}  // namespace

std::string_view to_string(TopicKind kind) {
  switch (kind) {
    case TopicKind::order: return "order";
    case TopicKind::state: return "state";
    case TopicKind::connection: return "connection";
    case TopicKind::objects: return "objects";
  }
  return "unknown";
}

bool valid_topic(std::string_view topic) {
  if (topic.empty()) return false;
  for (const auto seg : split(topic)) {
    if (seg.empty() || seg.find_first_of("+#") != std::string_view::npos) return false;
  }
  return true;
}

bool valid_filter(std::string_view filter) {
  if (filter.empty()) return false;
  const auto segs = split(filter);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto seg = segs[i];
    if (seg.empty()) return false;
    if (seg == "#") {
      if (i + 1 != segs.size()) return false;
      continue;
    }
    if (seg == "+") continue;
    if (seg.find_first_of("+#") != std::string_view::npos) return false;
  }
  return true;
}

bool topic_matches(std::string_view filter, std::string_view topic) {
  if (!valid_filter(filter) || !valid_topic(topic)) return false;
  const auto f = split(filter);
  const auto t = split(topic);
  std::size_t i = 0;
  for (; i < f.size(); ++i) {
    if (f[i] == "#") return true;
    if (i >= t.size()) return false;
    if (f[i] != "+" && f[i] != t[i]) return false;
  }
  return i == t.size();
}

std::string topic_for(std::string_view vehicle_id, TopicKind kind, std::string_view manufacturer) {
  if (vehicle_id.empty()) throw ValidationError("vehicle id must not be empty", "vehicle_id");
  if (vehicle_id.find_first_of("/+#") != std::string_view::npos) {
    throw ValidationError("vehicle id '" + std::string(vehicle_id) + "' is not a single topic segment", "vehicle_id");
  }
  std::string topic = "fleet/v1/";
  topic += manufacturer;
  topic += '/';
  topic += vehicle_id;
  topic += '/';
  topic += to_string(kind);
  if (!valid_topic(topic)) {
    throw ValidationError("vehicle id '" + std::string(vehicle_id) + "' is not a single topic segment", "vehicle_id");
  }
  return topic;
}

}  // namespace siteops::bus
