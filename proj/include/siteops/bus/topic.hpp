#pragma once

#include <string>
#include <string_view>

#include "siteops/error.hpp"

namespace siteops::bus {

/// Malformed topic, filter or frame.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

enum class TopicKind { order, state, connection, objects };

std::string_view to_string(TopicKind kind);

inline constexpr std::string_view kDefaultManufacturer = "sim";

/// Non-empty, no empty segments, no wildcards.
bool valid_topic(std::string_view topic);
/// Like a topic, but `+` may stand for a whole segment and `#` for the trailing remainder.
bool valid_filter(std::string_view filter);
bool topic_matches(std::string_view filter, std::string_view topic);

/// `fleet/v1/<manufacturer>/<vehicle_id>/<kind>`. Throws ValidationError for an empty or non-segment id.
std::string topic_for(std::string_view vehicle_id, TopicKind kind,
                      std::string_view manufacturer = kDefaultManufacturer);

}  // namespace siteops::bus
