#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace siteops {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input failed validation. `field()` names the offending field when known.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message, std::string field = {})
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

}  // namespace siteops
