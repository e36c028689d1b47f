#pragma once

#include <stdexcept>
#include <string>

namespace convformer {

/// Bad input supplied by the caller: malformed files, configs, ids out of
/// range. Maps to CLI exit code 2.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration document failed schema validation. `field()` holds the
/// JSON path of the offending entry, e.g. "model.mixer.kind".
class ConfigError : public UserError {
 public:
  ConfigError(std::string field, const std::string& what)
      : UserError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Non-finite values or a numerical invariant failed. Maps to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace convformer
