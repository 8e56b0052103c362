#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfcalc {

/// Malformed arguments: dimension mismatches, empty samples, bad ranges.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A well-formed request outside what this library supports
/// (d > 1 second-order tangents, d > 1 W2 with unequal sizes, ...).
class UnsupportedConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t index)
      : std::runtime_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  explicit NumericError(const std::string& what)
      : std::runtime_error(what), index_(static_cast<std::size_t>(-1)) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// A simulated state left the admissible region |x| <= 1e12 or became NaN.
class BlowUpError : public NumericError {
 public:
  BlowUpError(std::size_t step, std::size_t path)
      : NumericError("state blow-up at step " + std::to_string(step) + ", path " +
                     std::to_string(path)),
        step_(step),
        path_(path) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t path() const noexcept { return path_; }

 private:
  std::size_t step_;
  std::size_t path_;
};

/// Scenario or catalog problems; `location` is a JSON-pointer-like path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& location, const std::string& what)
      : std::runtime_error(location + ": " + what), location_(location) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

}  // namespace mfcalc
