#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tmepsr {

// Shape or dimension contract violated by a caller.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data. `line` is 1-based, 0 when not tied to a file line.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// NaN/Inf produced by a forward op or a diverging loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown key, bad value, or invalid combination in an ExperimentConfig.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace tmepsr
