#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace avlit {

/// Shape contract violation. `axis()` names the offending dimension.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& op, std::string axis, const std::string& detail)
      : std::invalid_argument(op + ": axis '" + axis + "': " + detail), axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

/// Invalid hyperparameters or run configuration, raised before any compute.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file contents. `offset()` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace avlit
