#pragma once

#include <stdexcept>
#include <string>

namespace pat {

// Common base so callers can catch every library failure with one handler.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shapes or extents incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File format or filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in a state that cannot support it.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace pat
