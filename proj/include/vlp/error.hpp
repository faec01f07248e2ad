#pragma once

#include <stdexcept>
#include <string>

namespace vlp {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or geometry input (bad resolution, LED outside room, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Human footprint does not fit inside the room.
class PlacementError : public Error {
 public:
  using Error::Error;
};

/// Cached data does not belong to the scene it is used with.
class InvalidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or wire content.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// API called on an object in the wrong state.
class MisuseError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure at run time (NaN loss, resampling exhaustion, ...).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace vlp
