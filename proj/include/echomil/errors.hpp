#pragma once

#include <stdexcept>
#include <string>

namespace echomil {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DecodeError : public Error { using Error::Error; };
class EmptyVideoError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class StratificationError : public Error { using Error::Error; };
class LeakageError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class UndefinedMetricError : public Error { using Error::Error; };
class InsufficientFramesError : public Error { using Error::Error; };

}  // namespace echomil
