// Error types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace oscrl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

// All joints/dims saturated and acceleration bounds still violated.
struct InfeasibleLimits : Error {
  using Error::Error;
};

// Simulator state left the trustworthy regime (|qdot| > 100 rad/s).
struct NumericalBlowup : Error {
  using Error::Error;
};

struct EpisodeFinished : Error {
  using Error::Error;
};

struct UnreachableStart : Error {
  using Error::Error;
};

struct NanLoss : Error {
  using Error::Error;
};

struct ProtocolViolation : Error {
  using Error::Error;
};

struct TimeoutError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace oscrl
