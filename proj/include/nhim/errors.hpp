#pragma once

#include <stdexcept>
#include <string>

namespace nhim {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent run configuration (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

/// Failure inside numerical routines (CLI exit code 3).
struct NumericalError : Error {
  using Error::Error;
};

/// Adaptive step size collapsed below the resolvable scale.
struct StepSizeUnderflow : NumericalError {
  using NumericalError::NumericalError;
};

/// No event crossing found within the allowed time span.
struct EventNotFound : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace nhim
