#pragma once

#include <stdexcept>
#include <string>

namespace mahe {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, precondition violation, or bad input file. CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

/// A black-box predictor failed: bad subprocess exit, malformed line, timeout. CLI exit code 3.
struct PredictorError : Error {
  using Error::Error;
};

/// Non-finite loss or other numerical breakdown. CLI exit code 4.
struct NumericalError : Error {
  using Error::Error;
};

struct DivergenceError : NumericalError {
  using NumericalError::NumericalError;
};

/// Operation not supported by this handle (e.g. editing an external predictor).
struct CapabilityError : ConfigError {
  using ConfigError::ConfigError;
};

/// Unrecognized or wrong-version serialized document.
struct FormatError : ConfigError {
  using ConfigError::ConfigError;
};

}  // namespace mahe
