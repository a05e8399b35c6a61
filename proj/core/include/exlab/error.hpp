#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace exlab {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument (non-finite input, bad parameter, mismatched shapes).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Index or region outside the valid domain.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Operation not available for this family / dimension / order.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Circulant embedding could not be made nonnegative.
class SynthesisError : public Error {
 public:
  using Error::Error;
};

/// A Gaussian conditioning block is singular or ill-conditioned.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Jet covariance assembly produced a matrix that is not PSD.
class AssemblyError : public Error {
 public:
  using Error::Error;
};

/// Monte Carlo estimate rejected as unreliable (too many unstable samples).
class ReliabilityError : public Error {
 public:
  using Error::Error;
};

/// Log-log scaling fit impossible on the given table.
class FitError : public Error {
 public:
  using Error::Error;
};

// Warnings go through a replaceable sink; the default writes to stderr.
using WarningSink = std::function<void(std::string_view)>;

void set_warning_sink(WarningSink sink);
void log_warning(std::string_view message);

}  // namespace exlab
