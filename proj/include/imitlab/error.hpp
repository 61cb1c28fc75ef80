#pragma once

#include <stdexcept>
#include <string>

namespace imitlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array shapes do not agree (e.g. a policy built for a different MDP).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Numeric contents violate a model invariant (rows not stochastic, rewards out of range).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or missing configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad argument to an operation (m <= 0, rate < 1, out-of-range index).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// The dataset cannot support the requested computation.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Operation called on an object in the wrong state (e.g. sampling an empty buffer).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A state has no feature row.
class FeatureError : public Error {
 public:
  using Error::Error;
};

/// A policy violates the uniform-on-unvisited-states constraint.
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Instance too large for exhaustive enumeration.
class SizeLimitError : public Error {
 public:
  using Error::Error;
};

}  // namespace imitlab
