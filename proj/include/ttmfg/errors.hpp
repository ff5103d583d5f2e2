#pragma once

#include <stdexcept>
#include <string>

namespace ttmfg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain an operation accepts.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A configuration or problem definition violates its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A matrix handed to a pivoting routine does not have full column rank.
class RankDeficientError : public Error {
 public:
  using Error::Error;
};

/// The operation is not defined for this representation (e.g. log-form moments).
class UnsupportedRepresentation : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where a finite value is required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace ttmfg
