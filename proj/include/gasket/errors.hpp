#pragma once

#include <stdexcept>
#include <string>

namespace gasket {

/// Base of every error the library throws on bad input or broken contracts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Digit out of range, or a point that is not a vertex of the gasket.
class AddressError : public Error {
 public:
  using Error::Error;
};

/// Requested variant (level, mode) is not implemented.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Operands live on different graph levels.
class LevelMismatch : public Error {
 public:
  using Error::Error;
};

/// Linear system has no unique solution.
class SolvabilityError : public Error {
 public:
  using Error::Error;
};

/// Domain cannot be resolved at the requested level.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incomplete input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Requested accuracy is out of reach.
class AccuracyError : public Error {
 public:
  using Error::Error;
};

}  // namespace gasket
