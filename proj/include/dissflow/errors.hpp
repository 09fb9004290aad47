#pragma once

#include <stdexcept>
#include <string>

namespace dissflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration does not hold.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A computation produced non-finite values, left the domain, or failed to
/// converge within its budget.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dissflow
