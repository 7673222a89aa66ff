#pragma once

#include <stdexcept>
#include <string>

namespace gkeb {

/// Bad input: wrong shapes, non-finite entries, invalid configuration.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameter outside the mathematical domain of an operation (e.g. theta <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Numerical failure during a computation (non-finite intermediate,
/// loss of definiteness, etc.).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gkeb
