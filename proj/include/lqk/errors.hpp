#pragma once

#include <stdexcept>
#include <string>

namespace lqk {

/// A time argument fell outside the horizon [0, T].
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A factorization or solve failed (singular or non-finite data).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or inconsistent inputs supplied by the caller.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A run configuration could not be parsed or failed validation.
class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

/// The requested operation is not available in the kernel's current mode.
class UnsupportedModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace lqk
