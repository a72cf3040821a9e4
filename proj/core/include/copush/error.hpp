#pragma once

#include <stdexcept>
#include <string>

namespace copush {

// Bad inputs, violated preconditions, malformed configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite state, overflow, diverged integration.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable, unwritable or corrupt files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace copush
