#pragma once

#include <stdexcept>
#include <string>

namespace deepteam {

// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model input or invariant violation (exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An enumeration would exceed the configured item cap (exit code 3).
class CapExceeded : public Error {
 public:
  using Error::Error;
};

// A structural assumption probe failed, e.g. observation decoupling or beta*H3 < 1 (exit code 4).
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

inline constexpr unsigned long long kDefaultCap = 50'000'000ULL;

}  // namespace deepteam
