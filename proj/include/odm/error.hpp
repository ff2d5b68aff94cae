#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace odm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. replaying a consumed tape.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or another broken invariant found in data.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class RangeCollapseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class AccountingError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (loss became non-finite).
class NumericError : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(const std::string&)>;

// Default handler prints "warning: ..." to stderr. Returns the previous one.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace odm
