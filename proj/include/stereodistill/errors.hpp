#pragma once

#include <stdexcept>
#include <string>

namespace stereodistill {

/// Invalid configuration value, unknown preset, bad flag combination.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A teacher cannot emit a distillation point that was requested.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failures and malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric precondition violated (NaN input, unnormalized distribution, empty mask).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stereodistill
