#pragma once

#include <stdexcept>
#include <string>

namespace advlens {

/// Invalid network spec, attack config, or analysis config.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arithmetic went somewhere it cannot come back from (NaN, degenerate
/// denominators, non-convergent searches).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advlens
