#pragma once

#include <stdexcept>
#include <string>

namespace divbar {

/// Malformed or inconsistent configuration (scenario files, table parameters).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A simulation invariant was violated (packet not held, ACK sets inconsistent).
/// Aborts the run.
class IntegrityFault : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Requested computation is outside the supported size range.
class UnsupportedSize : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace divbar
