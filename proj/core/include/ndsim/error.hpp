#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ndsim {

enum class ErrorKind {
  Parse,      // malformed bytes in an input file
  Format,     // well-formed bytes that violate a format rule
  Dimension,  // vector length mismatch
  Domain,     // mathematically undefined input (zero vector under angular)
  Geometry,   // placement or layout does not fit the SSD geometry
  Parameter,  // invalid argument value
  Load,       // container checksum or invariant violation
  Range,      // index out of range
  Refresh,    // no free block for block-level refresh
  Config,     // experiment configuration error
  Io,         // file system failure
  Artifact,   // artifact version or pairing mismatch
  Simulation, // simulator configuration fault
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` lets callers such as the
/// CLI map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ndsim
