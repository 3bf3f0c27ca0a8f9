#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vpoc {

// Base for all library errors so callers can catch everything from this
// project in one handler.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or combination (caught at construction time).
struct ConfigError : Error {
  using Error::Error;
};

// Geometric precondition violated (degenerate pose, camera inside a sphere,
// zero-area box, ...).
struct GeometryError : Error {
  using Error::Error;
};

// Tensor/network shape mismatch, including checkpoint/architecture mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Operation called in a state that does not permit it (step after done,
// detect before training, ...).
struct LifecycleError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required; the triggering update is
// rejected, state is left untouched.
struct NumericsError : Error {
  using Error::Error;
};

// Filesystem-level failure: missing file, unwritable directory.
struct StorageError : Error {
  using Error::Error;
};

// Malformed serialized data. `offset` is the byte (binary) or line (text)
// position that failed to parse, when known.
struct FormatError : Error {
  explicit FormatError(const std::string& msg, std::size_t offset = 0)
      : Error(msg), offset(offset) {}
  std::size_t offset = 0;
};

}  // namespace vpoc
