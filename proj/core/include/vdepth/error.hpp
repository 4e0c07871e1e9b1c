#pragma once

#include <stdexcept>
#include <string>

namespace vdepth {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its content does not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A reduction had nothing to reduce over (e.g. a mask with no valid pixel).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint payload truncated or failing its checksum.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  VersionMismatchError(unsigned found, unsigned expected)
      : FormatError("checkpoint format version " + std::to_string(found) +
                    " is not supported (expected " + std::to_string(expected) + ")"),
        found_(found),
        expected_(expected) {}

  unsigned found() const { return found_; }
  unsigned expected() const { return expected_; }

 private:
  unsigned found_;
  unsigned expected_;
};

/// A loss became non-finite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

#define VDEPTH_REQUIRE(cond, msg)                       \
  do {                                                  \
    if (!(cond)) throw ::vdepth::PreconditionError(msg); \
  } while (0)

}  // namespace vdepth
