#pragma once

#include <stdexcept>
#include <string>

namespace simrod {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported input file.
class ParseError : public Error {
 public:
  enum class Kind {
    io,
    bad_magic,
    unsupported_depth,
    odd_dimensions,
    truncated,
    unknown_pattern,
    bad_metadata,
  };

  ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Invalid configuration, or a checkpoint that does not match the requested architecture.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that cannot be combined by the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence, or a failed gradient check.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace simrod
