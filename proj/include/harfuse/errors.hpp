#ifndef HARFUSE_ERRORS_HPP
#define HARFUSE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace harfuse {

/// Base of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes, axes out of range, invalid sizing.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Numeric argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Model or layer configuration that cannot be realized.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Batch statistics requested over fewer than two values.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; the message names the file and line.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or cache that cannot be loaded.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace harfuse

#endif  // HARFUSE_ERRORS_HPP
