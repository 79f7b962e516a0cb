#pragma once

#include <stdexcept>
#include <string>

namespace oddity {

/// Base class for every structured error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch; the message names the offending axis.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented range.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Malformed file container (bad magic, unsupported version, truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Container parsed but its own bookkeeping is inconsistent (counts, CRC).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A riddle generator exhausted its retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace oddity
