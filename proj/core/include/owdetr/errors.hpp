#pragma once

#include <stdexcept>
#include <string>

namespace owdetr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or raster sizes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed manifest / config / detection dump. The message carries the
// record context (line number, field).
class ParseError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// More ground-truth instances than object queries.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Box does not overlap the attention grid at all.
class ScoreError : public Error {
 public:
  using Error::Error;
};

class TruncatedError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A loss or parameter became non-finite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace owdetr
