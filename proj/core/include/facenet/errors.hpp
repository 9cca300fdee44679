#pragma once

#include <stdexcept>
#include <string>

namespace facenet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Missing or undecodable files while reading a dataset.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Data that was read fine but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loss or parameter went NaN/inf during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace facenet
