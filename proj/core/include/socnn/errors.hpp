#pragma once

#include <stdexcept>
#include <string>

namespace socnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or layer dimensions do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input, rank collapse, or another numerical failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Invalid model, optimizer, or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data (CIFAR batches, checkpoints, config files).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Autodiff tape misuse: cross-graph inputs, non-scalar loss, repeated backward.
class GraphError : public Error {
 public:
  using Error::Error;
};

}  // namespace socnn
