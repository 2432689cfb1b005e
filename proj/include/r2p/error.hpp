#pragma once

#include <stdexcept>
#include <string>

namespace r2p {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad call: wrong shapes, wrong mode, out-of-range arguments.
struct UsageError : Error {
  using Error::Error;
};

// Shape/dimension disagreement between tensors or clouds.
struct ShapeError : UsageError {
  using UsageError::UsageError;
};

// Malformed or truncated files, unreadable paths.
struct IoError : Error {
  using Error::Error;
};

// NaN/Inf surfaced in a forward pass or an optimizer step.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace r2p
