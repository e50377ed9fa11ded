#pragma once

#include <stdexcept>
#include <string>

namespace csa {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or width mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Softmax over an empty support (all positions masked).
struct DegenerateDistributionError : Error {
  using Error::Error;
};

// API misuse: a precondition the caller controls was violated.
struct ContractError : Error {
  using Error::Error;
};

// Malformed input data (dataset files, vocab, token ids).
struct DataError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

// Non-finite value produced by a forward op or found in a gradient.
struct NumericsError : Error {
  using Error::Error;
};

}  // namespace csa
