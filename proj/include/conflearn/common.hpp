#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace conflearn {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

/// Class indices are zero-based in the library API. Files and the CLI use
/// one-based labels and convert at the boundary.
using ClassIndex = int;

// Error hierarchy. Every failure the library reports derives from Error so
// callers can catch one type; the subclasses name the violated contract.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ClassIndexError : Error {
  using Error::Error;
};
struct WeightDomainError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  DivergenceError(const std::string& what, int epoch_index)
      : Error(what), epoch(epoch_index) {}
  int epoch;
};

}  // namespace conflearn
