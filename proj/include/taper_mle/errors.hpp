#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace taper_mle {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameter, malformed input, or violated precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Locations too close together to produce a nonsingular covariance matrix.
class SingularDesign : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Cholesky factorization hit a non-positive pivot.
class FactorizationError : public Error {
 public:
  explicit FactorizationError(std::size_t pivot)
      : Error("matrix is not positive definite (pivot " + std::to_string(pivot) + ")"),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Numerical quadrature did not reach its error target.
class QuadratureError : public Error {
 public:
  using Error::Error;
};

/// An optimizer or Monte Carlo run could not produce a usable result.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file contents.
class ParseError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A file could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace taper_mle
