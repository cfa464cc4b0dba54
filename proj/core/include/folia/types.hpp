#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace folia {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline const char* version() { return "0.1.0"; }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input left the validity ball or a radius precondition.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Spectral clustering could not be performed as requested.
class SpectralError : public Error {
 public:
  using Error::Error;
};

/// Chart construction or evaluation failed.
class ChartError : public Error {
 public:
  using Error::Error;
};

/// A vector that must lie in a spectral subspace does not.
class SubspaceError : public Error {
 public:
  using Error::Error;
};

/// Fixed-point solve failed (non-convergence, ball exit, ...).
class SolveError : public Error {
 public:
  using Error::Error;
};

/// Truncation horizon too short for the requested tolerance.
class TailBoundError : public SolveError {
 public:
  using SolveError::SolveError;
};

/// Config file parse or validation failure.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Largest principal angle (radians) between the column spans of U and V.
double principal_angle(const Matrix& U, const Matrix& V);

}  // namespace folia
