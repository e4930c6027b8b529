#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <stdexcept>
#include <string>

namespace qbstab {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A factorization broke down (singular LU, indefinite Cholesky, ...).
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// An iterative kernel (QR sweeps, Newton, block swaps) did not converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// The point handed to shift_equilibrium does not satisfy the equilibrium equation.
class NotAnEquilibrium : public Error {
 public:
  using Error::Error;
};

/// Some eigenvalue of E^{-1}A has Re >= -eps_stab; no quadratic Lyapunov matrix exists.
class UnstableLinearPart : public Error {
 public:
  UnstableLinearPart(const std::string& what, double abscissa)
      : Error(what), abscissa_(abscissa) {}
  double spectral_abscissa() const { return abscissa_; }

 private:
  double abscissa_;
};

class InvalidCertificate : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition_number() const { return condition_; }

 private:
  double condition_;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

}  // namespace detail

}  // namespace qbstab
