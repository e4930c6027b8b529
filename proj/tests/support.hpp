#pragma once

#include <Eigen/Dense>
#include <Eigen/LU>

#include <cmath>
#include <random>

#include "qbstab/qbsys.hpp"

namespace qbtest {

using qbstab::Index;
using qbstab::Matrix;
using qbstab::Vector;
using Rng = std::mt19937_64;

inline Matrix gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> d;
  return Matrix::NullaryExpr(rows, cols, [&]() { return d(rng); });
}

inline Vector gaussian(Index n, Rng& rng) { return gaussian(n, 1, rng).col(0); }

inline double uniform(double lo, double hi, Rng& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Index uniform_index(Index lo, Index hi, Rng& rng) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

inline Matrix orthonormal(Index rows, Index cols, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(rows, cols, rng));
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

/// Hurwitz matrix with eigenvalues of real part <= -margin.
inline Matrix stable_matrix(Index n, Rng& rng, double margin = 0.5) {
  const Matrix R = gaussian(n, n, rng) / std::sqrt(static_cast<double>(n));
  const Matrix S = R - R.transpose();
  const Matrix M = gaussian(n, n, rng) / std::sqrt(static_cast<double>(n));
  return S - M * M.transpose() - margin * Matrix::Identity(n, n);
}

inline Matrix spd(Index n, Rng& rng) {
  const Matrix M = gaussian(n, n, rng) / std::sqrt(static_cast<double>(n));
  return M * M.transpose() + Matrix::Identity(n, n);
}

/// H (x kron y) by explicit double loop over the dense operator.
inline Vector naive_quadratic(const Matrix& H, const Vector& x, const Vector& y) {
  const Index n = x.size();
  Vector out = Vector::Zero(H.rows());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) out += H.col(i * n + j) * (x(i) * y(j));
  return out;
}

/// Explicit Kronecker product, for small oracles only.
inline Matrix kron_dense(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Solves A^T P E + E^T P A + Q = 0 through the vectorized n^2 x n^2 system.
inline Matrix lyapunov_by_vectorization(const Matrix& A, const Matrix& E, const Matrix& Q) {
  const Index n = A.rows();
  const Matrix K = kron_dense(E.transpose(), A.transpose()) + kron_dense(A.transpose(), E.transpose());
  const Vector q = Eigen::Map<const Vector>(Q.data(), n * n);
  const Vector p = K.fullPivLu().solve(-q);
  return Eigen::Map<const Matrix>(p.data(), n, n);
}

/// Random QB system with symmetrized dense H of the given scale.
inline qbstab::QBSystem random_system(Index n, Index m, Rng& rng, double h_scale = 0.3,
                                      bool identity_mass = true) {
  const Matrix E = identity_mass ? Matrix(Matrix::Identity(n, n)) : spd(n, rng);
  const Matrix A = E * stable_matrix(n, rng);
  const Matrix H = h_scale * gaussian(n, n * n, rng);
  std::vector<Matrix> N;
  for (Index i = 0; i < m; ++i) N.push_back(0.1 * gaussian(n, n, rng));
  return qbstab::QBSystem(E, A, H, N, gaussian(n, m, rng));
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double s = std::max(b.norm(), 1e-300);
  return (a - b).norm() / s;
}

}  // namespace qbtest
