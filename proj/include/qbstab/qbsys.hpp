#pragma once

#include <optional>
#include <vector>

#include "qbstab/common.hpp"

namespace qbstab {

// Column (i, j) of an n x n^2 quadratic operator multiplies x_i * y_j in H (x kron y).
inline Index kron_col(Index i, Index j, Index n) { return i * n + j; }

/// x kron y for dense vectors.
template <typename DerivedX, typename DerivedY>
Vector kron(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  Vector out(x.size() * y.size());
  for (Index i = 0; i < x.size(); ++i) out.segment(i * y.size(), y.size()) = x(i) * y;
  return out;
}

/// Dense Kronecker product of two matrices.
template <typename DerivedA, typename DerivedB>
Matrix kron(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
            int /*matrix_tag*/) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Symmetrizes a dense n x n^2 operator so that H(x kron y) = H(y kron x).
template <typename Derived>
Matrix symmetrize_quadratic(const Eigen::MatrixBase<Derived>& raw) {
  const Index n = raw.rows();
  detail::require(raw.cols() == n * n, "symmetrize_quadratic: H must be n x n^2");
  Matrix out(n, n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      out.col(kron_col(i, j, n)) = 0.5 * (raw.col(kron_col(i, j, n)) + raw.col(kron_col(j, i, n)));
  return out;
}

SparseMatrix symmetrize_quadratic(const SparseMatrix& raw);

/// K_i = H(:, i n : (i+1) n), so that sum_i x_i K_i x = H(x kron x).
struct QuadSlices {
  std::vector<Matrix> K;

  Index size() const { return static_cast<Index>(K.size()); }
  /// sum_i x_i K_i x
  Vector apply(const Vector& x) const;
  /// Concatenates the slices back into [K_1 ... K_n].
  Matrix assemble() const;
};

/// E xdot = A x + H (x kron x) + sum_i N_i x u_i + B u,  y = C x.
///
/// Immutable after construction. H is stored sparse and symmetrized; E is
/// LU-factorized once at construction and rejected when numerically singular.
class QBSystem {
 public:
  QBSystem(Matrix E, Matrix A, SparseMatrix H, std::vector<Matrix> N, Matrix B,
           std::optional<Matrix> C = std::nullopt);
  QBSystem(Matrix E, Matrix A, const Matrix& H, std::vector<Matrix> N, Matrix B,
           std::optional<Matrix> C = std::nullopt);

  /// E = I, no inputs.
  static QBSystem autonomous(Matrix A, const Matrix& H);
  static QBSystem autonomous(Matrix E, Matrix A, SparseMatrix H);

  Index n() const { return A_.rows(); }
  Index m() const { return B_.cols(); }

  const Matrix& E() const { return E_; }
  const Matrix& A() const { return A_; }
  const SparseMatrix& H() const { return H_; }
  Matrix H_dense() const { return Matrix(H_); }
  const std::vector<Matrix>& N() const { return N_; }
  const Matrix& B() const { return B_; }
  const std::optional<Matrix>& C() const { return C_; }
  bool identity_mass() const { return identity_mass_; }
  double mass_condition() const { return mass_condition_; }

  /// H (x kron y); H is symmetric so the argument order does not matter.
  Vector quadratic(const Vector& x, const Vector& y) const;
  Vector quadratic(const Vector& x) const { return quadratic(x, x); }
  /// H (I kron x), the n x n matrix with columns H(e_j kron x). Jacobian of H(x kron x) is twice this.
  Matrix quadratic_operator(const Vector& x) const;

  /// A x + H(x kron x) + sum_i N_i x u_i + B u   (the E-weighted right-hand side)
  Vector force(const Vector& x, const Vector& u) const;
  /// d force / dx
  Matrix force_jacobian(const Vector& x, const Vector& u) const;

  /// E^{-1} force(x, u); u may be empty for the autonomous part.
  Vector rhs(const Vector& x, const Vector& u = Vector()) const;
  Matrix jacobian(const Vector& x, const Vector& u = Vector()) const;

  Vector solve_mass(const Vector& b) const;
  Matrix solve_mass(const Matrix& b) const;
  /// E x
  Vector apply_mass(const Vector& x) const;

  QuadSlices slices() const;

 private:
  void validate_and_factor();

  struct QuadTerm {
    Index row, i, j;
    double value;
  };

  Matrix E_, A_;
  SparseMatrix H_;
  std::vector<Matrix> N_;
  Matrix B_;
  std::optional<Matrix> C_;
  Eigen::PartialPivLU<Matrix> mass_lu_;
  std::vector<QuadTerm> quad_terms_;
  bool identity_mass_ = false;
  bool diagonal_mass_ = false;
  double mass_condition_ = 1.0;
};

/// New system z = x - x_e with A' = A + 2 H (I kron x_e). Inputs see B' = B + [N_i x_e].
QBSystem shift_equilibrium(const QBSystem& sys, const Vector& x_e, double tol_eq = 1e-8);

/// Closes the loop u = K x; the result is autonomous with A' = A + B K and the
/// bilinear terms folded into the quadratic operator.
QBSystem absorb_linear_feedback(const QBSystem& sys, const Matrix& K);

/// Drops inputs (B, N) but keeps E, A, H, C.
QBSystem autonomous_part(const QBSystem& sys);

/// Dense W_left * H * (V kron V) computed column-block-wise; never forms V kron V.
Matrix project_quadratic(const Matrix& w_left, const SparseMatrix& H, const Matrix& V);

SparseMatrix to_sparse(const Matrix& dense, double drop_tol = 0.0);

}  // namespace qbstab
