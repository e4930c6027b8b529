#pragma once

#include <complex>
#include <functional>
#include <string>

#include "qbstab/common.hpp"

namespace qbstab {

/// Quadratic Lyapunov function v(x) = x^T E^T P E x with
/// A^T P E + E^T P A + Q = 0, P = P_f^T P_f and Q = Q_f^T Q_f.
struct LyapunovCertificate {
  Matrix P;
  Matrix P_f;
  Matrix Q;
  Matrix Q_f;
  /// ||A^T P E + E^T P A + Q||_F / ||Q||_F against the system it was built for.
  double residual = 0.0;
  /// Where P came from: "lyapunov", "lqg-sigma", "riccati-implied", "riccati", "user".
  std::string source = "lyapunov";
};

namespace la {

// --- basic factorizations -------------------------------------------------

struct SVDResult {
  Matrix U;
  Vector sigma;
  Matrix V;
};

/// Thin SVD, M = U diag(sigma) V^T with sigma non-increasing.
SVDResult svd(const Matrix& M);

/// Lower Cholesky factor of an SPD matrix; throws FactorizationError otherwise.
Matrix cholesky(const Matrix& S);

/// Solves M X = B by LU with partial pivoting; throws when M is singular.
Matrix lu_solve(const Matrix& M, const Matrix& B);

struct QRResult {
  Matrix Q;  // thin, m x min(m, n)
  Matrix R;  // min(m, n) x n, upper triangular
};
QRResult qr(const Matrix& M);

/// Symmetric PSD square root factor R with S = R R^T (negative eigenvalues clipped).
Matrix psd_factor(const Matrix& S);

// --- norms ------------------------------------------------------------------

/// Largest singular value. Full SVD up to 2000 columns, Gram-matrix eigenvalue above.
double spectral_norm(const Matrix& M);
double spectral_norm(const SparseMatrix& M);

/// Smallest singular value above max(rows, cols) * sigma_max * eps.
double min_nonzero_singular_value(const Matrix& M);

double condition_number(const Matrix& M);

/// max Re(lambda) over the eigenvalues of M.
double spectral_abscissa(const Matrix& M);

// --- Schur forms ---------------------------------------------------------------

struct SchurForm {
  Matrix Z;  // orthogonal
  Matrix T;  // quasi upper triangular, M = Z T Z^T
  Index selected = 0;
};

SchurForm real_schur(const Matrix& M);

/// Eigenvalues read off the 1x1 / 2x2 diagonal blocks of a quasi-triangular T.
Eigen::VectorXcd schur_eigenvalues(const Matrix& T);

using EigenvalueSelector = std::function<bool(std::complex<double>)>;

/// Real Schur form whose leading `selected` columns of Z span the invariant
/// subspace of the selected eigenvalues. Blocks are moved by orthogonal swaps.
SchurForm ordered_real_schur(const Matrix& M, const EigenvalueSelector& select);

/// Reorders an existing Schur form in place.
Index reorder_schur(Matrix& T, Matrix& Z, const EigenvalueSelector& select);

// --- matrix equations ------------------------------------------------------

/// Solves A^T X + X A + Q = 0 for symmetric Q by Bartels-Stewart (A need not be normal).
Matrix solve_continuous_lyapunov(const Matrix& A, const Matrix& Q);

/// Solves T^T Y + Y T = C for quasi upper triangular T.
Matrix solve_lyapunov_schur(const Matrix& T, const Matrix& C);

/// Generalized Lyapunov equation A^T P E + E^T P A + Q_f^T Q_f = 0.
/// Throws UnstableLinearPart when some Re(lambda(E^{-1}A)) >= -1e-12 ||E^{-1}A||.
LyapunovCertificate solve_lyapunov(const Matrix& A, const Matrix& E, const Matrix& Q_f);

struct RiccatiSolution {
  Matrix X;
  double residual = 0.0;  // relative, see riccati_residual
  int refinement_steps = 0;
};

/// Stabilizing solution of F^T X + X F - X G X + Q = 0 via the ordered Schur form of
/// the Hamiltonian [F, -G; -Q, -F^T], optionally polished by Newton-Kleinman steps.
RiccatiSolution solve_care(const Matrix& F, const Matrix& G, const Matrix& Q,
                           int newton_refinements = 2);

/// ||F^T X + X F - X G X + Q||_F divided by the sum of the Frobenius norms of the terms.
double riccati_residual(const Matrix& F, const Matrix& G, const Matrix& Q, const Matrix& X);

struct LQGRiccati {
  Matrix P;  // filter:  A P + P A^T - P C^T C P + B B^T = 0
  Matrix Q;  // control: A^T Q + Q A - Q B B^T Q + C^T C = 0
  double residual_P = 0.0;
  double residual_Q = 0.0;
};

LQGRiccati solve_riccati_lqg(const Matrix& A, const Matrix& B, const Matrix& C);

}  // namespace la
}  // namespace qbstab
