#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qbstab/densela.hpp"
#include "qbstab/qbsys.hpp"
#include "qbstab/sim.hpp"

namespace qbstab {

/// A reduced model together with the projection that produced it.
struct ROMArtifact {
  std::string method;  // "lqgbt", "pod", "opinf"
  QBSystem system;
  Matrix right;  // T_n or V_n, N x n
  Matrix left;   // T_n^{-1} or V_n^T, n x N
  /// Hankel-like singular values (lqgbt) or snapshot singular values (pod/opinf; one
  /// column per variable block for blockwise POD).
  Matrix singular_values;
  /// Sigma_n for lqgbt.
  Vector sigma;
  /// Reduced Riccati identity residuals (lqgbt only).
  double riccati_residual_filter = 0.0;
  double riccati_residual_control = 0.0;
  /// Relative state reconstruction error (opinf only, negative when not computed).
  double reconstruction_error = -1.0;
  /// True when the learned linear part is not Hurwitz or the ROM simulation diverged.
  bool unstable = false;
  std::vector<std::string> warnings;
};

/// LQG balanced truncation on (E^{-1}A, E^{-1}B, C, E^{-1}H); needs an output matrix.
ROMArtifact lqg_balanced_truncation(const QBSystem& sys, Index n);

/// Residuals of A S + S A^T - S C^T C S + B B^T and A^T S + S A - S B B^T S + C^T C,
/// each relative to the sum of the norms of its terms.
std::pair<double, double> reduced_riccati_residuals(const QBSystem& rom, const Vector& sigma);

/// Certificate choices for a ROM.
enum class CertificateKind { LyapunovIdentity, LqgSigma, RiccatiImplied };

CertificateKind parse_certificate_kind(const std::string& s);
std::string to_string(CertificateKind k);

/// lyapunov-identity: solve with Q = I.
/// lqg-sigma: P = Sigma_n, P_f = Sigma_n^{1/2}, Q_f = C (does not satisfy the Lyapunov identity).
/// riccati-implied: P = Sigma_n, Q = -(A^T Sigma + Sigma A) when positive definite.
/// Throws InvalidCertificate when the choice does not apply.
LyapunovCertificate make_certificate(const QBSystem& sys, CertificateKind kind,
                                     const Vector& sigma = Vector());

struct PODBasis {
  Matrix V;
  Vector singular_values;
};

/// Leading n left singular vectors of X.
PODBasis pod_basis(const Matrix& X, Index n);

/// Block-diagonal POD basis with n modes for each of the given row blocks of X.
/// Returns the basis and the singular values of each block (one column per block).
PODBasis pod_blockwise(const Matrix& X, const std::vector<Index>& block_sizes, Index n,
                       Matrix* block_singular_values = nullptr);

/// V^T E V, V^T A V, V^T H (V kron V), V^T N_i V, V^T B, C V.
QBSystem galerkin_reduce(const QBSystem& sys, const Matrix& V);

struct OpInfOptions {
  double regularization = 0.0;
  /// Condition number above which the unregularized problem counts as rank deficient.
  double max_condition = 1e12;
};

/// Least squares fit of xdot = A x + H (x kron x) + B u in the coordinates of V
/// (projected data X = V^T X_N). Quadratic regressors use the n(n+1)/2 distinct products.
QBSystem operator_inference(const SnapshotSet& snap, const Matrix& V,
                            const OpInfOptions& opts = {});

/// Same regression on already reduced data (X, Xdot, U).
QBSystem operator_inference_reduced(const Matrix& X, const Matrix& Xdot, const Matrix& U,
                                    const OpInfOptions& opts = {});

/// Residual norm ||[X; X2; U]^T [A H2 B]^T - Xdot^T||_F of a fitted model on reduced data.
double opinf_residual(const QBSystem& rom, const Matrix& X, const Matrix& Xdot, const Matrix& U);

/// ||X_N - V X_rom||_F / ||X_N||_F with X_rom simulated from V^T x_N(0) under the same input.
/// Sets `diverged` when the ROM trajectory blows up (error reported as +inf).
double reconstruction_error(const QBSystem& rom, const Matrix& V, const SnapshotSet& snap,
                            const InputSignal& u, const IntegrateOptions& opts, bool* diverged);

/// Suggested order: number of singular values above rel_tol * sigma_1.
Index suggest_order(const Vector& singular_values, double rel_tol = 1e-10);

}  // namespace qbstab
