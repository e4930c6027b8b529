#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qbstab/densela.hpp"
#include "qbstab/qbsys.hpp"

namespace qbstab {

/// Free parameters mu of the matrices S_1..S_n that leave H(x kron x) unchanged.
///
/// Sum_i x_i S_i x vanishes for every x exactly when, for each output row r, the
/// n x n array (i, j) -> S_i(r, j) is skew-symmetric. Generator k = (r, p, q) with
/// p < q puts +1 at S_p(r, q) and -1 at S_q(r, p); k = r * n(n-1)/2 + pair(p, q).
class MuParametrization {
 public:
  struct Generator {
    Index row;
    Index p;
    Index q;
  };

  explicit MuParametrization(Index n);

  static Index count(Index n) { return n * n * (n - 1) / 2; }

  Index n() const { return n_; }
  Index size() const { return count(n_); }

  Index index(Index row, Index p, Index q) const;
  Generator generator(Index k) const;

  /// S_1..S_n for the given mu.
  std::vector<Matrix> skew_matrices(const Vector& mu) const;

 private:
  Index n_;
};

/// Certificate data preprocessed for one system: Q_f made square, inverses formed.
struct CertificateCheck {
  /// Relative residual tolerance for A^T P E + E^T P A + Q = 0.
  double max_residual = 1e-6;
  /// Accept larger residuals (used for the LQG Sigma certificate) and record a warning.
  bool allow_inexact = false;
};

class RadiusProblem {
 public:
  RadiusProblem(const QBSystem& sys, const LyapunovCertificate& cert,
                const CertificateCheck& check = {});

  Index n() const { return n_; }
  const MuParametrization& parametrization() const { return param_; }
  const LyapunovCertificate& certificate() const { return cert_; }
  /// Residual of the certificate against this system.
  double residual() const { return residual_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool zero_quadratic() const { return h_norm_ == 0.0; }
  double h_norm() const { return h_norm_; }
  double sigma_min_qf() const { return sigma_min_qf_; }

  /// n^2 x n, row block i is G_i = M_i^T P E + E^T P M_i with M_i = K_i + S_i(mu).
  Matrix G(const Vector& mu) const;
  /// (W^T kron Q_f^T)^{-1} G(mu) Q_f^{-1} with W = P_f E.
  Matrix J(const Vector& mu) const;

  /// sigma_max(J(mu)); writes the subgradient u^T dJ/dmu_k v when grad is non-null.
  double alpha(const Vector& mu, Vector* grad = nullptr) const;
  /// (1/t) log sum_j exp(t sigma_j(J(mu))), a smooth upper bound of alpha within log(n)/t.
  /// alpha_out receives sigma_max(J(mu)) from the same decomposition.
  double smoothed_alpha(const Vector& mu, double t, Vector* grad,
                        double* alpha_out = nullptr) const;

  /// d/dt x^T E^T P E x along the autonomous dynamics.
  double vdot(const Vector& x) const;
  /// The same quantity written through J(mu).
  double vdot_via_J(const Vector& mu, const Vector& x) const;
  /// x^T E^T P E x
  double v(const Vector& x) const;

  /// Gradient contraction <J_k, Y> for all generators k, Y an n^2 x n matrix.
  Vector adjoint(const Matrix& Y) const;

 private:
  Index n_;
  MuParametrization param_;
  LyapunovCertificate cert_;
  Matrix E_, A_;
  QuadSlices slices_;
  SparseMatrix H_;
  Matrix PE_;    // P E
  Matrix Winv_;  // (P_f E)^{-1}
  Matrix Qinv_;  // Q_f^{-1}, Q_f square
  Matrix EPE_;   // E^T P E
  double residual_ = 0.0;
  double h_norm_ = 0.0;
  double sigma_min_qf_ = 0.0;
  std::vector<std::string> warnings_;
};

struct OptimizeOptions {
  int restarts = 5;
  std::uint64_t seed = 20240901;
  double mu_bound = 1e4;
  double tol_x = 0.1;
  double tol_fun = 1e-3;
  int max_iter = 1000;
  /// Conjugate-gradient iterations on ||J(mu)||_F^2 before the smoothed phase (0 skips it).
  int frobenius_iter = 500;
  /// Projected subgradient iterations run after the smoothed phase.
  int polish_iter = 200;
  CertificateCheck check;
};

struct StabilityEstimate {
  double rho_analytic = 0.0;
  double rho_star = 0.0;
  double alpha_star = 0.0;
  Vector mu_star;
  int restarts_used = 0;
  /// Best alpha after each iteration, concatenated over restarts.
  std::vector<double> objective_history;
  /// Best alpha reached by each restart.
  std::vector<double> restart_alphas;
  int iterations = 0;
  LyapunovCertificate certificate;

  // diagnostics
  double ball_radius = 0.0;
  double rigorous_radius = 0.0;
  double certificate_residual = 0.0;
  double wall_time_ms = 0.0;
  std::vector<std::string> warnings;
};

struct AlphaEvaluation {
  double alpha = 0.0;
  Vector subgradient;
};

// --- free-function interface --------------------------------------------------

/// sigma_min(Q_f)^2 / (2 ||H||_2 sqrt(||P||_2)), +inf when H = 0.
double analytic_radius(const QBSystem& sys, const LyapunovCertificate& cert,
                       const CertificateCheck& check = {});

/// Ball radius sigma_min(Q_f)^2 / (2 ||E|| ||P|| ||H||) on which vdot < 0.
double analytic_ball_radius(const QBSystem& sys, const LyapunovCertificate& cert);

Matrix build_G(const QBSystem& sys, const LyapunovCertificate& cert, const Vector& mu);
Matrix build_J(const QBSystem& sys, const LyapunovCertificate& cert, const Vector& mu);
double vdot(const QBSystem& sys, const LyapunovCertificate& cert, const Vector& x);
double vdot_via_J(const QBSystem& sys, const LyapunovCertificate& cert, const Vector& mu,
                  const Vector& x);
AlphaEvaluation objective_alpha(const QBSystem& sys, const LyapunovCertificate& cert,
                                const Vector& mu);

StabilityEstimate optimize_radius(const QBSystem& sys, const LyapunovCertificate& cert,
                                  const OptimizeOptions& opts = {});

/// Lyapunov certificate with Q_f = I (or the given Q_f).
LyapunovCertificate lyapunov_certificate(const QBSystem& sys);
LyapunovCertificate lyapunov_certificate(const QBSystem& sys, const Matrix& Q_f);

/// Relative residual of A^T P E + E^T P A + Q for the given system.
double certificate_residual(const QBSystem& sys, const LyapunovCertificate& cert);

}  // namespace qbstab
