#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qbstab/densela.hpp"
#include "qbstab/qbsys.hpp"
#include "qbstab/sim.hpp"

namespace qbstab {

/// Points with x^T E^T P E x = rho^2: normalized Gaussian directions mapped through the
/// inverse transpose of the Cholesky factor of E^T P E.
std::vector<Vector> sample_ellipsoid_shell(const LyapunovCertificate& cert, const Matrix& E,
                                           double rho, int count, std::mt19937_64& rng);

enum class SampleOutcome { Converged, Diverged, Undecided };

std::string to_string(SampleOutcome o);

struct SampleRecord {
  Vector x0;
  SampleOutcome outcome = SampleOutcome::Undecided;
  double final_time = 0.0;
  /// max_t v(x(t)) / v(x0) over accepted steps.
  double v_growth = 1.0;
  std::string note;
};

struct ValidationReport {
  double rho_tested = 0.0;
  int samples = 0;
  int converged = 0;
  int diverged = 0;
  int undecided = 0;
  double worst_v_growth = 1.0;
  double horizon = 0.0;
  std::vector<SampleRecord> records;

  bool contained() const { return diverged == 0; }
};

struct ValidateOptions {
  int count = 200;
  /// Samples are drawn at radius_factor * rho.
  double radius_factor = 0.99;
  std::uint64_t seed = 20240901;
  /// 0: 100 / |spectral abscissa of E^{-1} A|, clipped to [1, 1e4], or 1e3 when A is not Hurwitz.
  double horizon = 0.0;
  /// A sample converged once ||x|| <= convergence_tol * ||x0||.
  double convergence_tol = 1e-6;
  double divergence_ceiling = 1e8;
  /// Integrator tolerances; only the converge/diverge outcome is needed, not an accurate path.
  double rtol = 1e-6;
  double atol = 1e-12;
  bool keep_records = true;
};

/// Integrates the autonomous part of sys from shell samples at radius_factor * rho.
ValidationReport validate_estimate(const QBSystem& sys, const LyapunovCertificate& cert,
                                   double rho, const ValidateOptions& opts = {});

struct TightnessReport {
  std::vector<double> factors;
  std::vector<ValidationReport> reports;
  /// Smallest factor with at least one diverging sample; negative when none diverged.
  double first_divergence_factor = -1.0;
};

/// validate_estimate at f * rho_star (no extra safety factor) for each f.
TightnessReport probe_tightness(const QBSystem& sys, const LyapunovCertificate& cert,
                                double rho_star, const std::vector<double>& factors = {1.5, 2.0, 5.0, 10.0},
                                const ValidateOptions& opts = {});

}  // namespace qbstab
