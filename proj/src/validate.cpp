#include "qbstab/validate.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace qbstab {

std::vector<Vector> sample_ellipsoid_shell(const LyapunovCertificate& cert, const Matrix& E,
                                           double rho, int count, std::mt19937_64& rng) {
  detail::require(cert.P.rows() == E.rows(), "sample_ellipsoid_shell: P and E sizes differ");
  detail::require(rho > 0.0 && std::isfinite(rho), "sample_ellipsoid_shell: rho must be positive");
  const Index n = E.rows();
  const Matrix M = E.transpose() * cert.P * E;
  Eigen::LLT<Matrix> llt(0.5 * (M + M.transpose()));
  if (llt.info() != Eigen::Success)
    throw InvalidCertificate("sample_ellipsoid_shell: E^T P E is not positive definite");
  const Matrix Lt = llt.matrixU();

  std::normal_distribution<double> normal;
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    Vector z(n);
    do {
      for (Index i = 0; i < n; ++i) z(i) = normal(rng);
    } while (z.norm() == 0.0);
    z *= rho / z.norm();
    out.push_back(Lt.triangularView<Eigen::Upper>().solve(z));
  }
  return out;
}

std::string to_string(SampleOutcome o) {
  switch (o) {
    case SampleOutcome::Converged: return "converged";
    case SampleOutcome::Diverged: return "diverged";
    case SampleOutcome::Undecided: return "undecided";
  }
  return "unknown";
}

namespace {

double default_horizon(const QBSystem& sys) {
  double a = 0.0;
  Matrix At;
  try {
    At = sys.solve_mass(sys.A());
    a = la::spectral_abscissa(At);
  } catch (const Error&) {
    return 1e3;
  }
  // same margin as the Lyapunov solver: a numerically zero abscissa is not Hurwitz
  if (!(a < -1e-12 * la::spectral_norm(At))) return 1e3;
  return std::clamp(100.0 / std::abs(a), 1.0, 1e4);
}

}  // namespace

ValidationReport validate_estimate(const QBSystem& sys, const LyapunovCertificate& cert,
                                   double rho, const ValidateOptions& opts) {
  detail::require(rho > 0.0, "validate_estimate: rho must be positive");
  detail::require(opts.count >= 0, "validate_estimate: negative sample count");
  const QBSystem aut = autonomous_part(sys);
  ValidationReport rep;
  rep.rho_tested = opts.radius_factor * rho;
  rep.horizon = opts.horizon > 0.0 ? opts.horizon : default_horizon(aut);
  if (!std::isfinite(rep.rho_tested)) throw Error("validate_estimate: radius is not finite");

  std::mt19937_64 rng(opts.seed);
  const auto xs = sample_ellipsoid_shell(cert, aut.E(), rep.rho_tested, opts.count, rng);
  const Matrix EPE = aut.E().transpose() * cert.P * aut.E();

  for (const Vector& x0 : xs) {
    SampleRecord rec;
    rec.x0 = x0;
    const double v0 = x0.dot(EPE * x0);
    IntegrateOptions io;
    io.rtol = opts.rtol;
    io.atol = opts.atol;
    io.convergence_tol = opts.convergence_tol;
    io.divergence_ceiling = opts.divergence_ceiling;
    io.output_times = {0.0};
    io.observer = [&](double, const Vector& x) {
      rec.v_growth = std::max(rec.v_growth, x.dot(EPE * x) / v0);
      return true;
    };
    try {
      const Trajectory tr = integrate(aut, x0, InputSignal{}, 0.0, rep.horizon, io);
      rec.final_time = tr.final_time;
      switch (tr.status) {
        case TerminalStatus::ConvergedToZero: rec.outcome = SampleOutcome::Converged; break;
        case TerminalStatus::Diverged: rec.outcome = SampleOutcome::Diverged; break;
        case TerminalStatus::HorizonReached:
          rec.outcome = SampleOutcome::Undecided;
          rec.note = "horizon reached";
          break;
      }
    } catch (const Error& e) {
      rec.outcome = SampleOutcome::Undecided;
      rec.note = e.what();
    }
    ++rep.samples;
    if (rec.outcome == SampleOutcome::Converged) ++rep.converged;
    if (rec.outcome == SampleOutcome::Diverged) ++rep.diverged;
    if (rec.outcome == SampleOutcome::Undecided) ++rep.undecided;
    rep.worst_v_growth = std::max(rep.worst_v_growth, rec.v_growth);
    if (opts.keep_records) rep.records.push_back(std::move(rec));
  }
  return rep;
}

TightnessReport probe_tightness(const QBSystem& sys, const LyapunovCertificate& cert,
                                double rho_star, const std::vector<double>& factors,
                                const ValidateOptions& opts) {
  TightnessReport out;
  ValidateOptions o = opts;
  o.radius_factor = 1.0;
  for (double f : factors) {
    out.factors.push_back(f);
    out.reports.push_back(validate_estimate(sys, cert, f * rho_star, o));
    if (out.reports.back().diverged > 0 &&
        (out.first_divergence_factor < 0.0 || f < out.first_divergence_factor))
      out.first_divergence_factor = f;
  }
  return out;
}

}  // namespace qbstab
