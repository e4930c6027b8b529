#include "qbstab/estimates.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

#include <Eigen/SVD>

namespace qbstab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

Index pair_index(Index p, Index q, Index n) { return p * (2 * n - p - 1) / 2 + (q - p - 1); }

// Q_f with Q_f^T Q_f unchanged and shape n x n.
Matrix square_qf(const Matrix& Q_f, Index n, std::vector<std::string>* warnings) {
  if (Q_f.cols() != n) throw InvalidCertificate("certificate: Q_f must have n columns");
  if (Q_f.rows() < n) {
    std::ostringstream os;
    os << "certificate: Q_f has " << Q_f.rows() << " rows < n = " << n
       << ", so Q = Q_f^T Q_f is singular";
    throw InvalidCertificate(os.str());
  }
  if (Q_f.rows() == n) return Q_f;
  if (warnings) warnings->push_back("Q_f is rectangular; replaced by the triangular factor of its QR");
  return la::qr(Q_f).R;
}

double sigma_min(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> s(M);
  return s.singularValues()(s.singularValues().size() - 1);
}

Vector project_box(Vector mu, double bound) { return mu.cwiseMax(-bound).cwiseMin(bound); }

}  // namespace

// --- MuParametrization ---------------------------------------------------------

MuParametrization::MuParametrization(Index n) : n_(n) {
  detail::require(n >= 0, "MuParametrization: negative dimension");
}

Index MuParametrization::index(Index row, Index p, Index q) const {
  detail::require(row >= 0 && row < n_ && p >= 0 && p < q && q < n_,
                  "MuParametrization: need 0 <= row < n and 0 <= p < q < n");
  return row * (n_ * (n_ - 1) / 2) + pair_index(p, q, n_);
}

MuParametrization::Generator MuParametrization::generator(Index k) const {
  detail::require(k >= 0 && k < size(), "MuParametrization: index out of range");
  const Index pairs = n_ * (n_ - 1) / 2;
  const Index row = k / pairs;
  Index rem = k % pairs;
  Index p = 0;
  while (rem >= n_ - p - 1) {
    rem -= n_ - p - 1;
    ++p;
  }
  return {row, p, p + 1 + rem};
}

std::vector<Matrix> MuParametrization::skew_matrices(const Vector& mu) const {
  detail::require(mu.size() == size(), "MuParametrization: mu has wrong length");
  std::vector<Matrix> S(n_, Matrix::Zero(n_, n_));
  Index k = 0;
  for (Index r = 0; r < n_; ++r)
    for (Index p = 0; p < n_; ++p)
      for (Index q = p + 1; q < n_; ++q, ++k) {
        S[p](r, q) += mu(k);
        S[q](r, p) -= mu(k);
      }
  return S;
}

// --- certificates ----------------------------------------------------------------

double certificate_residual(const QBSystem& sys, const LyapunovCertificate& cert) {
  detail::require(cert.P.rows() == sys.n() && cert.P.cols() == sys.n(),
                  "certificate: P has wrong shape");
  const Matrix Q = cert.Q.size() > 0 ? cert.Q : Matrix(cert.Q_f.transpose() * cert.Q_f);
  const Matrix APE = sys.A().transpose() * cert.P * sys.E();
  const Matrix R = APE + APE.transpose() + Q;
  const double qn = Q.norm();
  return qn > 0.0 ? R.norm() / qn : R.norm();
}

LyapunovCertificate lyapunov_certificate(const QBSystem& sys) {
  return la::solve_lyapunov(sys.A(), sys.E(), Matrix::Identity(sys.n(), sys.n()));
}

LyapunovCertificate lyapunov_certificate(const QBSystem& sys, const Matrix& Q_f) {
  return la::solve_lyapunov(sys.A(), sys.E(), Q_f);
}

// --- RadiusProblem ------------------------------------------------------------------

RadiusProblem::RadiusProblem(const QBSystem& sys, const LyapunovCertificate& cert,
                             const CertificateCheck& check)
    : n_(sys.n()), param_(sys.n()), cert_(cert), E_(sys.E()), A_(sys.A()), H_(sys.H()) {
  const Index n = n_;
  if (cert.P.rows() != n || cert.P.cols() != n || cert.P_f.rows() != n || cert.P_f.cols() != n)
    throw InvalidCertificate("certificate: P and P_f must be n x n");
  const Matrix Qf = square_qf(cert.Q_f, n, &warnings_);
  cert_.Q_f = Qf;
  if (cert_.Q.size() == 0) cert_.Q = Qf.transpose() * Qf;

  residual_ = certificate_residual(sys, cert_);
  if (!(residual_ <= check.max_residual)) {
    std::ostringstream os;
    os << "certificate residual " << residual_ << " exceeds " << check.max_residual;
    if (check.allow_inexact || cert.source == "lqg-sigma") {
      warnings_.push_back(os.str() + " (accepted; v may not decrease along the linear flow)");
    } else {
      throw InvalidCertificate(os.str());
    }
  }
  const double pnorm = cert_.P.norm();
  if ((cert_.P_f.transpose() * cert_.P_f - cert_.P).norm() > 1e-8 * std::max(pnorm, 1e-300))
    throw InvalidCertificate("certificate: P_f^T P_f does not reproduce P");

  if (n == 0) return;
  const Matrix W = cert_.P_f * E_;
  Eigen::FullPivLU<Matrix> wlu(W);
  if (!wlu.isInvertible()) throw InvalidCertificate("certificate: P_f E is singular");
  Winv_ = wlu.inverse();
  sigma_min_qf_ = sigma_min(Qf);
  Eigen::FullPivLU<Matrix> qlu(Qf);
  if (!qlu.isInvertible() || sigma_min_qf_ <= n * kEps * la::spectral_norm(Qf))
    throw InvalidCertificate("certificate: Q_f is rank deficient");
  Qinv_ = qlu.inverse();

  PE_ = cert_.P * E_;
  EPE_ = E_.transpose() * PE_;
  slices_ = sys.slices();
  h_norm_ = la::spectral_norm(H_);
}

Matrix RadiusProblem::G(const Vector& mu) const {
  const Index n = n_;
  const auto S = param_.skew_matrices(mu);
  Matrix out(n * n, n);
  for (Index i = 0; i < n; ++i) {
    const Matrix MPE = (slices_.K[i] + S[i]).transpose() * PE_;
    out.middleRows(i * n, n) = MPE + MPE.transpose();
  }
  return out;
}

Matrix RadiusProblem::J(const Vector& mu) const {
  const Index n = n_;
  const Matrix Gm = G(mu);
  // column i holds vec(Q_f^{-T} G_i Q_f^{-1})
  Matrix Gh(n * n, n);
  for (Index i = 0; i < n; ++i) {
    const Matrix blk = Qinv_.transpose() * Gm.middleRows(i * n, n) * Qinv_;
    Gh.col(i) = Eigen::Map<const Vector>(blk.data(), n * n);
  }
  const Matrix Jflat = Gh * Winv_;
  Matrix out(n * n, n);
  for (Index a = 0; a < n; ++a)
    out.middleRows(a * n, n) = Eigen::Map<const Matrix>(Jflat.col(a).data(), n, n);
  return out;
}

Vector RadiusProblem::adjoint(const Matrix& Y) const {
  const Index n = n_;
  Matrix Yh(n * n, n);
  for (Index a = 0; a < n; ++a) {
    const Matrix blk = Qinv_ * Y.middleRows(a * n, n) * Qinv_.transpose();
    Yh.col(a) = Eigen::Map<const Vector>(blk.data(), n * n);
  }
  const Matrix Zflat = Yh * Winv_.transpose();
  std::vector<Matrix> R(n);
  for (Index i = 0; i < n; ++i) {
    const Eigen::Map<const Matrix> Z(Zflat.col(i).data(), n, n);
    R[i] = PE_ * (Z + Z.transpose());
  }
  Vector grad(param_.size());
  Index k = 0;
  for (Index r = 0; r < n; ++r)
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q, ++k) grad(k) = R[p](r, q) - R[q](r, p);
  return grad;
}

double RadiusProblem::alpha(const Vector& mu, Vector* grad) const {
  if (n_ == 0) return 0.0;
  const Matrix Jm = J(mu);
  if (!grad) {
    Eigen::BDCSVD<Matrix> s(Jm);
    return s.singularValues()(0);
  }
  Eigen::BDCSVD<Matrix> s(Jm, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix Y = s.matrixU().col(0) * s.matrixV().col(0).transpose();
  *grad = adjoint(Y);
  return s.singularValues()(0);
}

double RadiusProblem::smoothed_alpha(const Vector& mu, double t, Vector* grad,
                                     double* alpha_out) const {
  const Matrix Jm = J(mu);
  Eigen::BDCSVD<Matrix> s(Jm, grad ? (Eigen::ComputeThinU | Eigen::ComputeThinV) : 0);
  const Vector& sv = s.singularValues();
  const double top = sv(0);
  if (alpha_out) *alpha_out = top;
  const Vector w_raw = (t * (sv.array() - top)).exp().matrix();
  const double total = w_raw.sum();
  if (grad) {
    const Vector w = w_raw / total;
    const Matrix Y = s.matrixU() * w.asDiagonal() * s.matrixV().transpose();
    *grad = adjoint(Y);
  }
  return top + std::log(total) / t;
}

double RadiusProblem::v(const Vector& x) const { return x.dot(EPE_ * x); }

double RadiusProblem::vdot(const Vector& x) const {
  Vector f = A_ * x;
  const Index n = n_;
  for (Index c = 0; c < H_.outerSize(); ++c) {
    const double w = x(c / n) * x(c % n);
    if (w == 0.0) continue;
    for (SparseMatrix::InnerIterator it(H_, c); it; ++it) f(it.row()) += it.value() * w;
  }
  return 2.0 * (PE_ * x).dot(f);
}

double RadiusProblem::vdot_via_J(const Vector& mu, const Vector& x) const {
  const Index n = n_;
  const Vector y = cert_.Q_f * x;
  const Vector z = cert_.P_f * (E_ * x);
  const Matrix Jm = J(mu);
  Matrix Mz = Matrix::Zero(n, n);
  for (Index a = 0; a < n; ++a) Mz += z(a) * Jm.middleRows(a * n, n);
  return -y.squaredNorm() + y.dot(Mz * y);
}

// --- free functions ---------------------------------------------------------------------

namespace {

CertificateCheck permissive() {
  CertificateCheck c;
  c.allow_inexact = true;
  return c;
}

}  // namespace

double analytic_radius(const QBSystem& sys, const LyapunovCertificate& cert,
                       const CertificateCheck& check) {
  const double res = certificate_residual(sys, cert);
  if (!(res <= check.max_residual) && !check.allow_inexact && cert.source != "lqg-sigma") {
    std::ostringstream os;
    os << "analytic_radius: certificate residual " << res << " exceeds " << check.max_residual;
    throw InvalidCertificate(os.str());
  }
  const double hn = la::spectral_norm(sys.H());
  if (hn == 0.0) return kInf;
  const Matrix Qf = square_qf(cert.Q_f, sys.n(), nullptr);
  const double s = sigma_min(Qf);
  return s * s / (2.0 * hn * std::sqrt(la::spectral_norm(cert.P)));
}

double analytic_ball_radius(const QBSystem& sys, const LyapunovCertificate& cert) {
  const double hn = la::spectral_norm(sys.H());
  if (hn == 0.0) return kInf;
  const Matrix Qf = square_qf(cert.Q_f, sys.n(), nullptr);
  const double s = sigma_min(Qf);
  return s * s / (2.0 * la::spectral_norm(sys.E()) * la::spectral_norm(cert.P) * hn);
}

Matrix build_G(const QBSystem& sys, const LyapunovCertificate& cert, const Vector& mu) {
  return RadiusProblem(sys, cert, permissive()).G(mu);
}

Matrix build_J(const QBSystem& sys, const LyapunovCertificate& cert, const Vector& mu) {
  return RadiusProblem(sys, cert, permissive()).J(mu);
}

double vdot(const QBSystem& sys, const LyapunovCertificate& cert, const Vector& x) {
  detail::require(x.size() == sys.n(), "vdot: dimension mismatch");
  return RadiusProblem(sys, cert, permissive()).vdot(x);
}

double vdot_via_J(const QBSystem& sys, const LyapunovCertificate& cert, const Vector& mu,
                  const Vector& x) {
  detail::require(x.size() == sys.n(), "vdot_via_J: dimension mismatch");
  return RadiusProblem(sys, cert, permissive()).vdot_via_J(mu, x);
}

AlphaEvaluation objective_alpha(const QBSystem& sys, const LyapunovCertificate& cert,
                                const Vector& mu) {
  RadiusProblem prob(sys, cert, permissive());
  AlphaEvaluation out;
  out.alpha = prob.alpha(mu, &out.subgradient);
  return out;
}

// --- optimizer --------------------------------------------------------------------------

namespace {

struct RestartState {
  Vector mu;
  double best_alpha = kInf;
  Vector best_mu;
  int iterations = 0;
  std::vector<double> history;

  void record(const Vector& m, double a) {
    if (a < best_alpha) {
      best_alpha = a;
      best_mu = m;
    }
    history.push_back(best_alpha);
  }
};

// Limited-memory BFGS on the smoothed objective with Armijo backtracking and box projection.
void lbfgs_stage(const RadiusProblem& prob, RestartState& st, double t, double bound,
                 int budget) {
  constexpr int kMemory = 10;
  std::deque<std::pair<Vector, Vector>> mem;
  Vector g;
  double a_true = 0.0;
  double f = prob.smoothed_alpha(st.mu, t, &g, &a_true);
  for (int it = 0; it < budget; ++it) {
    // two-loop recursion
    Vector d = -g;
    std::vector<double> coef(mem.size());
    for (Index j = static_cast<Index>(mem.size()) - 1; j >= 0; --j) {
      const auto& [s, y] = mem[j];
      coef[j] = s.dot(d) / y.dot(s);
      d -= coef[j] * y;
    }
    if (!mem.empty()) {
      const auto& [s, y] = mem.back();
      d *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t j = 0; j < mem.size(); ++j) {
      const auto& [s, y] = mem[j];
      const double b = y.dot(d) / y.dot(s);
      d += (coef[j] - b) * s;
    }
    if (!(g.dot(d) < 0.0)) {
      mem.clear();
      d = -g;
    }
    const double gn2 = g.squaredNorm();
    if (gn2 == 0.0) break;
    double step = mem.empty() ? 0.1 * f / gn2 : 1.0;

    Vector trial_g;
    double trial_f = kInf, trial_a = 0.0;
    Vector trial;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      trial = project_box(st.mu + step * d, bound);
      trial_f = prob.smoothed_alpha(trial, t, &trial_g, &trial_a);
      if (trial_f <= f + 1e-4 * g.dot(trial - st.mu)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++st.iterations;
    if (!accepted) {
      st.record(st.mu, a_true);
      if (mem.empty()) break;
      mem.clear();
      continue;
    }
    const Vector s = trial - st.mu;
    const Vector y = trial_g - g;
    const double rel_decrease = (f - trial_f) / std::max(std::abs(f), 1e-300);
    st.mu = trial;
    g = trial_g;
    f = trial_f;
    a_true = trial_a;
    st.record(st.mu, a_true);
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      mem.emplace_back(s, y);
      if (static_cast<int>(mem.size()) > kMemory) mem.pop_front();
    }
    if (rel_decrease < 1e-10 || s.norm() <= 1e-12 * (1.0 + st.mu.norm())) break;
  }
}

void subgradient_polish(const RadiusProblem& prob, RestartState& st, double bound, int iters) {
  Vector mu = st.best_mu;
  Vector g;
  for (int k = 1; k <= iters; ++k) {
    const double a = prob.alpha(mu, &g);
    st.record(mu, a);
    ++st.iterations;
    const double gn2 = g.squaredNorm();
    if (gn2 == 0.0) break;
    const double target = st.best_alpha * (1.0 - 0.05 / k);
    mu = project_box(mu - ((a - target) / gn2) * g, bound);
  }
}

// Conjugate gradients on min ||J(mu)||_F^2 starting from st.mu; the Frobenius norm bounds
// alpha from above and its minimizer is a cheap, well-scaled starting point.
void frobenius_phase(const RadiusProblem& prob, RestartState& st, double bound, int iters) {
  const Index d = st.mu.size();
  const Matrix J0 = prob.J(Vector::Zero(d));
  auto normal = [&](const Vector& p) { return prob.adjoint(prob.J(p) - J0); };
  Vector r = -prob.adjoint(prob.J(st.mu));
  Vector p = r;
  double rr = r.squaredNorm();
  const double r0 = rr;
  Vector mu = st.mu;
  for (int k = 0; k < iters && rr > 1e-20 * r0; ++k) {
    const Vector Ap = normal(p);
    const double curv = p.dot(Ap);
    if (!(curv > 0.0)) break;
    const double a = rr / curv;
    mu += a * p;
    r -= a * Ap;
    const double rn = r.squaredNorm();
    p = r + (rn / rr) * p;
    rr = rn;
  }
  if (mu.cwiseAbs().maxCoeff() > bound) {
    // the unconstrained minimizer leaves the box: projected gradient with Barzilai-Borwein steps
    mu = project_box(mu, bound);
    Matrix Jm = prob.J(mu);
    Vector g = prob.adjoint(Jm);
    double f = 0.5 * Jm.squaredNorm();
    Vector best = mu;
    double best_f = f;
    double step = 1.0 / std::max(normal(g).norm() / std::max(g.norm(), 1e-300), 1e-300);
    for (int k = 0; k < iters; ++k) {
      const Vector next = project_box(mu - step * g, bound);
      const Vector sk = next - mu;
      if (sk.norm() <= 1e-14 * (1.0 + mu.norm())) break;
      Jm = prob.J(next);
      const Vector gn = prob.adjoint(Jm);
      const Vector yk = gn - g;
      const double sy = sk.dot(yk);
      step = sy > 0.0 ? sk.squaredNorm() / sy : 2.0 * step;
      mu = next;
      g = gn;
      f = 0.5 * Jm.squaredNorm();
      if (f < best_f) {
        best_f = f;
        best = mu;
      }
    }
    mu = best;
  }
  const double a = prob.alpha(mu);
  if (a < st.best_alpha) st.mu = mu;
  st.record(mu, a);
}

void run_restart(const RadiusProblem& prob, RestartState& st, const OptimizeOptions& opts) {
  const double n = static_cast<double>(prob.n());
  if (opts.frobenius_iter > 0) {
    st.record(st.mu, prob.alpha(st.mu));
    frobenius_phase(prob, st, opts.mu_bound, opts.frobenius_iter);
  }
  double a0 = prob.alpha(st.mu);
  st.record(st.mu, a0);
  if (a0 == 0.0) return;
  double t = 10.0 / a0;
  double prev_alpha = a0;
  Vector prev_mu = st.mu;
  for (int stage = 0; stage < 12 && st.iterations < opts.max_iter; ++stage) {
    lbfgs_stage(prob, st, t, opts.mu_bound, opts.max_iter - st.iterations);
    const double a = prob.alpha(st.mu);
    st.record(st.mu, a);
    const double gap = std::log(n) / t;
    const double rel_dec = (prev_alpha - a) / prev_alpha;
    const double rel_step = (st.mu - prev_mu).norm() / std::max(1.0, prev_mu.norm());
    if (gap <= opts.tol_fun * a && (rel_dec <= opts.tol_fun || rel_step <= opts.tol_x * opts.tol_fun))
      break;
    prev_alpha = a;
    prev_mu = st.mu;
    t *= 10.0;
  }
  subgradient_polish(prob, st, opts.mu_bound, opts.polish_iter);
}

}  // namespace

StabilityEstimate optimize_radius(const QBSystem& sys, const LyapunovCertificate& cert,
                                  const OptimizeOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  RadiusProblem prob(sys, cert, opts.check);
  StabilityEstimate est;
  est.certificate = prob.certificate();
  est.certificate_residual = prob.residual();
  est.warnings = prob.warnings();
  est.rho_analytic = prob.zero_quadratic()
                         ? kInf
                         : prob.sigma_min_qf() * prob.sigma_min_qf() /
                               (2.0 * prob.h_norm() * std::sqrt(la::spectral_norm(cert.P)));
  est.ball_radius = prob.zero_quadratic()
                        ? kInf
                        : prob.sigma_min_qf() * prob.sigma_min_qf() /
                              (2.0 * la::spectral_norm(sys.E()) * la::spectral_norm(cert.P) *
                               prob.h_norm());
  if (sys.n() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sys.E().transpose() * cert.P * sys.E(),
                                             Eigen::EigenvaluesOnly);
    est.rigorous_radius = est.ball_radius * std::sqrt(std::max(0.0, es.eigenvalues()(0)));
  }

  const Index d = prob.parametrization().size();
  if (prob.zero_quadratic()) {
    est.rho_star = kInf;
    est.alpha_star = 0.0;
    est.mu_star = Vector::Zero(d);
  } else if (d == 0) {
    est.mu_star = Vector::Zero(0);
    est.alpha_star = prob.alpha(est.mu_star);
    est.rho_star = 1.0 / est.alpha_star;
    est.objective_history.push_back(est.alpha_star);
    est.restart_alphas.push_back(est.alpha_star);
    est.restarts_used = 1;
  } else {
    detail::require(opts.restarts >= 1, "optimize_radius: need at least one restart");
    est.alpha_star = kInf;
    for (int r = 0; r < opts.restarts; ++r) {
      std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(r));
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      RestartState st;
      st.mu = Vector::NullaryExpr(d, [&]() { return unif(rng); });
      st.mu = project_box(st.mu, opts.mu_bound);
      run_restart(prob, st, opts);
      est.objective_history.insert(est.objective_history.end(), st.history.begin(),
                                   st.history.end());
      est.restart_alphas.push_back(st.best_alpha);
      est.iterations += st.iterations;
      if (st.best_alpha < est.alpha_star) {
        est.alpha_star = st.best_alpha;
        est.mu_star = st.best_mu;
      }
      ++est.restarts_used;
    }
    if (!std::isfinite(est.alpha_star))
      throw ConvergenceError("optimize_radius: every restart failed to produce a finite objective");
    est.rho_star = est.alpha_star > 0.0 ? 1.0 / est.alpha_star : kInf;
  }
  est.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return est;
}

}  // namespace qbstab
