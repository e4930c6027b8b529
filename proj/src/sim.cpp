#include "qbstab/sim.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qbstab {

std::string to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::HorizonReached: return "horizon-reached";
    case TerminalStatus::ConvergedToZero: return "converged-to-zero";
    case TerminalStatus::Diverged: return "diverged";
  }
  return "unknown";
}

namespace {

const double kGamma = 2.0 - std::sqrt(2.0);
const double kD = kGamma / 2.0;
const double kW = std::sqrt(2.0) / 4.0;
const double kB0 = (1.0 - kW) / 3.0;
const double kB1 = (3.0 * kW + 1.0) / 3.0;
const double kB2 = kD / 3.0;
// Local error target as a fraction of the user tolerance; keeps the global error near it.
const double kTolScale = 0.05;

class Stepper {
 public:
  Stepper(const QBSystem& sys, const IntegrateOptions& opts, Trajectory& stats)
      : sys_(sys), opts_(opts), stats_(stats), sparse_(sys.n() > 64) {
    if (sparse_) E_sparse_ = to_sparse(sys.E());
  }

  Vector E_times(const Vector& x) const { return sys_.apply_mass(x); }

  void refresh_jacobian(const Vector& x, const Vector& u) {
    J_ = sys_.force_jacobian(x, u);
    if (sparse_) J_sparse_ = to_sparse(J_);
    fresh_ = true;
    factored_h_ = -1.0;
    ++stats_.jacobian_evaluations;
  }
  bool fresh() const { return fresh_; }
  void mark_stale() { fresh_ = false; }

  void factor(double h) {
    if (factored_h_ == h) return;
    if (sparse_) {
      const SparseMatrix Ms = E_sparse_ - (kD * h) * J_sparse_;
      sparse_lu_.compute(Ms);
      if (sparse_lu_.info() != Eigen::Success) throw FactorizationError("integrate: singular Newton matrix");
    } else {
      Matrix M = -kD * h * J_;
      if (sys_.identity_mass())
        M.diagonal().array() += 1.0;
      else
        M += sys_.E();
      dense_lu_.compute(M);
    }
    factored_h_ = h;
    ++stats_.factorizations;
  }

  Vector solve(const Vector& b) {
    if (sparse_) return sparse_lu_.solve(b);
    return dense_lu_.solve(b);
  }

  double scaled_norm(const Vector& v, const Vector& ref) const {
    double worst = 0.0;
    for (Index i = 0; i < v.size(); ++i)
      worst = std::max(worst, std::abs(v(i)) / (opts_.atol + opts_.rtol * std::abs(ref(i))));
    return worst;
  }

  // Solves E z - d h force(z, u) = rhs starting from z.
  bool newton(Vector& z, const Vector& rhs, const Vector& u, double h, int* iters) {
    double prev = 0.0;
    for (int k = 0; k < 8; ++k) {
      const Vector res = E_times(z) - kD * h * sys_.force(z, u) - rhs;
      const Vector dz = solve(res);
      z -= dz;
      ++stats_.newton_iterations;
      *iters = k + 1;
      if (!z.allFinite()) return false;
      const double nrm = scaled_norm(dz, z);
      if (nrm <= 1e-3) return true;
      if (k > 0) {
        const double theta = nrm / prev;
        if (theta >= 0.9) return false;
        if (theta / (1.0 - theta) * nrm <= 0.03) return true;
      }
      prev = nrm;
    }
    return false;
  }

 private:
  const QBSystem& sys_;
  const IntegrateOptions& opts_;
  Trajectory& stats_;
  bool sparse_;
  Matrix J_;
  SparseMatrix J_sparse_, E_sparse_;
  bool fresh_ = false;
  double factored_h_ = -1.0;
  Eigen::PartialPivLU<Matrix> dense_lu_;
  Eigen::SparseLU<SparseMatrix> sparse_lu_;
};

struct Recorder {
  std::vector<double> t;
  std::vector<Vector> x, xd;
  void push(double ti, const Vector& xi, const Vector& di) {
    t.push_back(ti);
    x.push_back(xi);
    xd.push_back(di);
  }
};

}  // namespace

Trajectory integrate(const QBSystem& sys, const Vector& x0, const InputSignal& u, double tf,
                     const IntegrateOptions& opts) {
  return integrate(sys, x0, u, 0.0, tf, opts);
}

Trajectory integrate(const QBSystem& sys, const Vector& x0, const InputSignal& u, double t0,
                     double tf, const IntegrateOptions& opts) {
  const Index n = sys.n();
  detail::require(x0.size() == n, "integrate: x0 has wrong dimension");
  if (!x0.allFinite()) throw Error("integrate: x0 is not finite");
  if (!(tf > t0)) throw Error("integrate: need tf > t0");

  Trajectory traj;
  Stepper stepper(sys, opts, traj);
  Recorder rec;

  std::vector<double> ends;
  for (double b : opts.breakpoints)
    if (b > t0 && b < tf) ends.push_back(b);
  std::sort(ends.begin(), ends.end());
  ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
  ends.push_back(tf);

  const bool dense_out = !opts.output_times.empty();
  std::size_t out_idx = 0;
  const double x0_norm = x0.norm();

  // Input sampled strictly inside the segment so piecewise constant signals are
  // read on the correct side of each breakpoint.
  auto input_at = [&](double s, double seg_start, double seg_end) -> Vector {
    if (sys.m() == 0) return Vector();
    if (!u) return Vector::Zero(sys.m());
    const double margin = 1e-6 * (seg_end - seg_start);
    s = std::clamp(s, seg_start + margin, seg_end - margin);
    Vector v = u(s);
    detail::require(v.size() == sys.m(), "integrate: input has wrong dimension");
    return v;
  };

  double t = t0;
  Vector y = x0;
  Vector uy = input_at(t0, t0, ends.front());
  Vector F0 = sys.force(y, uy);
  Vector yd = sys.solve_mass(F0);

  auto record_initial = [&]() {
    if (!dense_out) {
      rec.push(t, y, yd);
      return;
    }
    while (out_idx < opts.output_times.size() && opts.output_times[out_idx] <= t0) {
      if (opts.output_times[out_idx] == t0) rec.push(t0, y, yd);
      ++out_idx;
    }
  };
  record_initial();

  auto finish = [&](TerminalStatus status) {
    traj.status = status;
    traj.final_time = t;
    traj.final_state = y;
    traj.t = rec.t;
    traj.X.resize(n, static_cast<Index>(rec.t.size()));
    traj.Xdot.resize(n, static_cast<Index>(rec.t.size()));
    for (std::size_t k = 0; k < rec.t.size(); ++k) {
      traj.X.col(static_cast<Index>(k)) = rec.x[k];
      traj.Xdot.col(static_cast<Index>(k)) = rec.xd[k];
    }
    return traj;
  };

  if (opts.convergence_tol > 0.0 && x0_norm == 0.0) return finish(TerminalStatus::ConvergedToZero);

  double h = opts.h0;
  if (h <= 0.0) {
    const Vector ref = y.cwiseAbs();
    double d0 = 0.0, d1 = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double sc = opts.atol + opts.rtol * ref(i);
      d0 = std::max(d0, std::abs(y(i)) / sc);
      d1 = std::max(d1, std::abs(yd(i)) / sc);
    }
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, 0.01 * (tf - t0));
  }
  if (opts.h_max > 0.0) h = std::min(h, opts.h_max);

  double seg_start = t0;
  for (double seg_end : ends) {
    uy = input_at(t, seg_start, seg_end);
    F0 = sys.force(y, uy);
    yd = sys.solve_mass(F0);
    stepper.mark_stale();
    bool need_jac = true;

    while (t < seg_end) {
      if (traj.steps + traj.rejected >= opts.max_steps) {
        std::ostringstream os;
        os << "integrate: step limit reached at t = " << t;
        throw ConvergenceError(os.str());
      }
      const double h_min = 1e-14 * std::max(1.0, std::abs(t)) * 16.0;
      bool last = false;
      double hs = h;
      if (t + hs >= seg_end || seg_end - (t + hs) < 1e-10 * hs) {
        hs = seg_end - t;
        last = true;
      }
      if (need_jac) {
        stepper.refresh_jacobian(y, uy);
        need_jac = false;
      }
      stepper.factor(hs);

      const double ts = t + kGamma * hs;
      const Vector us = input_at(ts, seg_start, seg_end);
      const Vector u1 = input_at(last ? seg_end : t + hs, seg_start, seg_end);
      const Vector Ey = stepper.E_times(y);

      Vector z = y + kGamma * hs * yd;
      int it1 = 0, it2 = 0;
      bool ok = stepper.newton(z, Ey + kD * hs * F0, us, hs, &it1);
      Vector Fz, y1, F1;
      if (ok) {
        Fz = sys.force(z, us);
        y1 = y + (z - y) / kGamma;
        ok = stepper.newton(y1, Ey + kW * hs * (F0 + Fz), u1, hs, &it2);
      }
      if (!ok) {
        ++traj.rejected;
        if (!stepper.fresh()) {
          need_jac = true;
          continue;
        }
        h = 0.25 * hs;
        if (h < h_min) {
          std::ostringstream os;
          os << "integrate: Newton iteration failed at minimum step size at t = " << t;
          throw ConvergenceError(os.str());
        }
        continue;
      }
      F1 = sys.force(y1, u1);
      const Vector errv =
          stepper.solve(hs * (kB0 * F0 + kB1 * Fz + kB2 * F1) - stepper.E_times(y1 - y));
      double err = 0.0;
      for (Index i = 0; i < n; ++i)
        err = std::max(err, std::abs(errv(i)) /
                                (opts.atol + opts.rtol * std::max(std::abs(y(i)), std::abs(y1(i)))));
      err /= kTolScale;
      if (!std::isfinite(err) || !y1.allFinite()) err = 1e10;

      if (err > 1.0) {
        ++traj.rejected;
        if (y1.allFinite() && y1.norm() > opts.divergence_ceiling && y.norm() > 1e-3 * opts.divergence_ceiling) {
          t += hs;
          y = y1;
          return finish(TerminalStatus::Diverged);
        }
        h = hs * std::max(0.2, 0.9 * std::pow(err, -1.0 / 3.0));
        if (h < h_min) {
          std::ostringstream os;
          os << "integrate: step size underflow at t = " << t;
          throw ConvergenceError(os.str());
        }
        continue;
      }

      // accepted
      ++traj.steps;
      const double t_new = last ? seg_end : t + hs;
      const Vector yd1 = sys.solve_mass(F1);
      if (dense_out) {
        while (out_idx < opts.output_times.size() && opts.output_times[out_idx] <= t_new) {
          const double s = opts.output_times[out_idx];
          if (s > t) {
            const double th = (s - t) / hs;
            const double th2 = th * th, th3 = th2 * th;
            const Vector xs = (2 * th3 - 3 * th2 + 1) * y + (th3 - 2 * th2 + th) * hs * yd +
                              (-2 * th3 + 3 * th2) * y1 + (th3 - th2) * hs * yd1;
            const Vector ds = ((6 * th2 - 6 * th) / hs) * y + (3 * th2 - 4 * th + 1) * yd +
                              ((-6 * th2 + 6 * th) / hs) * y1 + (3 * th2 - 2 * th) * yd1;
            rec.push(s, s == t_new ? y1 : xs, s == t_new ? yd1 : ds);
          }
          ++out_idx;
        }
      }
      t = t_new;
      y = y1;
      F0 = F1;
      yd = yd1;
      uy = u1;
      if (!dense_out) rec.push(t, y, yd);
      if (it1 + it2 > 6) need_jac = true;
      stepper.mark_stale();

      const double fac = err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -1.0 / 3.0)));
      if (!last && !(fac >= 1.0 && fac <= 1.5)) h = hs * fac;
      if (last) h = std::max(h, hs * fac);
      if (opts.h_max > 0.0) h = std::min(h, opts.h_max);

      const double nrm = y.norm();
      if (!y.allFinite() || nrm > opts.divergence_ceiling) return finish(TerminalStatus::Diverged);
      if (opts.convergence_tol > 0.0 && nrm <= opts.convergence_tol * x0_norm)
        return finish(TerminalStatus::ConvergedToZero);
      if (opts.observer && !opts.observer(t, y)) return finish(TerminalStatus::HorizonReached);
    }
    seg_start = seg_end;
  }
  return finish(TerminalStatus::HorizonReached);
}

double SnapshotSet::uniform_step() const {
  if (t.size() < 2) throw Error("snapshots: need at least two time points");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double step = t[k] - t[k - 1];
    if (!(step > 0.0)) throw Error("snapshots: time grid is not strictly increasing");
    if (std::abs(step - dt) > 1e-6 * dt) throw Error("snapshots: time grid is not uniform");
  }
  return dt;
}

SnapshotSet sample_snapshots(const Trajectory& traj, double every, const InputSignal& u) {
  if (!(every > 0.0)) throw Error("sample_snapshots: interval must be positive");
  if (traj.t.empty()) throw Error("sample_snapshots: empty trajectory");
  const double t0 = traj.t.front(), t1 = traj.t.back();
  const double span = t1 - t0;
  const auto count = static_cast<Index>(std::floor(span / every * (1.0 + 1e-12) + 1e-9)) + 1;

  SnapshotSet out;
  out.X.resize(traj.X.rows(), count);
  std::size_t seg = 0;
  for (Index k = 0; k < count; ++k) {
    double s = t0 + static_cast<double>(k) * every;
    if (k == count - 1 && std::abs(s - t1) <= 1e-9 * std::max(1.0, std::abs(t1))) s = t1;
    if (s > t1 + 1e-12 * std::max(1.0, std::abs(t1)))
      throw Error("sample_snapshots: sampling time outside the horizon");
    s = std::min(s, t1);
    out.t.push_back(s);
    while (seg + 1 < traj.t.size() && traj.t[seg + 1] < s) ++seg;
    if (seg + 1 >= traj.t.size() || traj.t[seg] == s) {
      out.X.col(k) = traj.X.col(static_cast<Index>(seg));
      continue;
    }
    const auto a = static_cast<Index>(seg), b = a + 1;
    const double h = traj.t[seg + 1] - traj.t[seg];
    const double th = (s - traj.t[seg]) / h;
    if (th >= 1.0) {
      out.X.col(k) = traj.X.col(b);
      continue;
    }
    const double th2 = th * th, th3 = th2 * th;
    out.X.col(k) = (2 * th3 - 3 * th2 + 1) * traj.X.col(a) + (th3 - 2 * th2 + th) * h * traj.Xdot.col(a) +
                   (-2 * th3 + 3 * th2) * traj.X.col(b) + (th3 - th2) * h * traj.Xdot.col(b);
  }
  if (u) {
    const Vector first = u(out.t.front());
    out.U.resize(first.size(), count);
    for (Index k = 0; k < count; ++k) out.U.col(k) = u(out.t[static_cast<std::size_t>(k)]);
  }
  return out;
}

SnapshotSet estimate_derivatives(const SnapshotSet& snap) {
  const Index K = snap.size();
  if (K < 5) throw Error("estimate_derivatives: need at least five snapshots");
  const double dt = snap.uniform_step();
  SnapshotSet out = snap;
  const Matrix& X = snap.X;
  out.Xdot.resize(X.rows(), K);
  const double s = 1.0 / (12.0 * dt);
  out.Xdot.col(0) = s * (-25 * X.col(0) + 48 * X.col(1) - 36 * X.col(2) + 16 * X.col(3) - 3 * X.col(4));
  out.Xdot.col(1) = s * (-3 * X.col(0) - 10 * X.col(1) + 18 * X.col(2) - 6 * X.col(3) + X.col(4));
  for (Index k = 2; k + 2 < K; ++k)
    out.Xdot.col(k) = s * (X.col(k - 2) - 8 * X.col(k - 1) + 8 * X.col(k + 1) - X.col(k + 2));
  const Index e = K - 1;
  out.Xdot.col(e - 1) =
      s * (3 * X.col(e) + 10 * X.col(e - 1) - 18 * X.col(e - 2) + 6 * X.col(e - 3) - X.col(e - 4));
  out.Xdot.col(e) =
      s * (25 * X.col(e) - 48 * X.col(e - 1) + 36 * X.col(e - 2) - 16 * X.col(e - 3) + 3 * X.col(e - 4));
  return out;
}

SnapshotSet interval_differences(const SnapshotSet& snap) {
  const Index K = snap.size();
  if (K < 2) throw Error("interval_differences: need at least two snapshots");
  const double dt = snap.uniform_step();
  const Index M = K - 1;
  SnapshotSet out;
  out.t.resize(static_cast<std::size_t>(M));
  for (Index k = 0; k < M; ++k) out.t[static_cast<std::size_t>(k)] = snap.t[static_cast<std::size_t>(k)] + 0.5 * dt;
  out.X = 0.5 * (snap.X.leftCols(M) + snap.X.rightCols(M));
  out.Xdot = (snap.X.rightCols(M) - snap.X.leftCols(M)) / dt;
  out.U = snap.U.cols() >= M ? Matrix(snap.U.leftCols(M)) : snap.U;
  return out;
}

InputSignal piecewise_constant(const Matrix& values, double dt, double t0) {
  detail::require(values.cols() > 0 && dt > 0.0, "piecewise_constant: need values and dt > 0");
  return [values, dt, t0](double t) -> Vector {
    auto k = static_cast<Index>(std::floor((t - t0) / dt + 1e-9));
    k = std::clamp<Index>(k, 0, values.cols() - 1);
    return values.col(k);
  };
}

}  // namespace qbstab
