#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qbstab/models.hpp"
#include "qbstab/qbsys.hpp"

namespace qbstab {

enum class TerminalStatus { HorizonReached, ConvergedToZero, Diverged };

std::string to_string(TerminalStatus s);

struct IntegrateOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  /// Initial step; 0 picks one from the initial derivative.
  double h0 = 0.0;
  double h_max = 0.0;  // 0: unbounded
  /// Divergence is declared when ||x||_2 exceeds this value.
  double divergence_ceiling = 1e8;
  /// Stop with ConvergedToZero once ||x||_2 <= convergence_tol * ||x0||_2; 0 disables.
  double convergence_tol = 0.0;
  /// Input discontinuities; integration restarts exactly at each one.
  std::vector<double> breakpoints;
  /// When non-empty, states are stored only at these (sorted) times via dense output.
  std::vector<double> output_times;
  long max_steps = 5'000'000;
  /// Called after every accepted step; returning false stops the integration.
  std::function<bool(double, const Vector&)> observer;
};

struct Trajectory {
  std::vector<double> t;
  Matrix X;     // N x (number of stored points)
  Matrix Xdot;  // time derivative at the stored points
  TerminalStatus status = TerminalStatus::HorizonReached;
  double final_time = 0.0;
  Vector final_state;

  long steps = 0;
  long rejected = 0;
  long newton_iterations = 0;
  long jacobian_evaluations = 0;
  long factorizations = 0;
};

/// Adaptive TR-BDF2 (trapezoidal stage followed by BDF2, L-stable, embedded third-order
/// error estimate) on E x' = force(x, u(t)). Newton with the matrix E - d h J.
/// Throws ConvergenceError when Newton fails at the minimum step size.
Trajectory integrate(const QBSystem& sys, const Vector& x0, const InputSignal& u, double t0,
                     double tf, const IntegrateOptions& opts = {});

Trajectory integrate(const QBSystem& sys, const Vector& x0, const InputSignal& u, double tf,
                     const IntegrateOptions& opts = {});

struct SnapshotSet {
  std::vector<double> t;
  Matrix X;
  Matrix U;
  Matrix Xdot;  // empty until estimated

  Index size() const { return static_cast<Index>(t.size()); }
  /// Spacing of a uniform grid; throws when the grid is not uniform.
  double uniform_step() const;
};

/// Cubic Hermite interpolation of a trajectory onto t0, t0 + every, ..., (within the horizon).
/// Exact at stored points. When u is given, U holds u at the snapshot times.
SnapshotSet sample_snapshots(const Trajectory& traj, double every, const InputSignal& u = {});

/// Fourth-order finite differences: five-point central stencil inside, one-sided
/// five-point stencils at the two first and two last columns.
SnapshotSet estimate_derivatives(const SnapshotSet& snap);

/// Difference quotients over each interval [t_k, t_k+1], paired with the interval midpoint
/// state and U.col(k). Suited to inputs held constant between snapshots. One column fewer.
SnapshotSet interval_differences(const SnapshotSet& snap);

/// Piecewise constant signal holding values.col(k) on [t0 + k dt, t0 + (k+1) dt).
InputSignal piecewise_constant(const Matrix& values, double dt, double t0 = 0.0);

}  // namespace qbstab
