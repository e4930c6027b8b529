#pragma once

#include <functional>
#include <string>

#include "qbstab/qbsys.hpp"

namespace qbstab {

using InputSignal = std::function<Vector(double)>;

struct BuiltModel {
  std::string name;
  QBSystem sys;
  Vector x0;
  /// Input used for the reference simulations; returns an empty vector when m = 0.
  InputSignal input;
  /// Q_f preferred for the Lyapunov certificate of this model; empty means Q = I.
  Matrix lyapunov_weight = Matrix();
};

struct BurgersFEMConfig {
  Index N = 101;
  double epsilon = 1e-3;
  Index m = 3;
  bool periodic = true;
};

struct FHNConfig {
  Index grid = 200;
  double L = 0.1;
  double c = 0.05;
  double gamma = 2.0;
  double h = 0.5;
  double epsilon = 0.015;
  /// a in the cubic -v^3 + a v^2 - 0.1 v.
  double quadratic = 0.1;
};

struct BurgersFDConfig {
  Index N = 128;
  double epsilon = 0.1;
  /// Test variant: periodic closure, no inputs.
  bool periodic = false;
};

/// Linear finite elements for z_t = eps z_xx - (z^2/2)_x + sum_k chi_k u_k on [0, 1].
/// Periodic: nodes k/N, k = 0..N-1. Otherwise homogeneous Dirichlet with N interior nodes.
BuiltModel build_burgers_fem(const BurgersFEMConfig& cfg = {});

/// Lifted FitzHugh-Nagumo system, state [v; w; z] with z = v^2, E = eps I.
/// Neumann boundaries through ghost nodes; v_x(0) = -u_1.
BuiltModel build_fhn_lifted(const FHNConfig& cfg = {});

/// FitzHugh-Nagumo input u(t) = [5e4 t^3 exp(-15 t), 1].
Vector fhn_input(double t);

/// Central finite differences for z_t = eps z_xx - (z^2/2)_x on N interior nodes with
/// z(0) = u, z(1) = -u. Skew-symmetric split convection inside, advective form next to
/// the boundary so the model stays quadratic-bilinear.
BuiltModel build_burgers_fd(const BurgersFDConfig& cfg = {});

/// xdot = -x + h x^2.
BuiltModel build_scalar(double h = 0.5);

/// Builds a model by name: burgers-fem, fhn, burgers-fd, scalar.
BuiltModel build_model(const std::string& name, Index N = 0);

}  // namespace qbstab
