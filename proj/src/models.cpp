#include "qbstab/models.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace qbstab {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

SparseMatrix from_triplets(Index rows, Index cols, const Triplets& t) {
  SparseMatrix out(rows, cols);
  out.setFromTriplets(t.begin(), t.end());
  out.prune(0.0);
  return out;
}

void add_quad(Triplets& t, Index row, Index i, Index j, double value, Index n) {
  t.emplace_back(row, kron_col(i, j, n), value);
}

// Integral of the hat function centred at c with half-width h over [lo, hi].
double hat_integral(double c, double h, double lo, double hi) {
  auto primitive = [&](double x) {
    const double r = (x - c) / h;
    if (r <= -1.0) return 0.0;
    if (r <= 0.0) return 0.5 * h * (r + 1.0) * (r + 1.0);
    if (r < 1.0) return h * (1.0 - 0.5 * (1.0 - r) * (1.0 - r));
    return h;
  };
  if (hi <= lo) return 0.0;
  return primitive(hi) - primitive(lo);
}

}  // namespace

BuiltModel build_burgers_fem(const BurgersFEMConfig& cfg) {
  detail::require(cfg.N >= 3, "burgers-fem: N must be at least 3");
  detail::require(cfg.epsilon > 0.0, "burgers-fem: epsilon must be positive");
  detail::require(cfg.m >= 1, "burgers-fem: need at least one input");
  const Index n = cfg.N;
  const double h = cfg.periodic ? 1.0 / n : 1.0 / (n + 1);
  auto node = [&](Index i) { return cfg.periodic ? i * h : (i + 1) * h; };
  // neighbour index or -1 when it is a Dirichlet boundary node
  auto nb = [&](Index i, int off) -> Index {
    const Index j = i + off;
    if (cfg.periodic) return (j + n) % n;
    return (j < 0 || j >= n) ? -1 : j;
  };

  Matrix E = Matrix::Zero(n, n), A = Matrix::Zero(n, n);
  Triplets ht;
  for (Index i = 0; i < n; ++i) {
    E(i, i) += 4.0 * h / 6.0;
    A(i, i) += -2.0 * cfg.epsilon / h;
    const Index l = nb(i, -1), r = nb(i, +1);
    if (l >= 0) {
      E(i, l) += h / 6.0;
      A(i, l) += cfg.epsilon / h;
      add_quad(ht, i, l, l, 1.0 / 6.0, n);
      add_quad(ht, i, l, i, 1.0 / 12.0, n);
      add_quad(ht, i, i, l, 1.0 / 12.0, n);
    }
    if (r >= 0) {
      E(i, r) += h / 6.0;
      A(i, r) += cfg.epsilon / h;
      add_quad(ht, i, i, r, -1.0 / 12.0, n);
      add_quad(ht, i, r, i, -1.0 / 12.0, n);
      add_quad(ht, i, r, r, -1.0 / 6.0, n);
    }
  }

  Matrix B = Matrix::Zero(n, cfg.m);
  for (Index k = 0; k < cfg.m; ++k) {
    const double a = static_cast<double>(k) / cfg.m, b = static_cast<double>(k + 1) / cfg.m;
    for (Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (int shift = -1; shift <= 1; ++shift)
        if (cfg.periodic || shift == 0) s += hat_integral(node(i) + shift, h, a, b);
      B(i, k) = s;
    }
  }

  Vector x0(n);
  for (Index i = 0; i < n; ++i) {
    const double xi = node(i);
    const double sv = std::sin(2.0 * std::numbers::pi * xi);
    x0(i) = xi <= 0.5 ? 0.5 * sv * sv : 0.0;
  }

  const Index m = cfg.m;
  QBSystem sys(std::move(E), std::move(A), from_triplets(n, n * n, ht),
               std::vector<Matrix>(m, Matrix::Zero(n, n)), std::move(B),
               Matrix(Matrix::Identity(n, n)));
  return {"burgers-fem", std::move(sys), std::move(x0),
          [m](double) { return Vector(Vector::Zero(m)); }};
}

Vector fhn_input(double t) {
  Vector u(2);
  u << 5e4 * t * t * t * std::exp(-15.0 * t), 1.0;
  return u;
}

BuiltModel build_fhn_lifted(const FHNConfig& cfg) {
  detail::require(cfg.grid >= 3, "fhn: need at least 3 grid points");
  detail::require(cfg.epsilon > 0.0 && cfg.L > 0.0, "fhn: epsilon and L must be positive");
  const Index G = cfg.grid, n = 3 * G;
  const double eps = cfg.epsilon, eps2 = eps * eps, c = cfg.c;
  const double dx = cfg.L / (G - 1);
  auto v = [](Index i) { return i; };
  auto w = [G](Index i) { return G + i; };
  auto z = [G](Index i) { return 2 * G + i; };

  // Neumann second difference through ghost nodes
  Matrix D2 = Matrix::Zero(G, G);
  for (Index i = 1; i + 1 < G; ++i) {
    D2(i, i - 1) = 1.0;
    D2(i, i) = -2.0;
    D2(i, i + 1) = 1.0;
  }
  D2(0, 0) = -2.0;
  D2(0, 1) = 2.0;
  D2(G - 1, G - 2) = 2.0;
  D2(G - 1, G - 1) = -2.0;
  D2 /= dx * dx;

  Matrix E = eps * Matrix::Identity(n, n);
  Matrix A = Matrix::Zero(n, n);
  Matrix B = Matrix::Zero(n, 2);
  std::vector<Matrix> N(2, Matrix::Zero(n, n));
  Triplets ht;

  A.block(0, 0, G, G) = eps2 * D2 - 0.1 * Matrix::Identity(G, G);
  for (Index i = 0; i < G; ++i) {
    A(v(i), w(i)) = -1.0;
    A(w(i), v(i)) = eps * cfg.h;
    A(w(i), w(i)) = -eps * cfg.gamma;
    A(z(i), z(i)) = -0.2;

    // v rows: -v z + a v^2
    add_quad(ht, v(i), v(i), z(i), -1.0, n);
    add_quad(ht, v(i), v(i), v(i), cfg.quadratic, n);
    // z rows: 2 [eps^2 v D2 v - z^2 + a z v - w v]
    for (Index j = 0; j < G; ++j)
      if (D2(i, j) != 0.0) add_quad(ht, z(i), v(i), v(j), 2.0 * eps2 * D2(i, j), n);
    add_quad(ht, z(i), z(i), z(i), -2.0, n);
    add_quad(ht, z(i), z(i), v(i), 2.0 * cfg.quadratic, n);
    add_quad(ht, z(i), w(i), v(i), -2.0, n);

    B(v(i), 1) = c;
    B(w(i), 1) = eps * c;
    N[1](z(i), v(i)) = 2.0 * c;
  }
  // v_x(0) = -u_1 enters the first second-difference row as 2 u_1 / dx
  B(v(0), 0) = 2.0 * eps2 / dx;
  N[0](z(0), v(0)) = 4.0 * eps2 / dx;

  QBSystem sys(std::move(E), std::move(A), from_triplets(n, n * n, ht), std::move(N),
               std::move(B));
  return {"fhn", std::move(sys), Vector::Zero(n), fhn_input};
}

BuiltModel build_burgers_fd(const BurgersFDConfig& cfg) {
  detail::require(cfg.N >= 3, "burgers-fd: N must be at least 3");
  detail::require(cfg.epsilon > 0.0, "burgers-fd: epsilon must be positive");
  const Index n = cfg.N;
  const double h = cfg.periodic ? 1.0 / n : 1.0 / (n + 1);
  const double d = cfg.epsilon / (h * h);
  const double split = 1.0 / (6.0 * h);

  Matrix A = Matrix::Zero(n, n);
  Triplets ht;
  auto skew_split = [&](Index i, Index l, Index r) {
    // -(1/(6h)) [x_r^2 - x_l^2 + x_i x_r - x_i x_l]
    add_quad(ht, i, r, r, -split, n);
    add_quad(ht, i, l, l, split, n);
    add_quad(ht, i, i, r, -split, n);
    add_quad(ht, i, i, l, split, n);
  };

  if (cfg.periodic) {
    for (Index i = 0; i < n; ++i) {
      const Index l = (i + n - 1) % n, r = (i + 1) % n;
      A(i, l) += d;
      A(i, i) -= 2.0 * d;
      A(i, r) += d;
      skew_split(i, l, r);
    }
    QBSystem sys(Matrix::Identity(n, n), std::move(A), from_triplets(n, n * n, ht), {},
                 Matrix::Zero(n, 0));
    return {"burgers-fd-periodic", std::move(sys), Vector::Zero(n),
            [](double) { return Vector(); }};
  }

  Matrix B = Matrix::Zero(n, 1);
  std::vector<Matrix> N(1, Matrix::Zero(n, n));
  for (Index i = 0; i < n; ++i) {
    A(i, i) = -2.0 * d;
    if (i > 0) A(i, i - 1) = d;
    if (i + 1 < n) A(i, i + 1) = d;
  }
  for (Index i = 1; i + 1 < n; ++i) skew_split(i, i - 1, i + 1);
  // first node: -x_1 (x_2 - u) / (2h)
  add_quad(ht, 0, 0, 1, -0.5 / h, n);
  N[0](0, 0) = 0.5 / h;
  B(0, 0) = d;
  // last node: -x_N (-u - x_{N-1}) / (2h)
  add_quad(ht, n - 1, n - 1, n - 2, 0.5 / h, n);
  N[0](n - 1, n - 1) = 0.5 / h;
  B(n - 1, 0) = -d;

  QBSystem sys(Matrix::Identity(n, n), std::move(A), from_triplets(n, n * n, ht), std::move(N),
               std::move(B));
  return {"burgers-fd", std::move(sys), Vector::Zero(n), [](double) { return Vector(Vector::Zero(1)); }};
}

BuiltModel build_scalar(double h) {
  Matrix A(1, 1), H(1, 1);
  A << -1.0;
  H << h;
  Vector x0(1);
  x0 << 0.0;
  // Q_f = sqrt(2) gives P = 1, so v(x) = x^2 and the radius is measured in x itself
  return {"scalar", QBSystem::autonomous(std::move(A), H), std::move(x0),
          [](double) { return Vector(); }, Matrix::Constant(1, 1, std::sqrt(2.0))};
}

BuiltModel build_model(const std::string& name, Index N) {
  if (name == "burgers-fem") {
    BurgersFEMConfig cfg;
    if (N > 0) cfg.N = N;
    return build_burgers_fem(cfg);
  }
  if (name == "fhn") {
    FHNConfig cfg;
    if (N > 0) cfg.grid = N;
    return build_fhn_lifted(cfg);
  }
  if (name == "burgers-fd") {
    BurgersFDConfig cfg;
    if (N > 0) cfg.N = N;
    return build_burgers_fd(cfg);
  }
  if (name == "scalar") return build_scalar();
  throw Error("unknown model '" + name + "' (expected burgers-fem, fhn, burgers-fd or scalar)");
}

}  // namespace qbstab
