#include "doctest.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>

#include "qbstab/densela.hpp"
#include "support.hpp"

using namespace qbstab;
using namespace qbtest;

namespace {

// Largest singular value by power iteration on M^T M, independent of the SVD kernels.
double power_norm(const Matrix& M, Rng& rng) {
  Vector v = gaussian(M.cols(), rng).normalized();
  double s = 0.0;
  for (int it = 0; it < 5000; ++it) {
    Vector w = M.transpose() * (M * v);
    const double s_new = std::sqrt(w.norm());
    v = w.normalized();
    if (std::abs(s_new - s) <= 1e-15 * s_new) {
      s = s_new;
      break;
    }
    s = s_new;
  }
  return s;
}

double orthogonality_error(const Matrix& Z) {
  return (Z.transpose() * Z - Matrix::Identity(Z.cols(), Z.cols())).norm();
}

Matrix lyap_residual(const Matrix& A, const Matrix& E, const LyapunovCertificate& c) {
  return A.transpose() * c.P * E + E.transpose() * c.P * A + c.Q;
}

std::vector<std::complex<double>> sorted(Eigen::VectorXcd v) {
  std::vector<std::complex<double>> out(v.data(), v.data() + v.size());
  std::sort(out.begin(), out.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return out;
}

}  // namespace

TEST_SUITE("densela") {

TEST_CASE("spectral norm: small cases") {
  CHECK(la::spectral_norm(Matrix(Matrix::Identity(3, 3))) == doctest::Approx(1.0));
  Matrix D = Matrix::Zero(2, 2);
  D.diagonal() << 3, -5;
  CHECK(la::spectral_norm(D) == doctest::Approx(5.0));
}

TEST_CASE("spectral norm agrees with power iteration") {
  Rng rng(101);
  const Matrix M = gaussian(20, 400, rng);
  const double ref = power_norm(M, rng);
  CHECK(std::abs(la::spectral_norm(M) - ref) <= 1e-10 * ref);
  CHECK(la::spectral_norm(M) == la::spectral_norm(Matrix(M.transpose())));
  CHECK(std::abs(la::spectral_norm(to_sparse(M)) - ref) <= 1e-10 * ref);
  // wide enough for the Gram-matrix branch
  const Matrix W = gaussian(6, 2100, rng);
  const double refw = power_norm(W, rng);
  CHECK(std::abs(la::spectral_norm(W) - refw) <= 1e-10 * refw);
}

TEST_CASE("min nonzero singular value") {
  Matrix D = Matrix::Zero(3, 3);
  D.diagonal() << 1, 2, 0;
  CHECK(la::min_nonzero_singular_value(D) == doctest::Approx(1.0));
  CHECK(la::min_nonzero_singular_value(Matrix(Matrix::Identity(4, 4))) == doctest::Approx(1.0));
  Rng rng(103);
  const Matrix U = orthonormal(5, 3, rng), V = orthonormal(5, 3, rng);
  Vector s(3);
  s << 4, 2, 0.5;
  const Matrix M = U * s.asDiagonal() * V.transpose();
  CHECK(la::min_nonzero_singular_value(M) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS(la::min_nonzero_singular_value(Matrix(Matrix::Zero(3, 3))));
}

TEST_CASE("svd, cholesky, qr, lu") {
  Rng rng(107);
  const auto I = la::svd(Matrix::Identity(3, 3));
  CHECK(I.sigma.isApprox(Vector::Ones(3)));
  Matrix D = Matrix::Zero(2, 2);
  D.diagonal() << 4, 1;
  CHECK(la::svd(D).sigma.isApprox(Vector(Eigen::Vector2d(4, 1))));

  const Matrix M = gaussian(40, 25, rng);
  const auto f = la::svd(M);
  CHECK((M - f.U * f.sigma.asDiagonal() * f.V.transpose()).norm() <= 1e-11 * M.norm());
  for (Index i = 1; i < f.sigma.size(); ++i) CHECK(f.sigma(i) <= f.sigma(i - 1));

  for (int trial = 0; trial < 20; ++trial) {
    const Index n = uniform_index(1, 30, rng);
    const Matrix S = spd(n, rng);
    const Matrix L = la::cholesky(S);
    CHECK((L * L.transpose() - S).norm() <= 1e-12 * S.norm());
    CHECK(L.isLowerTriangular());
  }
  Matrix indefinite = Matrix::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  CHECK_THROWS_AS(la::cholesky(indefinite), FactorizationError);

  const auto q = la::qr(M);
  CHECK((q.Q * q.R - M).norm() <= 1e-12 * M.norm());
  CHECK(orthogonality_error(q.Q) <= 1e-12);
  CHECK(q.R.isUpperTriangular());

  const Matrix A = gaussian(10, 10, rng), B = gaussian(10, 3, rng);
  CHECK((A * la::lu_solve(A, B) - B).norm() <= 1e-10 * B.norm() * la::condition_number(A));
  CHECK_THROWS_AS(la::lu_solve(Matrix::Zero(3, 3), Matrix::Ones(3, 1)), FactorizationError);

  const Matrix S = spd(8, rng);
  const Matrix R = la::psd_factor(S);
  CHECK((R * R.transpose() - S).norm() <= 1e-12 * S.norm());
}

TEST_CASE("real Schur: diagonal input") {
  Vector d(4);
  d << 3, -1, 2, 0.5;
  const auto s = la::real_schur(d.asDiagonal());
  auto ev = sorted(la::schur_eigenvalues(s.T));
  std::vector<double> ref(d.data(), d.data() + 4);
  std::sort(ref.begin(), ref.end());
  for (int i = 0; i < 4; ++i) CHECK(ev[i].real() == doctest::Approx(ref[i]));
}

TEST_CASE("real Schur: complex pair gives one 2x2 block") {
  Matrix M(2, 2);
  M << 1, -2, 3, 1;
  const auto s = la::real_schur(M);
  CHECK(std::abs(s.T(1, 0)) > 0.0);
  const auto ev = sorted(la::schur_eigenvalues(s.T));
  CHECK(ev[0].real() == doctest::Approx(1.0));
  CHECK(std::abs(ev[0].imag()) == doctest::Approx(std::sqrt(6.0)));
}

TEST_CASE("real Schur: random reconstruction and 3x3 characteristic polynomial") {
  Rng rng(109);
  const Matrix M = gaussian(50, 50, rng);
  const auto s = la::real_schur(M);
  CHECK((s.Z * s.T * s.Z.transpose() - M).norm() <= 1e-10 * M.norm());
  CHECK(orthogonality_error(s.Z) <= 1e-12);
  for (Index i = 2; i < 50; ++i)
    for (Index j = 0; j + 1 < i; ++j) CHECK(s.T(i, j) == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix A = gaussian(3, 3, rng);
    // det(lambda I - A) = lambda^3 - tr lambda^2 + c1 lambda - det
    const double tr = A.trace();
    const double c1 = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0) + A(0, 0) * A(2, 2) - A(0, 2) * A(2, 0) +
                      A(1, 1) * A(2, 2) - A(1, 2) * A(2, 1);
    const double det = A.determinant();
    for (const auto& lam : la::schur_eigenvalues(la::real_schur(A).T)) {
      const std::complex<double> p = lam * lam * lam - tr * lam * lam + c1 * lam - det;
      CHECK(std::abs(p) <= 1e-10 * (1.0 + std::pow(std::abs(lam), 3)));
    }
  }
}

TEST_CASE("ordered Schur: trivial reorderings") {
  Matrix T(2, 2);
  T << -1, 0.3, 0, 1;
  const auto keep = la::ordered_real_schur(T, [](std::complex<double> z) { return z.real() < 0; });
  CHECK(keep.selected == 1);
  CHECK(keep.T(0, 0) == doctest::Approx(-1.0));

  Matrix D = Matrix::Zero(2, 2);
  D.diagonal() << 1, -1;
  const auto sw = la::ordered_real_schur(D, [](std::complex<double> z) { return z.real() < 0; });
  CHECK(sw.selected == 1);
  CHECK(sw.T(0, 0) == doctest::Approx(-1.0));
  CHECK(std::abs(std::abs(sw.Z(1, 0)) - 1.0) <= 1e-14);
}

TEST_CASE("ordered Schur: Hamiltonian stable invariant subspace") {
  Rng rng(113);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 10;
    const Matrix F = gaussian(n, n, rng);
    const Matrix Gf = gaussian(n, 2, rng), Qf = gaussian(3, n, rng);
    Matrix Hm(2 * n, 2 * n);
    Hm << F, -Gf * Gf.transpose(), -Qf.transpose() * Qf, -F.transpose();
    const auto s = la::ordered_real_schur(Hm, [](std::complex<double> z) { return z.real() < 0; });
    CHECK(s.selected == n);
    const Matrix V = s.Z.leftCols(n);
    CHECK((Hm * V - V * (V.transpose() * Hm * V)).norm() <= 1e-9 * Hm.norm());
    CHECK((s.Z * s.T * s.Z.transpose() - Hm).norm() <= 1e-9 * Hm.norm());
    for (const auto& lam : la::schur_eigenvalues(s.T.topLeftCorner(n, n))) CHECK(lam.real() < 0);
  }
}

TEST_CASE("Lyapunov: closed forms") {
  const Matrix I = Matrix::Identity(3, 3);
  const auto c = la::solve_lyapunov(-I, I, I);
  CHECK(c.P.isApprox(0.5 * I, 1e-14));
  const auto s = la::solve_lyapunov(Matrix::Constant(1, 1, -1.0), Matrix::Identity(1, 1),
                                    Matrix::Constant(1, 1, std::sqrt(2.0)));
  CHECK(s.P(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((s.P_f.transpose() * s.P_f - s.P).norm() <= 1e-14);
}

TEST_CASE("Lyapunov: agreement with vectorized solve and residual bound") {
  Rng rng(127);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = uniform_index(1, 8, rng);
    const Matrix E = trial % 2 ? Matrix(Matrix::Identity(n, n)) : spd(n, rng);
    const Matrix A = E * stable_matrix(n, rng);
    const Matrix Qf = gaussian(n, n, rng) + 2.0 * Matrix::Identity(n, n);
    const auto c = la::solve_lyapunov(A, E, Qf);
    const Matrix ref = lyapunov_by_vectorization(A, E, Qf.transpose() * Qf);
    CHECK(rel_err(c.P, ref) <= 1e-9);
    CHECK(lyap_residual(A, E, c).norm() <= 1e-10 * c.Q.norm());
    CHECK(c.residual <= 1e-10);
    CHECK((c.P - c.P.transpose()).norm() <= 1e-12 * c.P.norm());
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(c.P).eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("Lyapunov: randomized suite up to n = 100") {
  Rng rng(131);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = trial < 90 ? uniform_index(2, 40, rng) : uniform_index(60, 100, rng);
    const Matrix E = trial % 3 == 0 ? spd(n, rng) : Matrix(Matrix::Identity(n, n));
    const Matrix A = E * (gaussian(n, n, rng) - 10.0 * std::sqrt(double(n)) * Matrix::Identity(n, n));
    const auto c = la::solve_lyapunov(A, E, Matrix(Matrix::Identity(n, n)));
    CHECK(lyap_residual(A, E, c).norm() <= 1e-10 * c.Q.norm());
  }
}

TEST_CASE("Lyapunov: unstable linear part is rejected") {
  Matrix A = -Matrix::Identity(3, 3);
  A(2, 2) = 0.1;
  CHECK_THROWS_AS(la::solve_lyapunov(A, Matrix::Identity(3, 3), Matrix::Identity(3, 3)), UnstableLinearPart);
  A(2, 2) = 0.0;
  try {
    la::solve_lyapunov(A, Matrix::Identity(3, 3), Matrix::Identity(3, 3));
    FAIL("expected UnstableLinearPart");
  } catch (const UnstableLinearPart& e) {
    CHECK(e.spectral_abscissa() == doctest::Approx(0.0));
  }
}

TEST_CASE("Riccati: scalar closed form and zero forcing") {
  const auto r = la::solve_riccati_lqg(Matrix::Constant(1, 1, -1.0), Matrix::Constant(1, 1, 1.0),
                                       Matrix::Constant(1, 1, 1.0));
  CHECK(r.P(0, 0) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-13));
  CHECK(r.Q(0, 0) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-13));

  Rng rng(137);
  const Matrix A = stable_matrix(5, rng);
  const auto z = la::solve_riccati_lqg(A, Matrix::Zero(5, 1), gaussian(2, 5, rng));
  CHECK(z.P.norm() <= 1e-12);
}

TEST_CASE("Riccati: randomized residual, symmetry and closed-loop stability") {
  Rng rng(139);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = trial < 15 ? uniform_index(2, 20, rng) : 30;
    const Index m = uniform_index(1, 3, rng), p = uniform_index(1, 3, rng);
    // shifted so that only a few modes near the edge of the spectrum stay unstable; without the
    // shift single-input draws at n = 30 are numerically unstabilizable (||X|| ~ 1e14)
    const Matrix A = gaussian(n, n, rng) / std::sqrt(double(n)) - uniform(0.6, 1.5, rng) * Matrix::Identity(n, n);
    const Matrix B = gaussian(n, m, rng), C = gaussian(p, n, rng);
    const auto r = la::solve_riccati_lqg(A, B, C);
    CHECK(r.residual_P <= 1e-8);
    CHECK(r.residual_Q <= 1e-8);
    CHECK(la::riccati_residual(A.transpose(), C.transpose() * C, B * B.transpose(), r.P) <= 1e-8);
    CHECK(la::riccati_residual(A, B * B.transpose(), C.transpose() * C, r.Q) <= 1e-8);
    CHECK((r.P - r.P.transpose()).norm() <= 1e-10 * r.P.norm());
    CHECK((r.Q - r.Q.transpose()).norm() <= 1e-10 * r.Q.norm());
    CHECK(la::spectral_abscissa(A - r.P * C.transpose() * C) < 0.0);
    CHECK(la::spectral_abscissa(A - B * B.transpose() * r.Q) < 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(r.P).eigenvalues().minCoeff() >= -1e-10 * r.P.norm());
  }
}

TEST_CASE("CARE: general weights") {
  Rng rng(149);
  const Index n = 12;
  const Matrix F = gaussian(n, n, rng);
  const Matrix Gf = gaussian(n, 2, rng), Qf = gaussian(n, n, rng);
  const auto s = la::solve_care(F, Gf * Gf.transpose(), Qf.transpose() * Qf);
  CHECK(s.residual <= 1e-10);
  CHECK(la::spectral_abscissa(F - Gf * Gf.transpose() * s.X) < 0.0);
}

TEST_CASE("spectral abscissa and condition number") {
  Matrix M(2, 2);
  M << -1, 5, 0, -3;
  CHECK(la::spectral_abscissa(M) == doctest::Approx(-1.0));
  Matrix D = Matrix::Zero(2, 2);
  D.diagonal() << 10, 0.1;
  CHECK(la::condition_number(D) == doctest::Approx(100.0));
}

}  // TEST_SUITE
