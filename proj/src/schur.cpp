// Real Schur form and eigenvalue reordering by direct block swaps.
#include <cmath>
#include <limits>
#include <sstream>

#include "qbstab/densela.hpp"
#include "qbstab/qbsys.hpp"

namespace qbstab::la {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

bool starts_pair(const Matrix& T, Index k) {
  return k + 1 < T.rows() && T(k + 1, k) != 0.0;
}

std::complex<double> block_eigenvalue(const Matrix& T, Index k, Index size) {
  if (size == 1) return {T(k, k), 0.0};
  const double a = T(k, k), b = T(k, k + 1), c = T(k + 1, k), d = T(k + 1, k + 1);
  const double p = 0.5 * (a + d);
  const double disc = 0.25 * (a - d) * (a - d) + b * c;
  if (disc < 0.0) return {p, std::sqrt(-disc)};
  return {p + std::sqrt(disc), 0.0};
}

// Clears round-off below the quasi-triangular pattern.
void clean_quasi_triangular(Matrix& T) {
  const Index n = T.rows();
  for (Index j = 0; j < n; ++j)
    for (Index i = j + 2; i < n; ++i) T(i, j) = 0.0;
  for (Index k = 0; k + 1 < n; ++k) {
    const double scale = std::abs(T(k, k)) + std::abs(T(k + 1, k + 1));
    if (std::abs(T(k + 1, k)) <= kEps * scale) T(k + 1, k) = 0.0;
  }
}

// Swaps the adjacent diagonal blocks T11 (p x p) at j and T22 (q x q) at j + p.
void swap_blocks(Matrix& T, Matrix& Z, Index j, Index p, Index q) {
  const Index w = p + q;
  const Matrix D = T.block(j, j, w, w);
  const Matrix T11 = D.topLeftCorner(p, p);
  const Matrix T12 = D.topRightCorner(p, q);
  const Matrix T22 = D.bottomRightCorner(q, q);

  // T11 X - X T22 = T12, so span([-X; I]) is invariant with the spectrum of T22.
  Matrix K = kron(Matrix::Identity(q, q), T11, 0) - kron(T22.transpose(), Matrix::Identity(p, p), 0);
  Eigen::FullPivLU<Matrix> lu(K);
  if (!lu.isInvertible()) {
    std::ostringstream os;
    os << "ordered_real_schur: blocks at " << j << " share an eigenvalue (gap "
       << std::abs(block_eigenvalue(T, j, p) - block_eigenvalue(T, j + p, q)) << ")";
    throw ConvergenceError(os.str());
  }
  Vector rhs = Eigen::Map<const Vector>(T12.data(), p * q);
  Vector xv = lu.solve(rhs);
  Matrix X = Eigen::Map<Matrix>(xv.data(), p, q);

  Matrix basis(w, q);
  basis.topRows(p) = -X;
  basis.bottomRows(q) = Matrix::Identity(q, q);
  Eigen::HouseholderQR<Matrix> qrf(basis);
  const Matrix Q = qrf.householderQ();

  T.middleRows(j, w) = (Q.transpose() * T.middleRows(j, w)).eval();
  T.middleCols(j, w) = (T.middleCols(j, w) * Q).eval();
  Z.middleCols(j, w) = (Z.middleCols(j, w) * Q).eval();

  const double thresh = std::max(30.0 * kEps * D.norm(), std::numeric_limits<double>::min());
  auto lower = T.block(j + q, j, p, q);
  if (lower.norm() > thresh) {
    std::ostringstream os;
    os << "ordered_real_schur: block swap at " << j << " failed (residual " << lower.norm()
       << ", eigenvalue gap "
       << std::abs(block_eigenvalue(D, 0, p) - block_eigenvalue(D, p, q)) << ")";
    throw ConvergenceError(os.str());
  }
  lower.setZero();
  for (Index r = j + 2; r < T.rows() && r < j + w + 1; ++r)
    for (Index c = j; c < r - 1; ++c) T(r, c) = 0.0;
}

}  // namespace

SchurForm real_schur(const Matrix& M) {
  detail::require(M.rows() == M.cols(), "real_schur: matrix must be square");
  SchurForm out;
  if (M.rows() == 0) return out;
  Eigen::RealSchur<Matrix> rs(M.rows());
  rs.setMaxIterations(80 * M.rows());
  rs.compute(M);
  if (rs.info() != Eigen::Success)
    throw ConvergenceError("real_schur: QR iteration did not converge");
  out.T = rs.matrixT();
  out.Z = rs.matrixU();
  clean_quasi_triangular(out.T);
  return out;
}

Eigen::VectorXcd schur_eigenvalues(const Matrix& T) {
  const Index n = T.rows();
  Eigen::VectorXcd ev(n);
  for (Index k = 0; k < n;) {
    if (starts_pair(T, k)) {
      const auto lam = block_eigenvalue(T, k, 2);
      ev(k) = lam;
      ev(k + 1) = std::conj(lam);
      if (lam.imag() == 0.0) {
        // real pair left in a 2x2 block
        const double a = T(k, k), d = T(k + 1, k + 1);
        ev(k + 1) = {a + d - lam.real(), 0.0};
      }
      k += 2;
    } else {
      ev(k) = {T(k, k), 0.0};
      k += 1;
    }
  }
  return ev;
}

Index reorder_schur(Matrix& T, Matrix& Z, const EigenvalueSelector& select) {
  const Index n = T.rows();
  Index ks = 0;
  for (Index k = 0; k < n;) {
    const Index size = starts_pair(T, k) ? 2 : 1;
    if (select(block_eigenvalue(T, k, size))) {
      Index pos = k;
      while (pos > ks) {
        const Index prev = (pos >= 2 && T(pos - 1, pos - 2) != 0.0) ? 2 : 1;
        swap_blocks(T, Z, pos - prev, prev, size);
        pos -= prev;
      }
      ks += size;
    }
    k += size;
  }
  return ks;
}

SchurForm ordered_real_schur(const Matrix& M, const EigenvalueSelector& select) {
  SchurForm s = real_schur(M);
  s.selected = reorder_schur(s.T, s.Z, select);
  return s;
}

}  // namespace qbstab::la
