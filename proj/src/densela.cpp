#include "qbstab/densela.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "qbstab/qbsys.hpp"

namespace qbstab::la {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double gram_top_eigenvalue(const Matrix& G) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

std::vector<Index> quasi_blocks(const Matrix& T) {
  std::vector<Index> starts;
  const Index n = T.rows();
  for (Index k = 0; k < n;) {
    starts.push_back(k);
    k += (k + 1 < n && T(k + 1, k) != 0.0) ? 2 : 1;
  }
  starts.push_back(n);
  return starts;
}

Matrix symmetric_part(const Matrix& X) { return 0.5 * (X + X.transpose()); }

}  // namespace

SVDResult svd(const Matrix& M) {
  Eigen::BDCSVD<Matrix> s(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {s.matrixU(), s.singularValues(), s.matrixV()};
}

Matrix cholesky(const Matrix& S) {
  Eigen::LLT<Matrix> llt(symmetric_part(S));
  if (llt.info() != Eigen::Success)
    throw FactorizationError("cholesky: matrix is not symmetric positive definite");
  return llt.matrixL();
}

Matrix lu_solve(const Matrix& M, const Matrix& B) {
  detail::require(M.rows() == M.cols() && M.rows() == B.rows(), "lu_solve: dimension mismatch");
  Eigen::PartialPivLU<Matrix> lu(M);
  if (M.rows() > 0 && !(lu.rcond() > kEps)) {
    std::ostringstream os;
    os << "lu_solve: matrix is singular to working precision (rcond = " << lu.rcond() << ")";
    throw FactorizationError(os.str());
  }
  return lu.solve(B);
}

QRResult qr(const Matrix& M) {
  const Index k = std::min(M.rows(), M.cols());
  Eigen::HouseholderQR<Matrix> h(M);
  QRResult out;
  out.Q = h.householderQ() * Matrix::Identity(M.rows(), k);
  out.R = h.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return out;
}

Matrix psd_factor(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric_part(S));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  const Index lo = std::min(M.rows(), M.cols()), hi = std::max(M.rows(), M.cols());
  if (4 * lo <= hi || lo > 2000) {
    if (M.rows() <= M.cols()) return gram_top_eigenvalue(M * M.transpose());
    return gram_top_eigenvalue(M.transpose() * M);
  }
  Eigen::BDCSVD<Matrix> s(M);
  return s.singularValues()(0);
}

double spectral_norm(const SparseMatrix& M) {
  if (M.nonZeros() == 0) return 0.0;
  if (M.rows() <= M.cols()) {
    SparseMatrix G = M * SparseMatrix(M.transpose());
    return gram_top_eigenvalue(Matrix(G));
  }
  SparseMatrix G = SparseMatrix(M.transpose()) * M;
  return gram_top_eigenvalue(Matrix(G));
}

double min_nonzero_singular_value(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> s(M);
  const Vector& sv = s.singularValues();
  if (!(sv(0) > 0.0)) throw FactorizationError("min_nonzero_singular_value: matrix is numerically zero");
  const double cut = std::max(M.rows(), M.cols()) * sv(0) * kEps;
  double best = 0.0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) best = sv(i);
  return best;
}

double condition_number(const Matrix& M) {
  if (M.size() == 0) return 1.0;
  Eigen::BDCSVD<Matrix> s(M);
  const Vector& sv = s.singularValues();
  const double smin = sv(sv.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / smin;
}

double spectral_abscissa(const Matrix& M) {
  detail::require(M.rows() == M.cols(), "spectral_abscissa: matrix must be square");
  if (M.rows() == 0) return -std::numeric_limits<double>::infinity();
  const auto ev = schur_eigenvalues(real_schur(M).T);
  return ev.real().maxCoeff();
}

Matrix solve_lyapunov_schur(const Matrix& T, const Matrix& C) {
  const Index n = T.rows();
  detail::require(T.cols() == n && C.rows() == n && C.cols() == n,
                  "solve_lyapunov_schur: dimension mismatch");
  const auto starts = quasi_blocks(T);
  const Index nb = static_cast<Index>(starts.size()) - 1;
  Matrix Y = Matrix::Zero(n, n);
  for (Index l = 0; l < nb; ++l) {
    const Index sl = starts[l], zl = starts[l + 1] - sl;
    for (Index k = 0; k < nb; ++k) {
      const Index sk = starts[k], zk = starts[k + 1] - sk;
      Matrix rhs = C.block(sk, sl, zk, zl);
      if (sk > 0)
        rhs.noalias() -= T.block(0, sk, sk, zk).transpose() * Y.block(0, sl, sk, zl);
      if (sl > 0)
        rhs.noalias() -= Y.block(sk, 0, zk, sl) * T.block(0, sl, sl, zl);
      // T_kk^T Y + Y T_ll = rhs, column-major vec
      const Matrix Tkk = T.block(sk, sk, zk, zk), Tll = T.block(sl, sl, zl, zl);
      const Matrix K = kron(Matrix::Identity(zl, zl), Tkk.transpose(), 0) +
                       kron(Tll.transpose(), Matrix::Identity(zk, zk), 0);
      Eigen::FullPivLU<Matrix> lu(K);
      if (!lu.isInvertible())
        throw FactorizationError(
            "solve_lyapunov_schur: eigenvalues lambda_i + lambda_j vanish; equation is singular");
      Vector v = Eigen::Map<const Vector>(rhs.data(), zk * zl);
      Vector y = lu.solve(v);
      Y.block(sk, sl, zk, zl) = Eigen::Map<Matrix>(y.data(), zk, zl);
    }
  }
  return Y;
}

Matrix solve_continuous_lyapunov(const Matrix& A, const Matrix& Q) {
  detail::require(A.rows() == A.cols() && Q.rows() == A.rows() && Q.cols() == A.rows(),
                  "solve_continuous_lyapunov: dimension mismatch");
  if (A.rows() == 0) return Matrix(0, 0);
  const SchurForm s = real_schur(A);
  const Matrix C = -(s.Z.transpose() * Q * s.Z);
  const Matrix Y = solve_lyapunov_schur(s.T, C);
  return symmetric_part(s.Z * Y * s.Z.transpose());
}

LyapunovCertificate solve_lyapunov(const Matrix& A, const Matrix& E, const Matrix& Q_f) {
  const Index n = A.rows();
  detail::require(A.cols() == n && E.rows() == n && E.cols() == n && Q_f.cols() == n,
                  "solve_lyapunov: dimension mismatch");
  const bool identity = E.isIdentity(0.0);
  Eigen::PartialPivLU<Matrix> elu;
  Matrix At = A;
  if (!identity) {
    elu.compute(E);
    At = elu.solve(A);
  }
  const SchurForm s = real_schur(At);
  const double abscissa = schur_eigenvalues(s.T).real().maxCoeff();
  const double scale = spectral_norm(At);
  if (abscissa >= -1e-12 * scale) {
    std::ostringstream os;
    os << "solve_lyapunov: linear part is not asymptotically stable (spectral abscissa "
       << abscissa << ")";
    throw UnstableLinearPart(os.str(), abscissa);
  }

  LyapunovCertificate cert;
  cert.Q_f = Q_f;
  cert.Q = Q_f.transpose() * Q_f;
  const Matrix Y = solve_lyapunov_schur(s.T, -(s.Z.transpose() * cert.Q * s.Z));
  Matrix X = symmetric_part(s.Z * Y * s.Z.transpose());
  if (identity) {
    cert.P = X;
  } else {
    // P = E^{-T} X E^{-1}
    const Matrix M = elu.transpose().solve(X);
    cert.P = symmetric_part(elu.transpose().solve(Matrix(M.transpose())));
  }
  Eigen::LLT<Matrix> llt(cert.P);
  if (llt.info() == Eigen::Success) {
    cert.P_f = llt.matrixU();
  } else {
    cert.P_f = psd_factor(cert.P).transpose();
  }
  const Matrix R = A.transpose() * cert.P * E + E.transpose() * cert.P * A + cert.Q;
  const double qn = cert.Q.norm();
  cert.residual = qn > 0.0 ? R.norm() / qn : R.norm();
  cert.source = "lyapunov";
  return cert;
}

double riccati_residual(const Matrix& F, const Matrix& G, const Matrix& Q, const Matrix& X) {
  const Matrix lin = F.transpose() * X + X * F;
  const Matrix quad = X * G * X;
  const Matrix R = lin - quad + Q;
  const double denom = lin.norm() + quad.norm() + Q.norm();
  if (denom == 0.0) return R.norm();
  return R.norm() / denom;
}

RiccatiSolution solve_care(const Matrix& F, const Matrix& G, const Matrix& Q,
                           int newton_refinements) {
  const Index n = F.rows();
  detail::require(F.cols() == n && G.rows() == n && G.cols() == n && Q.rows() == n &&
                      Q.cols() == n,
                  "solve_care: dimension mismatch");
  RiccatiSolution sol;
  if (n == 0) return sol;

  Matrix Ham(2 * n, 2 * n);
  Ham << F, -G, -Q, -F.transpose();
  const SchurForm s = ordered_real_schur(Ham, [](std::complex<double> z) { return z.real() < 0.0; });
  if (s.selected != n) {
    std::ostringstream os;
    os << "solve_care: Hamiltonian has " << s.selected << " stable eigenvalues, expected " << n
       << " (eigenvalues on or near the imaginary axis)";
    throw ConvergenceError(os.str());
  }
  const Matrix U1 = s.Z.topLeftCorner(n, n);
  const Matrix U2 = s.Z.bottomLeftCorner(n, n);
  Eigen::PartialPivLU<Matrix> lu(U1.transpose());
  if (!(lu.rcond() > kEps))
    throw FactorizationError("solve_care: stable subspace basis is singular");
  sol.X = symmetric_part(lu.solve(U2.transpose()).transpose());
  sol.residual = riccati_residual(F, G, Q, sol.X);

  for (int k = 0; k < newton_refinements && sol.residual > 0.0; ++k) {
    const Matrix Ac = F - G * sol.X;
    Matrix Xn;
    try {
      if (spectral_abscissa(Ac) >= 0.0) break;
      Xn = solve_continuous_lyapunov(Ac, Q + sol.X * G * sol.X);
    } catch (const Error&) {
      break;
    }
    const double r = riccati_residual(F, G, Q, Xn);
    if (!(r < sol.residual)) break;
    sol.X = Xn;
    sol.residual = r;
    sol.refinement_steps = k + 1;
  }
  return sol;
}

LQGRiccati solve_riccati_lqg(const Matrix& A, const Matrix& B, const Matrix& C) {
  detail::require(A.rows() == A.cols() && B.rows() == A.rows() && C.cols() == A.rows(),
                  "solve_riccati_lqg: dimension mismatch");
  const Matrix BBt = B * B.transpose();
  const Matrix CtC = C.transpose() * C;
  const RiccatiSolution filter = solve_care(A.transpose(), CtC, BBt);
  const RiccatiSolution control = solve_care(A, BBt, CtC);
  return {filter.X, control.X, filter.residual, control.residual};
}

}  // namespace qbstab::la
