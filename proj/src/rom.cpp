#include "qbstab/rom.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

namespace qbstab {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double relative_residual(const Matrix& lin, const Matrix& quad, const Matrix& cst) {
  const Matrix R = lin + lin.transpose() - quad + cst;
  const double denom = 2.0 * lin.norm() + quad.norm() + cst.norm();
  return denom > 0.0 ? R.norm() / denom : R.norm();
}

}  // namespace

std::pair<double, double> reduced_riccati_residuals(const QBSystem& rom, const Vector& sigma) {
  detail::require(rom.C().has_value(), "reduced_riccati_residuals: ROM has no output matrix");
  const Matrix& A = rom.A();
  const Matrix& B = rom.B();
  const Matrix& C = *rom.C();
  const auto S = sigma.asDiagonal();
  const double rf = relative_residual(A * S, S * C.transpose() * C * S, B * B.transpose());
  const double rc = relative_residual(A.transpose() * S, S * B * B.transpose() * S,
                                      C.transpose() * C);
  return {rf, rc};
}

ROMArtifact lqg_balanced_truncation(const QBSystem& sys, Index n) {
  if (!sys.C()) throw Error("lqgbt: the system has no output matrix C");
  const Index N = sys.n();
  if (n < 1 || n > N) {
    std::ostringstream os;
    os << "lqgbt: reduced order " << n << " must lie in [1, " << N << "]";
    throw DimensionError(os.str());
  }
  const Matrix At = sys.solve_mass(sys.A());
  const Matrix Bt = sys.solve_mass(sys.B());
  const Matrix& C = *sys.C();

  const la::LQGRiccati ric = la::solve_riccati_lqg(At, Bt, C);
  const Matrix R = la::psd_factor(ric.P);
  const Matrix L = la::psd_factor(ric.Q);
  const la::SVDResult s = la::svd(L.transpose() * R);

  ROMArtifact art{"lqgbt", QBSystem::autonomous(Matrix::Identity(1, 1) * -1.0, Matrix::Zero(1, 1)),
                  Matrix(), Matrix(), s.sigma, Vector(), 0.0, 0.0, -1.0, false, {}};
  const double cut = N * kEps * s.sigma(0);
  if (!(s.sigma(n - 1) > cut)) {
    std::ostringstream os;
    os << "lqgbt: order " << n << " exceeds the numerical rank of L^T R (sigma_n = "
       << s.sigma(n - 1) << ")";
    throw RankDeficient(os.str(), s.sigma(0) / std::max(s.sigma(n - 1), 1e-300));
  }
  const Vector sig = s.sigma.head(n);
  const Vector isq = sig.cwiseSqrt().cwiseInverse();
  art.right = R * s.V.leftCols(n) * isq.asDiagonal();
  art.left = isq.asDiagonal() * s.U.leftCols(n).transpose() * L.transpose();
  art.sigma = sig;

  const Matrix left_mass =
      sys.identity_mass() ? art.left : Matrix(art.left * sys.solve_mass(Matrix(Matrix::Identity(N, N))));
  Matrix Ar = art.left * At * art.right;
  Matrix Br = art.left * Bt;
  std::vector<Matrix> Nr;
  for (const auto& Ni : sys.N()) Nr.push_back(left_mass * Ni * art.right);
  Matrix Hr = project_quadratic(left_mass, sys.H(), art.right);
  Matrix Cr = C * art.right;
  art.system = QBSystem(Matrix::Identity(n, n), std::move(Ar), Hr, std::move(Nr), std::move(Br),
                        std::move(Cr));

  const double identity_err = (art.left * art.right - Matrix::Identity(n, n)).norm();
  if (identity_err > 1e-8)
    art.warnings.push_back("T_n^{-1} T_n deviates from the identity by " + std::to_string(identity_err));
  std::tie(art.riccati_residual_filter, art.riccati_residual_control) =
      reduced_riccati_residuals(art.system, art.sigma);
  return art;
}

CertificateKind parse_certificate_kind(const std::string& s) {
  if (s == "lyapunov-identity" || s == "lyapunov") return CertificateKind::LyapunovIdentity;
  if (s == "lqg-sigma") return CertificateKind::LqgSigma;
  if (s == "riccati-implied") return CertificateKind::RiccatiImplied;
  throw Error("unknown certificate '" + s +
              "' (expected lyapunov-identity, lqg-sigma or riccati-implied)");
}

std::string to_string(CertificateKind k) {
  switch (k) {
    case CertificateKind::LyapunovIdentity: return "lyapunov-identity";
    case CertificateKind::LqgSigma: return "lqg-sigma";
    case CertificateKind::RiccatiImplied: return "riccati-implied";
  }
  return "unknown";
}

LyapunovCertificate make_certificate(const QBSystem& sys, CertificateKind kind,
                                     const Vector& sigma) {
  const Index n = sys.n();
  if (kind == CertificateKind::LyapunovIdentity)
    return la::solve_lyapunov(sys.A(), sys.E(), Matrix::Identity(n, n));

  if (sigma.size() != n)
    throw InvalidCertificate(to_string(kind) + " certificate needs Sigma_n from LQG balancing");
  if ((sigma.array() <= 0.0).any())
    throw InvalidCertificate(to_string(kind) + " certificate needs a positive Sigma_n");
  LyapunovCertificate cert;
  cert.P = sigma.asDiagonal();
  cert.P_f = sigma.cwiseSqrt().asDiagonal();
  if (kind == CertificateKind::LqgSigma) {
    if (!sys.C()) throw InvalidCertificate("lqg-sigma certificate needs an output matrix C");
    cert.Q_f = *sys.C();
    cert.Q = cert.Q_f.transpose() * cert.Q_f;
    cert.source = "lqg-sigma";
  } else {
    const Matrix APE = sys.A().transpose() * cert.P * sys.E();
    cert.Q = -(APE + APE.transpose());
    Eigen::LLT<Matrix> llt(cert.Q);
    if (llt.info() != Eigen::Success)
      throw InvalidCertificate(
          "riccati-implied certificate: -(A^T Sigma E + E^T Sigma A) is not positive definite");
    cert.Q_f = llt.matrixU();
    cert.source = "riccati-implied";
  }
  const Matrix APE = sys.A().transpose() * cert.P * sys.E();
  const Matrix R = APE + APE.transpose() + cert.Q;
  cert.residual = R.norm() / std::max(cert.Q.norm(), 1e-300);
  return cert;
}

PODBasis pod_basis(const Matrix& X, Index n) {
  if (n < 1 || n > std::min(X.rows(), X.cols())) {
    std::ostringstream os;
    os << "pod_basis: need 1 <= n <= min(rows, cols) = " << std::min(X.rows(), X.cols());
    throw RankDeficient(os.str(), std::numeric_limits<double>::infinity());
  }
  Eigen::BDCSVD<Matrix> s(X, Eigen::ComputeThinU);
  const Vector& sv = s.singularValues();
  const double cut = std::max(X.rows(), X.cols()) * kEps * sv(0);
  if (!(sv(n - 1) > cut)) {
    std::ostringstream os;
    os << "pod_basis: snapshot matrix has numerical rank below " << n;
    throw RankDeficient(os.str(), sv(0) / std::max(sv(n - 1), 1e-300));
  }
  return {s.matrixU().leftCols(n), sv};
}

PODBasis pod_blockwise(const Matrix& X, const std::vector<Index>& block_sizes, Index n,
                       Matrix* block_singular_values) {
  Index total = 0;
  for (Index b : block_sizes) total += b;
  detail::require(total == X.rows(), "pod_blockwise: block sizes must add up to the state size");
  const auto nb = static_cast<Index>(block_sizes.size());
  PODBasis out;
  out.V = Matrix::Zero(X.rows(), nb * n);
  const Index kmax = std::min<Index>(X.cols(), *std::min_element(block_sizes.begin(), block_sizes.end()));
  if (block_singular_values) *block_singular_values = Matrix::Zero(kmax, nb);
  Index row = 0;
  for (Index b = 0; b < nb; ++b) {
    const Index sz = block_sizes[static_cast<std::size_t>(b)];
    const PODBasis pb = pod_basis(X.middleRows(row, sz), n);
    out.V.block(row, b * n, sz, n) = pb.V;
    if (block_singular_values) block_singular_values->col(b) = pb.singular_values.head(kmax);
    if (b == 0) out.singular_values = pb.singular_values;
    row += sz;
  }
  return out;
}

QBSystem galerkin_reduce(const QBSystem& sys, const Matrix& V) {
  detail::require(V.rows() == sys.n(), "galerkin_reduce: V must have N rows");
  const Matrix Vt = V.transpose();
  std::vector<Matrix> Nr;
  for (const auto& Ni : sys.N()) Nr.push_back(Vt * Ni * V);
  std::optional<Matrix> Cr;
  if (sys.C()) Cr = Matrix(*sys.C() * V);
  return QBSystem(Vt * sys.E() * V, Vt * sys.A() * V, project_quadratic(Vt, sys.H(), V),
                  std::move(Nr), Vt * sys.B(), std::move(Cr));
}

namespace {

Matrix quadratic_regressors(const Matrix& X) {
  const Index n = X.rows(), K = X.cols();
  Matrix Q(n * (n + 1) / 2, K);
  Index p = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j, ++p) Q.row(p) = X.row(i).cwiseProduct(X.row(j));
  return Q;
}

}  // namespace

QBSystem operator_inference_reduced(const Matrix& X, const Matrix& Xdot, const Matrix& U,
                                    const OpInfOptions& opts) {
  const Index n = X.rows(), K = X.cols(), m = U.rows();
  detail::require(Xdot.rows() == n && Xdot.cols() == K, "operator_inference: Xdot shape mismatch");
  detail::require(m == 0 || U.cols() == K, "operator_inference: U shape mismatch");
  detail::require(opts.regularization >= 0.0, "operator_inference: negative regularization");
  const Index nq = n * (n + 1) / 2;
  const Index cols = n + nq + m;

  Matrix D(K, cols);
  D.leftCols(n) = X.transpose();
  D.middleCols(n, nq) = quadratic_regressors(X).transpose();
  if (m > 0) D.rightCols(m) = U.transpose();

  Eigen::ColPivHouseholderQR<Matrix> cp(D);
  const Vector rdiag = cp.matrixR().diagonal().cwiseAbs();
  const double rmax = rdiag.size() > 0 ? rdiag.maxCoeff() : 0.0;
  const double rmin = rdiag.size() > 0 ? rdiag.minCoeff() : 0.0;
  const double cond = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
  if (opts.regularization == 0.0 && (K < cols || !(cond <= opts.max_condition))) {
    std::ostringstream os;
    os << "operator_inference: data matrix is rank deficient (condition " << cond
       << "); supply a ridge regularization";
    throw RankDeficient(os.str(), cond);
  }

  Matrix O;
  if (opts.regularization > 0.0) {
    Matrix Daug(K + cols, cols);
    Daug.topRows(K) = D;
    Daug.bottomRows(cols) = std::sqrt(opts.regularization) * Matrix::Identity(cols, cols);
    Matrix rhs = Matrix::Zero(K + cols, n);
    rhs.topRows(K) = Xdot.transpose();
    O = Daug.colPivHouseholderQr().solve(rhs);
  } else {
    O = cp.solve(Matrix(Xdot.transpose()));
  }

  Matrix A = O.topRows(n).transpose();
  const Matrix F = O.middleRows(n, nq).transpose();
  Matrix B = m > 0 ? Matrix(O.bottomRows(m).transpose()) : Matrix::Zero(n, 0);
  Matrix H = Matrix::Zero(n, n * n);
  Index p = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j, ++p) {
      if (i == j) {
        H.col(kron_col(i, i, n)) = F.col(p);
      } else {
        H.col(kron_col(i, j, n)) = 0.5 * F.col(p);
        H.col(kron_col(j, i, n)) = 0.5 * F.col(p);
      }
    }
  return QBSystem(Matrix::Identity(n, n), std::move(A), H,
                  std::vector<Matrix>(m, Matrix::Zero(n, n)), std::move(B));
}

QBSystem operator_inference(const SnapshotSet& snap, const Matrix& V, const OpInfOptions& opts) {
  detail::require(V.rows() == snap.X.rows(), "operator_inference: basis has wrong row count");
  if (snap.Xdot.size() == 0)
    throw Error("operator_inference: snapshot derivatives missing (run estimate_derivatives)");
  const Matrix X = V.transpose() * snap.X;
  const Matrix Xdot = V.transpose() * snap.Xdot;
  const Matrix U = snap.U.size() > 0 ? snap.U : Matrix(0, snap.X.cols());
  return operator_inference_reduced(X, Xdot, U, opts);
}

double opinf_residual(const QBSystem& rom, const Matrix& X, const Matrix& Xdot, const Matrix& U) {
  Matrix R = Xdot;
  for (Index k = 0; k < X.cols(); ++k) {
    const Vector uk = U.rows() > 0 ? Vector(U.col(k)) : Vector();
    R.col(k) -= rom.force(X.col(k), uk);
  }
  return R.norm();
}

double reconstruction_error(const QBSystem& rom, const Matrix& V, const SnapshotSet& snap,
                            const InputSignal& u, const IntegrateOptions& opts, bool* diverged) {
  if (diverged) *diverged = false;
  const Vector x0 = V.transpose() * snap.X.col(0);
  IntegrateOptions o = opts;
  o.output_times = snap.t;
  o.breakpoints = snap.t;
  Trajectory tr;
  try {
    tr = integrate(rom, x0, u, snap.t.front(), snap.t.back(), o);
  } catch (const Error&) {
    if (diverged) *diverged = true;
    return std::numeric_limits<double>::infinity();
  }
  if (tr.status == TerminalStatus::Diverged || tr.X.cols() != snap.X.cols()) {
    if (diverged) *diverged = true;
    return std::numeric_limits<double>::infinity();
  }
  return (snap.X - V * tr.X).norm() / snap.X.norm();
}

Index suggest_order(const Vector& singular_values, double rel_tol) {
  if (singular_values.size() == 0) return 0;
  Index k = 0;
  while (k < singular_values.size() && singular_values(k) > rel_tol * singular_values(0)) ++k;
  return k;
}

}  // namespace qbstab
