#include "qbstab/qbsys.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "qbstab/densela.hpp"

namespace qbstab {

SparseMatrix to_sparse(const Matrix& dense, double drop_tol) {
  std::vector<Eigen::Triplet<double>> trip;
  for (Index j = 0; j < dense.cols(); ++j)
    for (Index i = 0; i < dense.rows(); ++i)
      if (std::abs(dense(i, j)) > drop_tol) trip.emplace_back(i, j, dense(i, j));
  SparseMatrix out(dense.rows(), dense.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

SparseMatrix symmetrize_quadratic(const SparseMatrix& raw) {
  const Index n = raw.rows();
  detail::require(raw.cols() == n * n, "symmetrize_quadratic: H must be n x n^2");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * raw.nonZeros());
  for (Index c = 0; c < raw.outerSize(); ++c) {
    const Index i = c / n, j = c % n;
    const Index swapped = kron_col(j, i, n);
    for (SparseMatrix::InnerIterator it(raw, c); it; ++it) {
      trip.emplace_back(it.row(), c, 0.5 * it.value());
      trip.emplace_back(it.row(), swapped, 0.5 * it.value());
    }
  }
  SparseMatrix out(n, n * n);
  out.setFromTriplets(trip.begin(), trip.end());
  out.prune(0.0);
  return out;
}

Vector QuadSlices::apply(const Vector& x) const {
  Vector out = Vector::Zero(x.size());
  for (Index i = 0; i < size(); ++i) out.noalias() += x(i) * (K[i] * x);
  return out;
}

Matrix QuadSlices::assemble() const {
  const Index n = size();
  Matrix H(n, n * n);
  for (Index i = 0; i < n; ++i) H.middleCols(i * n, n) = K[i];
  return H;
}

QBSystem::QBSystem(Matrix E, Matrix A, SparseMatrix H, std::vector<Matrix> N, Matrix B,
                   std::optional<Matrix> C)
    : E_(std::move(E)), A_(std::move(A)), N_(std::move(N)), B_(std::move(B)), C_(std::move(C)) {
  detail::require(H.rows() == A_.rows() && H.cols() == A_.rows() * A_.rows(),
                  "QBSystem: H must be n x n^2");
  H_ = symmetrize_quadratic(H);
  validate_and_factor();
}

QBSystem::QBSystem(Matrix E, Matrix A, const Matrix& H, std::vector<Matrix> N, Matrix B,
                   std::optional<Matrix> C)
    : QBSystem(std::move(E), std::move(A), to_sparse(H), std::move(N), std::move(B),
               std::move(C)) {}

QBSystem QBSystem::autonomous(Matrix A, const Matrix& H) {
  const Index n = A.rows();
  return QBSystem(Matrix::Identity(n, n), std::move(A), H, {}, Matrix::Zero(n, 0));
}

QBSystem QBSystem::autonomous(Matrix E, Matrix A, SparseMatrix H) {
  const Index n = A.rows();
  return QBSystem(std::move(E), std::move(A), std::move(H), {}, Matrix::Zero(n, 0));
}

void QBSystem::validate_and_factor() {
  const Index n = A_.rows();
  detail::require(A_.cols() == n, "QBSystem: A must be square");
  detail::require(E_.rows() == n && E_.cols() == n, "QBSystem: E must be n x n");
  detail::require(B_.rows() == n, "QBSystem: B must have n rows");
  detail::require(static_cast<Index>(N_.size()) == B_.cols() || N_.empty(),
                  "QBSystem: need one bilinear matrix per input (or none)");
  for (const auto& Ni : N_)
    detail::require(Ni.rows() == n && Ni.cols() == n, "QBSystem: N_i must be n x n");
  if (C_) detail::require(C_->cols() == n, "QBSystem: C must have n columns");
  if (N_.empty() && B_.cols() > 0) N_.assign(B_.cols(), Matrix::Zero(n, n));

  quad_terms_.clear();
  quad_terms_.reserve(static_cast<std::size_t>(H_.nonZeros()));
  for (Index c = 0; c < H_.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(H_, c); it; ++it)
      quad_terms_.push_back({it.row(), c / n, c % n, it.value()});

  identity_mass_ = E_.isIdentity(0.0);
  diagonal_mass_ = n > 0 && Matrix(E_.diagonal().asDiagonal()) == E_;
  if (n == 0) return;
  if (identity_mass_) {
    mass_condition_ = 1.0;
  } else if (diagonal_mass_) {
    const Vector d = E_.diagonal().cwiseAbs();
    mass_condition_ = d.minCoeff() > 0.0 ? d.maxCoeff() / d.minCoeff()
                                         : std::numeric_limits<double>::infinity();
  } else {
    mass_condition_ = la::condition_number(E_);
    if (!std::isfinite(mass_condition_) ||
        mass_condition_ > 1.0 / (n * std::numeric_limits<double>::epsilon())) {
      std::ostringstream os;
      os << "QBSystem: mass matrix E is numerically singular (cond = " << mass_condition_ << ")";
      throw FactorizationError(os.str());
    }
  }
  if (!std::isfinite(mass_condition_) ||
      mass_condition_ > 1.0 / (n * std::numeric_limits<double>::epsilon()))
    throw FactorizationError("QBSystem: mass matrix E is numerically singular");
  if (!identity_mass_ && !diagonal_mass_) mass_lu_.compute(E_);
}

Vector QBSystem::quadratic(const Vector& x, const Vector& y) const {
  const Index n = this->n();
  detail::require(x.size() == n && y.size() == n, "quadratic: dimension mismatch");
  Vector out = Vector::Zero(n);
  for (const auto& q : quad_terms_) out(q.row) += q.value * x(q.i) * y(q.j);
  return out;
}

Matrix QBSystem::quadratic_operator(const Vector& x) const {
  const Index n = this->n();
  detail::require(x.size() == n, "quadratic_operator: dimension mismatch");
  // column j of H(I kron x) is sum_k H[:, (j,k)] x_k
  Matrix out = Matrix::Zero(n, n);
  for (const auto& q : quad_terms_) out(q.row, q.i) += q.value * x(q.j);
  return out;
}

Vector QBSystem::force(const Vector& x, const Vector& u) const {
  detail::require(x.size() == n(), "rhs: state dimension mismatch");
  detail::require(u.size() == 0 || u.size() == m(), "rhs: input dimension mismatch");
  Vector f = A_ * x + quadratic(x);
  if (u.size() > 0) {
    f.noalias() += B_ * u;
    for (Index i = 0; i < m(); ++i)
      if (u(i) != 0.0) f.noalias() += u(i) * (N_[i] * x);
  }
  return f;
}

Matrix QBSystem::force_jacobian(const Vector& x, const Vector& u) const {
  detail::require(u.size() == 0 || u.size() == m(), "jacobian: input dimension mismatch");
  Matrix J = A_ + 2.0 * quadratic_operator(x);
  if (u.size() > 0)
    for (Index i = 0; i < m(); ++i)
      if (u(i) != 0.0) J += u(i) * N_[i];
  return J;
}

Vector QBSystem::rhs(const Vector& x, const Vector& u) const { return solve_mass(force(x, u)); }

Matrix QBSystem::jacobian(const Vector& x, const Vector& u) const {
  return solve_mass(force_jacobian(x, u));
}

Vector QBSystem::solve_mass(const Vector& b) const {
  if (identity_mass_) return b;
  if (diagonal_mass_) return b.cwiseQuotient(E_.diagonal());
  return mass_lu_.solve(b);
}

Matrix QBSystem::solve_mass(const Matrix& b) const {
  if (identity_mass_) return b;
  if (diagonal_mass_) return E_.diagonal().cwiseInverse().asDiagonal() * b;
  return mass_lu_.solve(b);
}

Vector QBSystem::apply_mass(const Vector& x) const {
  if (identity_mass_) return x;
  if (diagonal_mass_) return E_.diagonal().cwiseProduct(x);
  return E_ * x;
}

QuadSlices QBSystem::slices() const {
  const Index n = this->n();
  QuadSlices s;
  s.K.assign(n, Matrix::Zero(n, n));
  for (const auto& q : quad_terms_) s.K[q.i](q.row, q.j) = q.value;
  return s;
}

QBSystem shift_equilibrium(const QBSystem& sys, const Vector& x_e, double tol_eq) {
  detail::require(x_e.size() == sys.n(), "shift_equilibrium: dimension mismatch");
  const Vector residual = sys.A() * x_e + sys.quadratic(x_e);
  const double scale = la::spectral_norm(sys.A()) * x_e.norm() + 1.0;
  if (residual.norm() > tol_eq * scale) {
    std::ostringstream os;
    os << "shift_equilibrium: ||A x_e + H(x_e kron x_e)|| = " << residual.norm()
       << " exceeds tolerance " << tol_eq * scale;
    throw NotAnEquilibrium(os.str());
  }
  Matrix A = sys.A() + 2.0 * sys.quadratic_operator(x_e);
  Matrix B = sys.B();
  for (Index i = 0; i < sys.m(); ++i) B.col(i) += sys.N()[i] * x_e;
  return QBSystem(sys.E(), std::move(A), sys.H(), sys.N(), std::move(B), sys.C());
}

QBSystem absorb_linear_feedback(const QBSystem& sys, const Matrix& K) {
  const Index n = sys.n(), m = sys.m();
  detail::require(K.rows() == m && K.cols() == n, "absorb_linear_feedback: K must be m x n");
  Matrix A = sys.A() + sys.B() * K;
  // N_i x (K x)_i = sum_j K(i,j) x_j N_i x, i.e. column (j, l) gains K(i,j) N_i(:, l)
  Matrix added = Matrix::Zero(n, n * n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      if (K(i, j) != 0.0) added.middleCols(j * n, n) += K(i, j) * sys.N()[i];
  SparseMatrix H = sys.H() + to_sparse(added);
  return QBSystem(sys.E(), std::move(A), std::move(H), {}, Matrix::Zero(n, 0), sys.C());
}

QBSystem autonomous_part(const QBSystem& sys) {
  return QBSystem(sys.E(), sys.A(), sys.H(), {}, Matrix::Zero(sys.n(), 0), sys.C());
}

Matrix project_quadratic(const Matrix& w_left, const SparseMatrix& H, const Matrix& V) {
  const Index N = H.rows();
  const Index r = V.cols();
  detail::require(V.rows() == N && H.cols() == N * N && w_left.cols() == N,
                  "project_quadratic: dimension mismatch");
  Matrix out = Matrix::Zero(w_left.rows(), r * r);
  Vector col(w_left.rows());
  Matrix outer(r, r);
  for (Index c = 0; c < H.outerSize(); ++c) {
    if (H.outerIndexPtr()[c] == H.outerIndexPtr()[c + 1]) continue;
    col.setZero();
    for (SparseMatrix::InnerIterator it(H, c); it; ++it) col += it.value() * w_left.col(it.row());
    const Index i = c / N, j = c % N;
    // (V kron V) row (i, j) is V(i,:) kron V(j,:)
    outer.noalias() = V.row(i).transpose() * V.row(j);
    for (Index a = 0; a < r; ++a)
      for (Index b = 0; b < r; ++b) {
        const double w = outer(a, b);
        if (w != 0.0) out.col(kron_col(a, b, r)) += w * col;
      }
  }
  return out;
}

}  // namespace qbstab
