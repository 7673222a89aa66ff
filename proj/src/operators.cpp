#include "gkeb/operators.hpp"

#include "gkeb/errors.hpp"
#include "gkeb/random.hpp"

#include <algorithm>
#include <string>

namespace gkeb {

namespace {

void check_input(const char* what, Index expected, Index got, bool finite) {
  if (got != expected) {
    throw ValidationError(std::string(what) + ": dimension mismatch (expected " +
                          std::to_string(expected) + ", got " + std::to_string(got) + ")");
  }
  if (!finite) throw ValidationError(std::string(what) + ": non-finite input");
}

}  // namespace

LinearOperator::LinearOperator(Index rows, Index cols) : rows_(rows), cols_(cols) {
  if (rows <= 0 || cols <= 0) throw ValidationError("operator dimensions must be positive");
}

Vector LinearOperator::apply(const VectorCRef& x) const {
  check_input("apply", cols_, x.size(), x.allFinite());
  Vector y(rows_);
  forward_kernel(x, y);
  forward_count_.fetch_add(1, std::memory_order_relaxed);
  return y;
}

Vector LinearOperator::apply_adjoint(const VectorCRef& y) const {
  check_input("apply_adjoint", rows_, y.size(), y.allFinite());
  Vector x(cols_);
  adjoint_kernel(y, x);
  adjoint_count_.fetch_add(1, std::memory_order_relaxed);
  return x;
}

Matrix LinearOperator::apply_block(const MatrixCRef& X) const {
  check_input("apply_block", cols_, X.rows(), X.allFinite());
  Matrix Y(rows_, X.cols());
  forward_block_kernel(X, Y);
  forward_count_.fetch_add(X.cols(), std::memory_order_relaxed);
  return Y;
}

Matrix LinearOperator::apply_adjoint_block(const MatrixCRef& Y) const {
  check_input("apply_adjoint_block", rows_, Y.rows(), Y.allFinite());
  Matrix X(cols_, Y.cols());
  adjoint_block_kernel(Y, X);
  adjoint_count_.fetch_add(Y.cols(), std::memory_order_relaxed);
  return X;
}

void LinearOperator::forward_block_kernel(const MatrixCRef& X, Eigen::Ref<Matrix> Y) const {
  for (Index j = 0; j < X.cols(); ++j) forward_kernel(X.col(j), Y.col(j));
}

void LinearOperator::adjoint_block_kernel(const MatrixCRef& Y, Eigen::Ref<Matrix> X) const {
  for (Index j = 0; j < Y.cols(); ++j) adjoint_kernel(Y.col(j), X.col(j));
}

MatvecCount LinearOperator::counts() const {
  return {forward_count_.load(std::memory_order_relaxed),
          adjoint_count_.load(std::memory_order_relaxed)};
}

void LinearOperator::reset_counts() const {
  forward_count_.store(0);
  adjoint_count_.store(0);
}

// --- DenseOperator -----------------------------------------------------------

DenseOperator::DenseOperator(Matrix A) : LinearOperator(A.rows(), A.cols()), A_(std::move(A)) {}

void DenseOperator::forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const {
  y.noalias() = A_ * x;
}
void DenseOperator::adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const {
  x.noalias() = A_.transpose() * y;
}
void DenseOperator::forward_block_kernel(const MatrixCRef& X, Eigen::Ref<Matrix> Y) const {
  Y.noalias() = A_ * X;
}
void DenseOperator::adjoint_block_kernel(const MatrixCRef& Y, Eigen::Ref<Matrix> X) const {
  X.noalias() = A_.transpose() * Y;
}

// --- SparseOperator ----------------------------------------------------------

SparseOperator::SparseOperator(SparseMatrix A)
    : LinearOperator(A.rows(), A.cols()), A_(std::move(A)) {
  A_.makeCompressed();
}

void SparseOperator::forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const {
  y.noalias() = A_ * x;
}
void SparseOperator::adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const {
  x.noalias() = A_.transpose() * y;
}

// --- trivial operators -------------------------------------------------------

IdentityOperator::IdentityOperator(Index n) : LinearOperator(n, n) {}
void IdentityOperator::forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const { y = x; }
void IdentityOperator::adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const { x = y; }

ZeroOperator::ZeroOperator(Index rows, Index cols) : LinearOperator(rows, cols) {}
void ZeroOperator::forward_kernel(const VectorCRef&, Eigen::Ref<Vector> y) const { y.setZero(); }
void ZeroOperator::adjoint_kernel(const VectorCRef&, Eigen::Ref<Vector> x) const { x.setZero(); }

// --- MaskedOperator ----------------------------------------------------------

MaskedOperator::MaskedOperator(OperatorHandle inner, std::vector<Index> retained, Index full_cols)
    : LinearOperator(inner ? inner->rows() : 1, full_cols),
      inner_(std::move(inner)),
      retained_(std::move(retained)) {
  if (!inner_) throw ValidationError("MaskedOperator: null inner operator");
  if (static_cast<Index>(retained_.size()) != inner_->cols()) {
    throw ValidationError("MaskedOperator: mask size must equal inner operator columns");
  }
  if (!std::is_sorted(retained_.begin(), retained_.end()) ||
      std::adjacent_find(retained_.begin(), retained_.end()) != retained_.end()) {
    throw ValidationError("MaskedOperator: retained indices must be strictly increasing");
  }
  if (!retained_.empty() && (retained_.front() < 0 || retained_.back() >= full_cols)) {
    throw ValidationError("MaskedOperator: retained index out of range");
  }
}

void MaskedOperator::forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const {
  Vector restricted(static_cast<Index>(retained_.size()));
  for (std::size_t i = 0; i < retained_.size(); ++i) restricted[static_cast<Index>(i)] = x[retained_[i]];
  y = inner_->apply(restricted);
}

void MaskedOperator::adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const {
  const Vector inner_x = inner_->apply_adjoint(y);
  x.setZero();
  for (std::size_t i = 0; i < retained_.size(); ++i) x[retained_[i]] = inner_x[static_cast<Index>(i)];
}

// --- ComposedOperator --------------------------------------------------------

ComposedOperator::ComposedOperator(OperatorHandle left, OperatorHandle right)
    : LinearOperator(left ? left->rows() : 1, right ? right->cols() : 1),
      left_(std::move(left)),
      right_(std::move(right)) {
  if (!left_ || !right_) throw ValidationError("ComposedOperator: null factor");
  if (left_->cols() != right_->rows()) {
    throw ValidationError("ComposedOperator: inner dimensions do not agree");
  }
}

void ComposedOperator::forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const {
  y = left_->apply(right_->apply(x));
}
void ComposedOperator::adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const {
  x = right_->apply_adjoint(left_->apply_adjoint(y));
}

// --- NoiseCovariance ---------------------------------------------------------

NoiseCovariance::NoiseCovariance(double theta1, Index m) : theta1_(theta1), m_(m) {
  if (!(theta1 > 0.0) || !std::isfinite(theta1)) {
    throw DomainError("noise variance theta1 must be positive and finite");
  }
  if (m <= 0) throw ValidationError("noise covariance dimension must be positive");
}

double NoiseCovariance::logdet() const { return static_cast<double>(m_) * std::log(theta1_); }

double NoiseCovariance::deriv_scale(int i) const {
  if (i < 1) throw ValidationError("hyperparameter index is 1-based");
  return i == 1 ? 1.0 : 0.0;
}

double NoiseCovariance::deriv_inv_inner(int i) const {
  return deriv_scale(i) * static_cast<double>(m_) / theta1_;
}

// --- probes ------------------------------------------------------------------

double adjoint_mismatch(const LinearOperator& op, int probes, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const Vector x = standard_normal(op.cols(), rng);
    const Vector y = standard_normal(op.rows(), rng);
    const Vector Ax = op.apply(x);
    const Vector Aty = op.apply_adjoint(y);
    const double lhs = Ax.dot(y);
    const double rhs = x.dot(Aty);
    const double scale = Ax.norm() * y.norm() + x.norm() * Aty.norm();
    if (scale > 0.0) worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return worst;
}

Matrix assemble_dense(const LinearOperator& op) {
  return op.apply_block(Matrix::Identity(op.cols(), op.cols()));
}

}  // namespace gkeb
