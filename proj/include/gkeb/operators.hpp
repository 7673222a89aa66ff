#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

namespace gkeb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using VectorCRef = Eigen::Ref<const Vector>;
using MatrixCRef = Eigen::Ref<const Matrix>;

struct MatvecCount {
  std::int64_t forward = 0;
  std::int64_t adjoint = 0;

  std::int64_t total() const { return forward + adjoint; }
  friend MatvecCount operator-(MatvecCount a, MatvecCount b) {
    return {a.forward - b.forward, a.adjoint - b.adjoint};
  }
  friend bool operator==(const MatvecCount&, const MatvecCount&) = default;
};

/// Matrix-free m x n linear map with forward/adjoint application.
///
/// Every public application validates its input (length and finiteness) and
/// bumps the matching counter by exactly one per vector; block applications
/// count one per column. Implementations only provide the raw kernels.
/// Instances are immutable after construction; counters are atomic so a
/// shared operator can be applied from several threads.
class LinearOperator {
 public:
  LinearOperator(Index rows, Index cols);
  virtual ~LinearOperator() = default;

  LinearOperator(const LinearOperator&) = delete;
  LinearOperator& operator=(const LinearOperator&) = delete;

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  Vector apply(const VectorCRef& x) const;
  Vector apply_adjoint(const VectorCRef& y) const;

  /// Column-wise application to a block; counts one matvec per column.
  Matrix apply_block(const MatrixCRef& X) const;
  Matrix apply_adjoint_block(const MatrixCRef& Y) const;

  MatvecCount counts() const;
  void reset_counts() const;

 protected:
  virtual void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const = 0;
  virtual void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const = 0;
  // Overridable when a backend has a faster multi-column path.
  virtual void forward_block_kernel(const MatrixCRef& X, Eigen::Ref<Matrix> Y) const;
  virtual void adjoint_block_kernel(const MatrixCRef& Y, Eigen::Ref<Matrix> X) const;

 private:
  Index rows_;
  Index cols_;
  mutable std::atomic<std::int64_t> forward_count_{0};
  mutable std::atomic<std::int64_t> adjoint_count_{0};
};

using OperatorHandle = std::shared_ptr<const LinearOperator>;

/// Explicit dense matrix.
class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(Matrix A);
  const Matrix& matrix() const { return A_; }

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;
  void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const override;
  void forward_block_kernel(const MatrixCRef& X, Eigen::Ref<Matrix> Y) const override;
  void adjoint_block_kernel(const MatrixCRef& Y, Eigen::Ref<Matrix> X) const override;

 private:
  Matrix A_;
};

/// Compressed sparse rows (used by the ray-tomography generator).
class SparseOperator final : public LinearOperator {
 public:
  using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
  explicit SparseOperator(SparseMatrix A);
  const SparseMatrix& matrix() const { return A_; }

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;
  void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const override;

 private:
  SparseMatrix A_;
};

class IdentityOperator final : public LinearOperator {
 public:
  explicit IdentityOperator(Index n);

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;
  void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const override;
};

class ZeroOperator final : public LinearOperator {
 public:
  ZeroOperator(Index rows, Index cols);

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;
  void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const override;
};

/// Operator on a full grid whose inner operator only sees the retained
/// (masked-in) entries: forward restricts x to the mask and applies the
/// inner operator; the adjoint zero-fills every position outside the mask.
/// As a matrix this is the inner operator's columns scattered into the
/// retained positions, with zero columns elsewhere.
class MaskedOperator final : public LinearOperator {
 public:
  MaskedOperator(OperatorHandle inner, std::vector<Index> retained, Index full_cols);

  const std::vector<Index>& retained() const { return retained_; }
  const OperatorHandle& inner() const { return inner_; }

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;
  void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const override;

 private:
  OperatorHandle inner_;
  std::vector<Index> retained_;
};

/// Product left * right.
class ComposedOperator final : public LinearOperator {
 public:
  ComposedOperator(OperatorHandle left, OperatorHandle right);

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;
  void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const override;

 private:
  OperatorHandle left_;
  OperatorHandle right_;
};

/// R(theta) = theta1 * I_m. All operations are closed form.
class NoiseCovariance {
 public:
  NoiseCovariance(double theta1, Index m);

  double theta1() const { return theta1_; }
  Index size() const { return m_; }

  Vector apply(const VectorCRef& x) const { return theta1_ * x; }
  Vector apply_inv(const VectorCRef& x) const { return x / theta1_; }
  Vector sqrt_apply(const VectorCRef& x) const { return std::sqrt(theta1_) * x; }
  double logdet() const;
  /// Scalar c with dR/dtheta_i = c * I (i is 1-based).
  double deriv_scale(int i) const;
  Vector deriv_apply(int i, const VectorCRef& x) const { return deriv_scale(i) * x; }
  /// <dR/dtheta_i, R^{-1}>_F.
  double deriv_inv_inner(int i) const;

 private:
  double theta1_;
  Index m_;
};

/// Largest relative adjoint mismatch |<Ax,y> - <x,A^T y>| / (|Ax||y| + |x||A^T y|)
/// over random probe pairs. Probes are applied through the public interface and
/// therefore counted.
double adjoint_mismatch(const LinearOperator& op, int probes, std::uint64_t seed);

/// Dense copy of op built from its action on the identity columns (counted).
Matrix assemble_dense(const LinearOperator& op);

}  // namespace gkeb
