#pragma once

#include "gkeb/operators.hpp"

#include <memory>
#include <vector>

namespace gkeb {

/// Isotropic Matérn kernel. sigma2 = theta2^2, ell = theta3.
struct MaternKernel {
  double nu = 1.5;
  double sigma2 = 1.0;
  double ell = 1.0;
};

/// True when nu is one of the closed-form half-integers 1/2, 3/2, 5/2.
bool has_closed_form(double nu);

/// M(r). Returns sigma2 exactly at r = 0.
double matern_eval(const MaternKernel& kernel, double r);

/// M(r) through the modified Bessel function regardless of nu.
double matern_eval_bessel(const MaternKernel& kernel, double r);

enum class MaternParam { SigmaStd, Ell };

struct MaternDeriv {
  double value = 0.0;
  bool approximate = false;  // finite difference fallback was used
};

/// dM/dtheta2 = (2/theta2) M for SigmaStd; dM/dell for Ell.
MaternDeriv matern_deriv(const MaternKernel& kernel, double r, MaternParam wrt);

/// Equispaced rectangular grid of cell centres; 1D when ny == 1.
/// Unknowns are ordered x-fastest: index = ix + nx * iy.
struct GridSpec {
  Index nx = 1;
  Index ny = 1;
  double hx = 1.0;
  double hy = 1.0;

  Index size() const { return nx * ny; }
  bool is_1d() const { return ny == 1; }
  static GridSpec line(Index n, double h) { return {n, 1, h, 1.0}; }
  static GridSpec square(Index g, double h) { return {g, g, h, h}; }
};

/// Cell-centre coordinates as an n x 2 matrix (column 1 is zero for 1D grids).
Matrix grid_points(const GridSpec& grid);

enum class CovBackend { Dense, FftGrid };

/// Symmetric covariance (or covariance-derivative) operator.
/// deriv_index 0 is Q itself; 2 and 3 give dQ/dtheta2 and dQ/dtheta3.
class CovarianceOperator : public LinearOperator {
 public:
  CovarianceOperator(Index n, MaternKernel kernel, int deriv_index, CovBackend backend);

  const MaternKernel& kernel() const { return kernel_; }
  int deriv_index() const { return deriv_index_; }
  CovBackend backend() const { return backend_; }
  /// True when the ell-derivative entries came from finite differences.
  bool approximate() const { return approximate_; }

 protected:
  void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const override {
    forward_kernel(y, x);
  }
  void adjoint_block_kernel(const MatrixCRef& Y, Eigen::Ref<Matrix> X) const override {
    forward_block_kernel(Y, X);
  }

  // Entry generator for the base matrix; deriv 2 reuses the Q entries and
  // scales the product by 2/theta2 afterwards.
  double entry(double r) const;
  double output_scale() const;

  MaternKernel kernel_;
  int deriv_index_;
  CovBackend backend_;
  bool approximate_ = false;
};

/// Explicitly assembled covariance on an arbitrary point set.
class DenseCovariance final : public CovarianceOperator {
 public:
  DenseCovariance(const Matrix& points, MaternKernel kernel, int deriv_index);
  DenseCovariance(const GridSpec& grid, MaternKernel kernel, int deriv_index);

  /// The assembled matrix including the derivative scale.
  Matrix matrix() const;

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;
  void forward_block_kernel(const MatrixCRef& X, Eigen::Ref<Matrix> Y) const override;

 private:
  Matrix base_;
};

/// Block-Toeplitz covariance on an equispaced grid applied through a
/// 2x-per-dimension circulant embedding and real FFTs. The embedding
/// spectrum is used as is: the zero padding makes the product equal to the
/// Toeplitz product whatever the sign of the embedding eigenvalues.
class FftCovariance final : public CovarianceOperator {
 public:
  FftCovariance(const GridSpec& grid, MaternKernel kernel, int deriv_index);
  ~FftCovariance() override;

  const GridSpec& grid() const { return grid_; }
  /// Smallest eigenvalue of the circulant embedding (diagnostic only).
  double min_embedding_eigenvalue() const { return min_eig_; }

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;

 private:
  struct Plans;
  GridSpec grid_;
  Index Nx_, Ny_;
  std::vector<double> spectrum_;  // real part of the embedding DFT, Ny x (Nx/2+1)
  double min_eig_ = 0.0;
  std::unique_ptr<Plans> plans_;
};

/// Build Q or one of its derivatives. Throws ValidationError for the FFT
/// backend on a malformed grid and for deriv indices outside {0,2,3}.
std::shared_ptr<CovarianceOperator> build_cov_operator(const GridSpec& grid,
                                                       const MaternKernel& kernel,
                                                       int deriv_index, CovBackend backend);
std::shared_ptr<CovarianceOperator> build_cov_operator(const Matrix& points,
                                                       const MaternKernel& kernel,
                                                       int deriv_index);

/// Q(theta) over a fixed geometry: theta2 sets the standard deviation,
/// theta3 the correlation length; nu is fixed.
class PriorFamily {
 public:
  PriorFamily(GridSpec grid, double nu, CovBackend backend);
  PriorFamily(Matrix points, double nu);

  Index size() const;
  double nu() const { return nu_; }
  CovBackend backend() const { return backend_; }
  const GridSpec* grid() const { return has_grid_ ? &grid_ : nullptr; }

  MaternKernel kernel(double theta2, double theta3) const;
  /// deriv_index in {0, 1, 2, 3}; index 1 yields the zero operator.
  OperatorHandle build(const Vector& theta, int deriv_index) const;
  /// Whether Q depends on theta_i (1-based).
  static bool depends_on(int i) { return i == 2 || i == 3; }

 private:
  bool has_grid_;
  GridSpec grid_;
  Matrix points_;
  double nu_;
  CovBackend backend_;
};

}  // namespace gkeb
