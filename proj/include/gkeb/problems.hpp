#pragma once

#include "gkeb/covariance.hpp"
#include "gkeb/operators.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

namespace gkeb {

/// Midpoint discretization of the Volterra heat operator on [0,1]:
/// A(i,j) = h K((i-j+1/2)h) for i >= j, zero above the diagonal, with
/// K(g) = g^{-3/2} exp(-1/(4 kappa^2 g)) / (2 kappa sqrt(pi)).
class HeatOperator final : public LinearOperator {
 public:
  HeatOperator(Index n, double kappa);

  double kappa() const { return kappa_; }
  /// First column of the lower-triangular Toeplitz matrix.
  const Vector& column() const { return col_; }
  /// Dense lower-triangular matrix (built once, on first use).
  const Matrix& dense() const;

 protected:
  void forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const override;
  void adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const override;
  void forward_block_kernel(const MatrixCRef& X, Eigen::Ref<Matrix> Y) const override;
  void adjoint_block_kernel(const MatrixCRef& Y, Eigen::Ref<Matrix> X) const override;

 private:
  double kappa_;
  Vector col_;
  mutable std::once_flag dense_once_;
  mutable Matrix dense_;
};

/// The heat kernel K(g) for g > 0.
double heat_kernel(double gap, double kappa);

std::shared_ptr<HeatOperator> heat_1d(Index n, double kappa = 1.0);

/// Piecewise smooth pulse on the first half of [0,1], zero afterwards.
Vector heat_true_solution(Index n);

/// Ray through the unit square given by two points on its line.
struct Ray {
  double x0, y0, x1, y1;
};

/// Cell-intersection-length matrix of the given rays on a g x g grid of the
/// unit square (cells ordered x-fastest).
SparseOperator::SparseMatrix ray_matrix(Index g, const std::vector<Ray>& rays);

/// Length of the chord the ray's line cuts from the unit square.
double chord_length(const Ray& ray);

/// n_rays random straight rays (uniform angle and offset); rays that miss the
/// square are redrawn.
std::shared_ptr<SparseOperator> ray_tomo_2d(Index g, Index n_rays, std::uint64_t seed);

/// Truncated Karhunen-Loeve sample of the Matérn field on the grid. Entries
/// outside the mask (when given) are zero.
Vector smooth_phantom(const GridSpec& grid, const MaternKernel& kernel, Index truncation,
                      std::uint64_t seed, const std::vector<Index>* mask = nullptr);

struct NoisyData {
  Vector d;
  Vector eta;
};

/// eta = eps * lambda |d_clean| / |eps| with eps standard normal from seed.
NoisyData add_noise(const Vector& d_clean, double lambda_noise, std::uint64_t seed);

/// |s_true - s_hat| / |s_true|.
double relative_error(const Vector& s_true, const Vector& s_hat);

struct ProblemInstance {
  OperatorHandle A;
  Vector s_true;
  Vector d_clean;
  Vector d;
  double noise_level = 0.0;
  GridSpec grid;
  std::uint64_t seed = 0;
  std::vector<Index> mask;  // retained unknowns; empty means all

  /// Recomputes d_clean and the noise norm; throws NumericalError on mismatch.
  void check() const;
};

ProblemInstance make_heat_problem(Index n, double kappa, double noise_level, std::uint64_t seed);

struct TomoSpec {
  Index g = 32;
  Index n_rays = 720;
  MaternKernel phantom_kernel{2.5, 1.0, 0.2};
  Index truncation = 100;
  double noise_level = 0.02;
  bool disk_mask = false;  // keep cells whose centre lies in the inscribed disk
};

ProblemInstance make_tomo_problem(const TomoSpec& spec, std::uint64_t seed);

}  // namespace gkeb
