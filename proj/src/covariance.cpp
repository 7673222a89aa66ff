#include "gkeb/covariance.hpp"

#include "gkeb/errors.hpp"
#include "gkeb/log.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <string>

namespace gkeb {

namespace {

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

void check_kernel(const MaternKernel& k) {
  if (!(k.nu > 0.0) || !(k.sigma2 > 0.0) || !(k.ell > 0.0) || !std::isfinite(k.nu) ||
      !std::isfinite(k.sigma2) || !std::isfinite(k.ell)) {
    throw DomainError("Matern kernel parameters must be positive and finite");
  }
}

bool near(double a, double b) { return std::abs(a - b) < 1e-12; }

}  // namespace

bool has_closed_form(double nu) { return near(nu, 0.5) || near(nu, 1.5) || near(nu, 2.5); }

double matern_eval_bessel(const MaternKernel& k, double r) {
  check_kernel(k);
  if (r < 0.0 || !std::isfinite(r)) throw DomainError("Matern distance must be nonnegative");
  if (r == 0.0) return k.sigma2;
  const double z = std::sqrt(2.0 * k.nu) * r / k.ell;
  if (z > 700.0) return 0.0;
  const double log_pref = (1.0 - k.nu) * std::log(2.0) - std::lgamma(k.nu) + k.nu * std::log(z);
  return k.sigma2 * std::exp(log_pref) * std::cyl_bessel_k(k.nu, z);
}

double matern_eval(const MaternKernel& k, double r) {
  check_kernel(k);
  if (r < 0.0 || !std::isfinite(r)) throw DomainError("Matern distance must be nonnegative");
  if (r == 0.0) return k.sigma2;
  const double z = std::sqrt(2.0 * k.nu) * r / k.ell;
  if (near(k.nu, 0.5)) return k.sigma2 * std::exp(-z);
  if (near(k.nu, 1.5)) return k.sigma2 * (1.0 + z) * std::exp(-z);
  if (near(k.nu, 2.5)) return k.sigma2 * (1.0 + z + z * z / 3.0) * std::exp(-z);
  return matern_eval_bessel(k, r);
}

MaternDeriv matern_deriv(const MaternKernel& k, double r, MaternParam wrt) {
  check_kernel(k);
  if (r < 0.0 || !std::isfinite(r)) throw DomainError("Matern distance must be nonnegative");
  if (wrt == MaternParam::SigmaStd) {
    return {2.0 / std::sqrt(k.sigma2) * matern_eval(k, r), false};
  }
  if (r == 0.0) return {0.0, false};
  const double z = std::sqrt(2.0 * k.nu) * r / k.ell;
  const double e = std::exp(-z);
  if (near(k.nu, 0.5)) return {k.sigma2 * e * z / k.ell, false};
  if (near(k.nu, 1.5)) return {k.sigma2 * z * z * e / k.ell, false};
  if (near(k.nu, 2.5)) return {k.sigma2 * z * z * (1.0 + z) * e / (3.0 * k.ell), false};
  const double h = 1e-6 * k.ell;
  MaternKernel kp = k, km = k;
  kp.ell += h;
  km.ell -= h;
  return {(matern_eval(kp, r) - matern_eval(km, r)) / (2.0 * h), true};
}

Matrix grid_points(const GridSpec& g) {
  Matrix P(g.size(), 2);
  for (Index iy = 0; iy < g.ny; ++iy)
    for (Index ix = 0; ix < g.nx; ++ix) {
      P(ix + g.nx * iy, 0) = (static_cast<double>(ix) + 0.5) * g.hx;
      P(ix + g.nx * iy, 1) = g.is_1d() ? 0.0 : (static_cast<double>(iy) + 0.5) * g.hy;
    }
  return P;
}

// --- CovarianceOperator ------------------------------------------------------

CovarianceOperator::CovarianceOperator(Index n, MaternKernel kernel, int deriv_index,
                                       CovBackend backend)
    : LinearOperator(n, n), kernel_(kernel), deriv_index_(deriv_index), backend_(backend) {
  check_kernel(kernel_);
  if (deriv_index != 0 && deriv_index != 2 && deriv_index != 3) {
    throw ValidationError("covariance derivative index must be 0, 2 or 3");
  }
  if (deriv_index == 3 && !has_closed_form(kernel_.nu)) {
    approximate_ = true;
    log_warning("ell-derivative for nu=" + std::to_string(kernel_.nu) +
                " uses central finite differences");
  }
}

double CovarianceOperator::entry(double r) const {
  if (deriv_index_ == 3) return matern_deriv(kernel_, r, MaternParam::Ell).value;
  return matern_eval(kernel_, r);
}

double CovarianceOperator::output_scale() const {
  return deriv_index_ == 2 ? 2.0 / std::sqrt(kernel_.sigma2) : 1.0;
}

// --- DenseCovariance ---------------------------------------------------------

DenseCovariance::DenseCovariance(const Matrix& points, MaternKernel kernel, int deriv_index)
    : CovarianceOperator(points.rows(), kernel, deriv_index, CovBackend::Dense) {
  const Index n = points.rows();
  base_.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    base_(j, j) = entry(0.0);
    for (Index i = j + 1; i < n; ++i) {
      const double r = (points.row(i) - points.row(j)).norm();
      base_(i, j) = base_(j, i) = entry(r);
    }
  }
}

DenseCovariance::DenseCovariance(const GridSpec& g, MaternKernel kernel, int deriv_index)
    : CovarianceOperator(g.size(), kernel, deriv_index, CovBackend::Dense) {
  const Index n = g.size();
  base_.resize(n, n);
  // Distances from index offsets so the Toeplitz structure is exact.
  for (Index j = 0; j < n; ++j) {
    const Index jx = j % g.nx, jy = j / g.nx;
    for (Index i = 0; i < n; ++i) {
      const Index ix = i % g.nx, iy = i / g.nx;
      const double dx = static_cast<double>(std::abs(ix - jx)) * g.hx;
      const double dy = static_cast<double>(std::abs(iy - jy)) * g.hy;
      base_(i, j) = entry(std::hypot(dx, dy));
    }
  }
}

Matrix DenseCovariance::matrix() const { return output_scale() * base_; }

void DenseCovariance::forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const {
  y.noalias() = base_ * x;
  if (deriv_index_ == 2) y *= output_scale();
}

void DenseCovariance::forward_block_kernel(const MatrixCRef& X, Eigen::Ref<Matrix> Y) const {
  Y.noalias() = base_ * X;
  if (deriv_index_ == 2) Y *= output_scale();
}

// --- FftCovariance -----------------------------------------------------------

struct FftCovariance::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

FftCovariance::FftCovariance(const GridSpec& g, MaternKernel kernel, int deriv_index)
    : CovarianceOperator(g.size(), kernel, deriv_index, CovBackend::FftGrid), grid_(g) {
  if (g.nx < 1 || g.ny < 1 || !(g.hx > 0.0) || !(g.hy > 0.0) || !std::isfinite(g.hx) ||
      !std::isfinite(g.hy)) {
    throw ValidationError("FFT covariance requires an equispaced grid with positive spacing");
  }
  Nx_ = 2 * g.nx;
  Ny_ = g.is_1d() ? 1 : 2 * g.ny;
  const Index nc = Nx_ / 2 + 1;

  // First column of the circulant embedding, symmetric wrap-around offsets.
  std::vector<double> c(static_cast<std::size_t>(Nx_ * Ny_));
  for (Index b = 0; b < Ny_; ++b) {
    const Index oy = b <= Ny_ / 2 ? b : Ny_ - b;
    for (Index a = 0; a < Nx_; ++a) {
      const Index ox = a <= Nx_ / 2 ? a : Nx_ - a;
      const double dx = static_cast<double>(ox) * g.hx;
      const double dy = g.is_1d() ? 0.0 : static_cast<double>(oy) * g.hy;
      c[static_cast<std::size_t>(a + Nx_ * b)] = entry(std::hypot(dx, dy));
    }
  }

  std::vector<std::complex<double>> chat(static_cast<std::size_t>(nc * Ny_));
  plans_ = std::make_unique<Plans>();
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    const int dims[2] = {static_cast<int>(Ny_), static_cast<int>(Nx_)};
    const int rank = g.is_1d() ? 1 : 2;
    const int* d = g.is_1d() ? dims + 1 : dims;
    std::vector<double> rbuf(c.size());
    std::vector<std::complex<double>> cbuf(chat.size());
    auto* cb = reinterpret_cast<fftw_complex*>(cbuf.data());
    plans_->forward =
        fftw_plan_dft_r2c(rank, d, rbuf.data(), cb, FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_->backward = fftw_plan_dft_c2r(rank, d, cb, rbuf.data(),
                                         FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
  }
  if (!plans_->forward || !plans_->backward) throw NumericalError("FFTW planning failed");
  fftw_execute_dft_r2c(plans_->forward, c.data(), reinterpret_cast<fftw_complex*>(chat.data()));

  spectrum_.resize(chat.size());
  min_eig_ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < chat.size(); ++i) {
    spectrum_[i] = chat[i].real();
    min_eig_ = std::min(min_eig_, spectrum_[i]);
  }
}

FftCovariance::~FftCovariance() {
  if (!plans_) return;
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->backward) fftw_destroy_plan(plans_->backward);
}

void FftCovariance::forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const {
  const Index nc = Nx_ / 2 + 1;
  std::vector<double> buf(static_cast<std::size_t>(Nx_ * Ny_), 0.0);
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(nc * Ny_));
  for (Index iy = 0; iy < grid_.ny; ++iy)
    for (Index ix = 0; ix < grid_.nx; ++ix)
      buf[static_cast<std::size_t>(ix + Nx_ * iy)] = x[ix + grid_.nx * iy];

  auto* sp = reinterpret_cast<fftw_complex*>(spec.data());
  fftw_execute_dft_r2c(plans_->forward, buf.data(), sp);
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= spectrum_[i];
  fftw_execute_dft_c2r(plans_->backward, sp, buf.data());

  const double inv_n = 1.0 / static_cast<double>(Nx_ * Ny_);
  for (Index iy = 0; iy < grid_.ny; ++iy)
    for (Index ix = 0; ix < grid_.nx; ++ix)
      y[ix + grid_.nx * iy] = inv_n * buf[static_cast<std::size_t>(ix + Nx_ * iy)];
  if (deriv_index_ == 2) y *= output_scale();
}

// --- builders ----------------------------------------------------------------

std::shared_ptr<CovarianceOperator> build_cov_operator(const GridSpec& grid,
                                                       const MaternKernel& kernel,
                                                       int deriv_index, CovBackend backend) {
  if (grid.nx < 1 || grid.ny < 1) throw ValidationError("grid dimensions must be positive");
  if (backend == CovBackend::FftGrid) {
    return std::make_shared<FftCovariance>(grid, kernel, deriv_index);
  }
  return std::make_shared<DenseCovariance>(grid, kernel, deriv_index);
}

std::shared_ptr<CovarianceOperator> build_cov_operator(const Matrix& points,
                                                       const MaternKernel& kernel,
                                                       int deriv_index) {
  if (points.rows() < 1) throw ValidationError("point set is empty");
  if (!points.allFinite()) throw ValidationError("point coordinates must be finite");
  return std::make_shared<DenseCovariance>(points, kernel, deriv_index);
}

// --- PriorFamily -------------------------------------------------------------

PriorFamily::PriorFamily(GridSpec grid, double nu, CovBackend backend)
    : has_grid_(true), grid_(grid), nu_(nu), backend_(backend) {
  if (!(nu > 0.0)) throw DomainError("Matern smoothness must be positive");
  if (grid.nx < 1 || grid.ny < 1) throw ValidationError("grid dimensions must be positive");
}

PriorFamily::PriorFamily(Matrix points, double nu)
    : has_grid_(false), points_(std::move(points)), nu_(nu), backend_(CovBackend::Dense) {
  if (!(nu > 0.0)) throw DomainError("Matern smoothness must be positive");
  if (points_.rows() < 1) throw ValidationError("point set is empty");
}

Index PriorFamily::size() const { return has_grid_ ? grid_.size() : points_.rows(); }

MaternKernel PriorFamily::kernel(double theta2, double theta3) const {
  if (!(theta2 > 0.0) || !(theta3 > 0.0)) {
    throw DomainError("prior standard deviation and correlation length must be positive");
  }
  return {nu_, theta2 * theta2, theta3};
}

OperatorHandle PriorFamily::build(const Vector& theta, int deriv_index) const {
  if (theta.size() < 3) throw ValidationError("prior family expects theta of length 3");
  if (deriv_index == 1) return std::make_shared<ZeroOperator>(size(), size());
  const MaternKernel k = kernel(theta[1], theta[2]);
  if (has_grid_) return build_cov_operator(grid_, k, deriv_index, backend_);
  return build_cov_operator(points_, k, deriv_index);
}

}  // namespace gkeb
