#include "gkeb/problems.hpp"

#include "gkeb/errors.hpp"
#include "gkeb/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gkeb {

// --- heat --------------------------------------------------------------------

double heat_kernel(double gap, double kappa) {
  if (!(gap > 0.0)) return 0.0;
  return std::pow(gap, -1.5) * std::exp(-1.0 / (4.0 * kappa * kappa * gap)) /
         (2.0 * kappa * std::sqrt(std::numbers::pi));
}

HeatOperator::HeatOperator(Index n, double kappa) : LinearOperator(n, n), kappa_(kappa) {
  if (n < 2) throw ValidationError("heat_1d: n must be at least 2");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("heat_1d: kappa must be positive");
  const double h = 1.0 / static_cast<double>(n);
  col_.resize(n);
  for (Index q = 0; q < n; ++q) col_[q] = h * heat_kernel((static_cast<double>(q) + 0.5) * h, kappa);
}

const Matrix& HeatOperator::dense() const {
  std::call_once(dense_once_, [this] {
    const Index n = rows();
    dense_ = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) dense_.col(j).tail(n - j) = col_.head(n - j);
  });
  return dense_;
}

void HeatOperator::forward_kernel(const VectorCRef& x, Eigen::Ref<Vector> y) const {
  const Index n = rows();
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index j = 0; j <= i; ++j) s += col_[i - j] * x[j];
    y[i] = s;
  }
}

void HeatOperator::adjoint_kernel(const VectorCRef& y, Eigen::Ref<Vector> x) const {
  const Index n = rows();
  for (Index j = 0; j < n; ++j) {
    double s = 0.0;
    for (Index i = j; i < n; ++i) s += col_[i - j] * y[i];
    x[j] = s;
  }
}

void HeatOperator::forward_block_kernel(const MatrixCRef& X, Eigen::Ref<Matrix> Y) const {
  Y.noalias() = dense().triangularView<Eigen::Lower>() * X;
}

void HeatOperator::adjoint_block_kernel(const MatrixCRef& Y, Eigen::Ref<Matrix> X) const {
  X.noalias() = dense().transpose().triangularView<Eigen::Upper>() * Y;
}

std::shared_ptr<HeatOperator> heat_1d(Index n, double kappa) {
  return std::make_shared<HeatOperator>(n, kappa);
}

Vector heat_true_solution(Index n) {
  if (n < 2) throw ValidationError("heat_true_solution: n must be at least 2");
  Vector x = Vector::Zero(n);
  const Index half = n / 2;
  for (Index i = 1; i <= half; ++i) {
    const double t = static_cast<double>(i) * 20.0 / static_cast<double>(n);
    double v;
    if (t < 2.0) {
      v = 0.75 * t * t / 4.0;
    } else if (t < 3.0) {
      v = 0.75 + (t - 2.0) * (3.0 - t);
    } else {
      v = 0.75 * std::exp(-(t - 3.0) * 2.0);
    }
    x[i - 1] = v;
  }
  return x;
}

// --- ray tomography ----------------------------------------------------------

namespace {

// Parameter interval [t0, t1] of p + t*dir inside the unit square.
bool clip_to_square(double px, double py, double dx, double dy, double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  auto slab = [&](double p, double d) {
    if (d == 0.0) return p >= 0.0 && p <= 1.0;
    double a = (0.0 - p) / d, b = (1.0 - p) / d;
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    return true;
  };
  if (!slab(px, dx) || !slab(py, dy)) return false;
  return t1 > t0;
}

}  // namespace

double chord_length(const Ray& r) {
  const double dx = r.x1 - r.x0, dy = r.y1 - r.y0;
  const double len = std::hypot(dx, dy);
  if (!(len > 0.0)) throw ValidationError("ray endpoints coincide");
  double t0, t1;
  if (!clip_to_square(r.x0, r.y0, dx / len, dy / len, t0, t1)) return 0.0;
  return t1 - t0;
}

SparseOperator::SparseMatrix ray_matrix(Index g, const std::vector<Ray>& rays) {
  if (g < 1) throw ValidationError("ray_matrix: grid size must be positive");
  const double h = 1.0 / static_cast<double>(g);
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> ts;
  for (std::size_t row = 0; row < rays.size(); ++row) {
    const Ray& r = rays[row];
    const double len = std::hypot(r.x1 - r.x0, r.y1 - r.y0);
    if (!(len > 0.0)) throw ValidationError("ray endpoints coincide");
    const double dx = (r.x1 - r.x0) / len, dy = (r.y1 - r.y0) / len;
    double t0, t1;
    if (!clip_to_square(r.x0, r.y0, dx, dy, t0, t1)) continue;
    ts.assign({t0, t1});
    // Crossings of the grid lines, Siddon style.
    for (Index i = 0; i <= g; ++i) {
      const double c = static_cast<double>(i) * h;
      if (dx != 0.0) {
        const double t = (c - r.x0) / dx;
        if (t > t0 && t < t1) ts.push_back(t);
      }
      if (dy != 0.0) {
        const double t = (c - r.y0) / dy;
        if (t > t0 && t < t1) ts.push_back(t);
      }
    }
    std::sort(ts.begin(), ts.end());
    for (std::size_t q = 0; q + 1 < ts.size(); ++q) {
      const double seg = ts[q + 1] - ts[q];
      if (!(seg > 1e-15)) continue;
      const double tm = 0.5 * (ts[q] + ts[q + 1]);
      const Index ix = std::clamp<Index>(static_cast<Index>(std::floor((r.x0 + tm * dx) / h)), 0, g - 1);
      const Index iy = std::clamp<Index>(static_cast<Index>(std::floor((r.y0 + tm * dy) / h)), 0, g - 1);
      trip.emplace_back(static_cast<Index>(row), ix + g * iy, seg);
    }
  }
  SparseOperator::SparseMatrix M(static_cast<Index>(rays.size()), g * g);
  M.setFromTriplets(trip.begin(), trip.end());
  M.makeCompressed();
  return M;
}

std::shared_ptr<SparseOperator> ray_tomo_2d(Index g, Index n_rays, std::uint64_t seed) {
  if (g < 4) throw ValidationError("ray_tomo_2d: grid size must be at least 4");
  if (n_rays < 1) throw ValidationError("ray_tomo_2d: need at least one ray");
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  const double half_diag = std::sqrt(0.5);
  std::uniform_real_distribution<double> offset(-half_diag, half_diag);
  const double min_len = 1e-6;
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(n_rays));
  while (static_cast<Index>(rays.size()) < n_rays) {
    const double phi = angle(rng), p = offset(rng);
    const double nx = std::cos(phi), ny = std::sin(phi);
    const double cx = 0.5 + p * nx, cy = 0.5 + p * ny;
    const Ray r{cx, cy, cx - ny, cy + nx};
    if (chord_length(r) > min_len) rays.push_back(r);
  }
  auto M = ray_matrix(g, rays);
  for (Index row = 0; row < M.rows(); ++row) {
    if (M.row(row).nonZeros() == 0) throw NumericalError("ray_tomo_2d: empty ray row");
  }
  return std::make_shared<SparseOperator>(std::move(M));
}

// --- phantoms and noise ------------------------------------------------------

Vector smooth_phantom(const GridSpec& grid, const MaternKernel& kernel, Index truncation,
                      std::uint64_t seed, const std::vector<Index>* mask) {
  const Index n = grid.size();
  if (truncation < 0 || truncation > n) throw ValidationError("smooth_phantom: truncation out of range");
  if (n > 4096) throw ValidationError("smooth_phantom: grid exceeds the dense eigendecomposition cap");
  Vector s = Vector::Zero(n);
  if (truncation > 0) {
    const DenseCovariance Q(grid, kernel, 0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q.matrix());
    Rng rng(seed);
    const Vector xi = standard_normal(truncation, rng);
    // Eigenvalues ascend; take the leading ones from the back.
    for (Index j = 0; j < truncation; ++j) {
      const Index col = n - 1 - j;
      const double lam = std::max(0.0, es.eigenvalues()[col]);
      Vector phi = es.eigenvectors().col(col);
      // Fix the sign so the field does not depend on the solver's convention.
      Index imax;
      phi.cwiseAbs().maxCoeff(&imax);
      if (phi[imax] < 0.0) phi = -phi;
      s.noalias() += xi[j] * std::sqrt(lam) * phi;
    }
  }
  if (mask) {
    Vector out = Vector::Zero(n);
    for (Index i : *mask) {
      if (i < 0 || i >= n) throw ValidationError("smooth_phantom: mask index out of range");
      out[i] = s[i];
    }
    s = out;
  }
  return s;
}

NoisyData add_noise(const Vector& d_clean, double lambda_noise, std::uint64_t seed) {
  if (!(lambda_noise >= 0.0) || !std::isfinite(lambda_noise)) {
    throw DomainError("noise level must be nonnegative");
  }
  const double dn = d_clean.norm();
  if (lambda_noise == 0.0) return {d_clean, Vector::Zero(d_clean.size())};
  if (!(dn > 0.0)) throw DomainError("noise scale undefined for zero data");
  Rng rng(seed);
  const Vector eps = standard_normal(d_clean.size(), rng);
  const Vector eta = eps * (lambda_noise * dn / eps.norm());
  return {d_clean + eta, eta};
}

double relative_error(const Vector& s_true, const Vector& s_hat) {
  if (s_true.size() != s_hat.size()) throw ValidationError("relative_error: size mismatch");
  const double nt = s_true.norm();
  if (!(nt > 0.0)) throw DomainError("relative_error: zero reference");
  return (s_true - s_hat).norm() / nt;
}

void ProblemInstance::check() const {
  const Vector dc = A->apply(s_true);
  const double scale = std::max(dc.norm(), 1e-300);
  if ((dc - d_clean).norm() > 1e-12 * scale) throw NumericalError("d_clean differs from A s_true");
  const double eta = (d - d_clean).norm();
  if (std::abs(eta - noise_level * d_clean.norm()) > 1e-12 * std::max(scale, eta)) {
    throw NumericalError("noise norm differs from the requested level");
  }
}

ProblemInstance make_heat_problem(Index n, double kappa, double noise_level, std::uint64_t seed) {
  ProblemInstance p;
  p.A = heat_1d(n, kappa);
  p.s_true = heat_true_solution(n);
  p.d_clean = p.A->apply(p.s_true);
  p.d = add_noise(p.d_clean, noise_level, derive_seed(seed, 0)).d;
  p.noise_level = noise_level;
  p.grid = GridSpec::line(n, 1.0 / static_cast<double>(n));
  p.seed = seed;
  p.check();
  return p;
}

ProblemInstance make_tomo_problem(const TomoSpec& spec, std::uint64_t seed) {
  ProblemInstance p;
  p.grid = GridSpec::square(spec.g, 1.0 / static_cast<double>(spec.g));
  const Index n = p.grid.size();
  auto full = ray_tomo_2d(spec.g, spec.n_rays, derive_seed(seed, 1));
  if (spec.disk_mask) {
    const Matrix pts = grid_points(p.grid);
    for (Index i = 0; i < n; ++i) {
      if (std::hypot(pts(i, 0) - 0.5, pts(i, 1) - 0.5) <= 0.5) p.mask.push_back(i);
    }
    // Inner operator acts on the retained cells only.
    const auto& M = full->matrix();
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<Index> pos(static_cast<std::size_t>(n), -1);
    for (std::size_t q = 0; q < p.mask.size(); ++q) pos[static_cast<std::size_t>(p.mask[q])] = static_cast<Index>(q);
    for (Index r = 0; r < M.outerSize(); ++r)
      for (SparseOperator::SparseMatrix::InnerIterator it(M, r); it; ++it)
        if (pos[static_cast<std::size_t>(it.col())] >= 0) trip.emplace_back(r, pos[static_cast<std::size_t>(it.col())], it.value());
    SparseOperator::SparseMatrix inner(M.rows(), static_cast<Index>(p.mask.size()));
    inner.setFromTriplets(trip.begin(), trip.end());
    p.A = std::make_shared<MaskedOperator>(std::make_shared<SparseOperator>(std::move(inner)), p.mask, n);
  } else {
    p.A = full;
  }
  p.s_true = smooth_phantom(p.grid, spec.phantom_kernel, spec.truncation, derive_seed(seed, 2),
                            spec.disk_mask ? &p.mask : nullptr);
  p.d_clean = p.A->apply(p.s_true);
  p.d = add_noise(p.d_clean, spec.noise_level, derive_seed(seed, 3)).d;
  p.noise_level = spec.noise_level;
  p.seed = seed;
  p.check();
  return p;
}

}  // namespace gkeb
