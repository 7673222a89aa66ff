#include "gkeb/monitor.hpp"

#include "gkeb/errors.hpp"
#include "gkeb/log.hpp"
#include "gkeb/random.hpp"

#include <cmath>
#include <string>

namespace gkeb {

Vector xi_recurrence(const Vector& alphas, const Vector& betas, double xi0, Index k_max) {
  if (k_max < 0) throw ValidationError("xi_recurrence: k_max must be nonnegative");
  if (alphas.size() < k_max || betas.size() < k_max + 1) {
    throw ValidationError("xi_recurrence: coefficient sequence too short");
  }
  Vector xi(k_max);
  double cur = xi0;
  for (Index k = 0; k < k_max; ++k) {
    cur -= alphas[k] * alphas[k] + betas[k + 1] * betas[k + 1];
    xi[k] = cur;
  }
  return xi;
}

Vector xi_estimate_with_probes(const LinearOperator& A, const NoiseCovariance& R,
                               const LinearOperator& Q, const GenGKFactorization& fact,
                               const Matrix& Omega) {
  const Index n = A.cols(), nmc = Omega.cols();
  if (Omega.rows() != n || nmc < 1) throw ValidationError("monitor: probe block has wrong shape");
  if (fact.V.rows() != n) throw ValidationError("monitor: factorization does not match A");

  const Matrix QO = Q.apply_block(Omega);
  Matrix AQO = A.apply_block(QO);
  AQO /= R.theta1();
  const Matrix Y = A.apply_adjoint_block(AQO);

  const Index k = fact.k;
  const Matrix P = fact.Vk().transpose() * Omega;  // k x nmc
  const Matrix S = fact.Vk().transpose() * QO;     // k x nmc
  const Matrix T = [&] {
    const Matrix B = fact.B();
    return Matrix(B.transpose() * B);
  }();

  Vector out(k + 1);
  const double base = Omega.cwiseProduct(Y).sum();
  out[0] = base / static_cast<double>(nmc);
  for (Index j = 1; j <= k; ++j) {
    const Matrix TS = T.topLeftCorner(j, j) * S.topRows(j);
    out[j] = (base - P.topRows(j).cwiseProduct(TS).sum()) / static_cast<double>(nmc);
  }
  return out;
}

Vector mc_xi_estimate(const LinearOperator& A, const NoiseCovariance& R, const LinearOperator& Q,
                      const GenGKFactorization& fact, Index n_mc, std::uint64_t seed,
                      ProbeKind kind) {
  if (n_mc < 1) throw ValidationError("monitor: n_mc must be at least 1");
  Rng rng(seed);
  const Matrix Omega = kind == ProbeKind::Gaussian ? standard_normal(A.cols(), n_mc, rng)
                                                   : rademacher(A.cols(), n_mc, rng);
  return xi_estimate_with_probes(A, R, Q, fact, Omega);
}

double err_indicator(double xi_hat, double beta1) {
  if (xi_hat < 0.0) {
    if (xi_hat < -1e-8 * beta1 * beta1) {
      log_warning("negative trace-gap estimate " + std::to_string(xi_hat) + " clamped to zero");
    }
    xi_hat = 0.0;
  }
  return 0.5 * (xi_hat + beta1 * beta1 * xi_hat / (1.0 + xi_hat));
}

double trace_gap_bound(double xi, double beta1) {
  if (!(xi >= 0.0)) throw DomainError("trace_gap_bound: trace gap must be nonnegative");
  return 0.5 * (xi + beta1 * beta1 * xi / (1.0 + xi));
}

Index sample_size_bound(double epsilon, double delta, double K_psi, double fro_norm,
                        double spec_norm, double trace_val, double C_hw) {
  if (!(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || !(K_psi > 0.0) || !(fro_norm > 0.0) ||
      !(spec_norm > 0.0) || !(trace_val > 0.0) || !(C_hw > 0.0)) {
    throw DomainError("sample_size_bound: inputs out of domain");
  }
  if (std::isinf(epsilon)) return 1;
  const double K2 = K_psi * K_psi;
  const double lead = K2 * std::log(2.0 / delta) / (C_hw * epsilon * epsilon);
  const double body = K2 * fro_norm * fro_norm / (trace_val * trace_val) +
                      epsilon * spec_norm / trace_val;
  const double N = std::ceil(lead * body);
  if (!std::isfinite(N) || N > 9.0e18) throw DomainError("sample_size_bound: bound overflows");
  return std::max<Index>(1, static_cast<Index>(N));
}

MonitorReport run_monitor(const LinearOperator& A, const NoiseCovariance& R,
                          const LinearOperator& Q, const GenGKFactorization& fact, Index n_mc,
                          std::uint64_t seed, ProbeKind kind) {
  const Vector est = mc_xi_estimate(A, R, Q, fact, n_mc, seed, kind);
  MonitorReport rep;
  rep.xi0_hat = est[0];
  rep.xi_hat = est.tail(fact.k);
  rep.beta1 = fact.beta1();
  rep.n_mc = n_mc;
  rep.probe_kind = kind;
  rep.err_mc.resize(fact.k);
  for (Index j = 0; j < fact.k; ++j) rep.err_mc[j] = err_indicator(rep.xi_hat[j], rep.beta1);
  return rep;
}

double dense_trace_HQ(const LinearOperator& A, const NoiseCovariance& R, const LinearOperator& Q) {
  const Index n = A.cols();
  const Matrix Ad = A.apply_block(Matrix::Identity(n, n));
  const Matrix Qd = Q.apply_block(Matrix::Identity(n, n));
  return (Ad.transpose() * Ad * Qd).trace() / R.theta1();
}

}  // namespace gkeb
