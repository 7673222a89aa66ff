#pragma once

#include "gkeb/gengk.hpp"
#include "gkeb/operators.hpp"

#include <cstdint>

namespace gkeb {

enum class ProbeKind { Gaussian, Rademacher };

/// xi_k = xi0 - sum_{j<=k} (alpha_j^2 + beta_{j+1}^2) for k = 1..k_max
/// (entry k-1 holds xi_k). Needs alphas and betas of length >= k_max + 1.
Vector xi_recurrence(const Vector& alphas, const Vector& betas, double xi0, Index k_max);

/// Trace-gap estimates from a fixed probe block Omega (n x n_mc). Entry 0 is
/// the estimate of tr(H Q); entry k is xi_hat_k for k = 1..fact.k. Applies A
/// and A^T once per probe column and Q once per probe column, nothing else.
Vector xi_estimate_with_probes(const LinearOperator& A, const NoiseCovariance& R,
                               const LinearOperator& Q, const GenGKFactorization& fact,
                               const Matrix& Omega);

/// Random-probe version of the above with n_mc columns drawn from seed.
Vector mc_xi_estimate(const LinearOperator& A, const NoiseCovariance& R, const LinearOperator& Q,
                      const GenGKFactorization& fact, Index n_mc, std::uint64_t seed,
                      ProbeKind kind = ProbeKind::Gaussian);

/// 1/2 [xi + beta1^2 xi / (1 + xi)] with negative xi clamped to zero.
double err_indicator(double xi_hat, double beta1);

/// 1/2 [xi + beta1^2 xi / (1 + xi)]; xi must be nonnegative.
double trace_gap_bound(double xi, double beta1);

/// Probe count from the sub-Gaussian trace-estimator tail bound, at least 1.
Index sample_size_bound(double epsilon, double delta, double K_psi, double fro_norm,
                        double spec_norm, double trace_val, double C_hw);

struct MonitorReport {
  Vector xi_hat;  // k = 1..k_max
  Vector err_mc;  // k = 1..k_max
  double xi0_hat = 0.0;
  double beta1 = 0.0;
  Index n_mc = 0;
  ProbeKind probe_kind = ProbeKind::Gaussian;
};

MonitorReport run_monitor(const LinearOperator& A, const NoiseCovariance& R,
                          const LinearOperator& Q, const GenGKFactorization& fact, Index n_mc,
                          std::uint64_t seed, ProbeKind kind = ProbeKind::Gaussian);

/// Dense tr(H Q) with H = A^T R^{-1} A (oracle; applies A to identity columns).
double dense_trace_HQ(const LinearOperator& A, const NoiseCovariance& R, const LinearOperator& Q);

}  // namespace gkeb
