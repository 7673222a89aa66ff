#pragma once

#include "gkeb/covariance.hpp"
#include "gkeb/gengk.hpp"
#include "gkeb/operators.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace gkeb {

enum class HyperpriorKind { Flat, Gamma };

/// Flat: -log pi = 0. Gamma: -log pi = gamma * sum(theta), constants dropped.
struct Hyperprior {
  HyperpriorKind kind = HyperpriorKind::Flat;
  double gamma = 1e-4;
};

std::pair<double, Vector> hyperprior_neglog(const Hyperprior& prior, const Vector& theta);

/// d = A s + eta, s ~ N(mu, Q(theta)), eta ~ N(0, theta1 I).
struct MarginalModel {
  OperatorHandle A;
  PriorFamily prior;
  Vector mu;
  Vector d;
  Hyperprior hyperprior;
  Index dense_cap = 4096;

  MarginalModel(OperatorHandle A_, PriorFamily prior_, Vector mu_, Vector d_,
                Hyperprior hp = {});

  Index m() const { return A->rows(); }
  Index n() const { return A->cols(); }
};

/// Theta must have three strictly positive finite entries.
void check_theta(const Vector& theta);

struct ObjectiveEvaluation {
  double value = 0.0;
  double neglogprior_term = 0.0;
  double logdet_term = 0.0;
  double quad_term = 0.0;
  Vector gradient;
  Index k_used = 0;
  std::optional<Index> breakdown_at;
  MatvecCount a_counts;
};

/// Dense F and gradient with Z assembled explicitly. Refuses m > dense_cap.
ObjectiveEvaluation objective_exact(const MarginalModel& model, const Vector& theta);

/// Dense Z(theta) = A Q A^T + theta1 I (for oracles and tests).
Matrix assemble_Z(const MarginalModel& model, const Vector& theta);

/// Reduced quantities that fully determine the genGK approximation.
/// u_gram is U^T R^{-1} U; psi_q[i] is V_k^T dQ/dtheta_{i+1} V_k (empty when
/// Q does not depend on that component); dnoise[i] is the scalar c with
/// dR/dtheta_{i+1} = c I.
struct ProjectedSystem {
  Matrix B;
  double beta1 = 0.0;
  double theta1 = 1.0;
  Index m = 0;
  Matrix u_gram;
  std::vector<Matrix> psi_q;
  Vector dnoise;
};

/// Approximate objective and gradient from the projected system. The hyperprior
/// contribution is added from prior_value / prior_grad.
ObjectiveEvaluation evaluate_projected(const ProjectedSystem& sys, double prior_value,
                                       const Vector& prior_grad);

/// genGK approximation F~_k and its gradient. Runs a fresh factorization at
/// theta unless one is supplied.
ObjectiveEvaluation objective_gengk(const MarginalModel& model, const Vector& theta, Index k,
                                    const GenGKFactorization* fact = nullptr);

Vector gradient_gengk(const MarginalModel& model, const Vector& theta,
                      const GenGKFactorization& fact);

/// Singular values of R^{-1/2} A Q^{1/2} and the R^{-1}-norm of d - A mu.
struct SvdSpectrum {
  Vector sigma;  // descending
  double beta1 = 0.0;
};

SvdSpectrum svd_spectrum(const MarginalModel& model, const Vector& theta);

/// Objective from the rank-k truncated SVD of R^{-1/2} A Q^{1/2} (dense only).
/// The gradient field is left empty.
ObjectiveEvaluation objective_svd(const MarginalModel& model, const Vector& theta, Index k);

/// 1/2 sum_{i>k} log(1+sigma_i^2) + 1/2 beta1^2 sigma_{k+1}^2 / (1 + sigma_{k+1}^2).
double svd_truncation_bound(const SvdSpectrum& spec, Index k);

}  // namespace gkeb
