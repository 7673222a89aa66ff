#pragma once

#include "gkeb/operators.hpp"

#include <optional>

namespace gkeb {

/// Output of the generalized Golub-Kahan process after k_eff steps.
///
/// U is m x (k+1) and orthonormal in the R^{-1} inner product, V is
/// n x (k+1) and orthonormal in the Q inner product. QV = Q * V is kept so
/// downstream consumers never apply Q to the basis again. alphas[j] and
/// betas[j] hold alpha_{j+1} and beta_{j+1}; betas[0] is the norm of the
/// initial residual. A breakdown leaves the trailing u or v column zero.
struct GenGKFactorization {
  Matrix U;
  Matrix V;
  Matrix QV;
  Vector alphas;
  Vector betas;
  Index k = 0;
  Index k_requested = 0;
  std::optional<Index> breakdown_at;
  bool reorth = true;

  double beta1() const { return betas[0]; }
  /// Lower bidiagonal (k+1) x k matrix.
  Matrix B() const;
  auto Vk() const { return V.leftCols(k); }
  auto QVk() const { return QV.leftCols(k); }
};

/// Run k steps of the genGK bidiagonalization at a fixed theta. Requires
/// 0 <= k <= min(m, n). Stops early when a normalization coefficient falls
/// below 1e-14 times the scale of the vector it normalizes.
GenGKFactorization gengk_bidiag(const LinearOperator& A, const NoiseCovariance& R,
                                const LinearOperator& Q, const Vector& mu, const Vector& d,
                                Index k, bool reorth = true);

/// The first k steps of an existing factorization; identical to a fresh run
/// with k steps. Requires k <= fact.k.
GenGKFactorization truncate_factorization(const GenGKFactorization& fact, Index k);

/// Relative residuals of the three genGK relations.
struct RelationResiduals {
  double init = 0.0;     // U beta1 e1 = d - A mu
  double forward = 0.0;  // A Q V_k = U_{k+1} B_k
  double adjoint = 0.0;  // A^T R^{-1} U_{k+1} = V_k B_k^T + alpha_{k+1} v_{k+1} e_{k+1}^T
  double max() const;
};

RelationResiduals verify_relations(const GenGKFactorization& fact, const LinearOperator& A,
                                   const NoiseCovariance& R, const LinearOperator& Q,
                                   const Vector& mu, const Vector& d);

/// Largest entrywise deviation of U^T R^{-1} U and V_k^T Q V_k from the
/// identity. Columns zeroed by a breakdown are left out.
struct OrthogonalityDefect {
  double u = 0.0;
  double v = 0.0;
  double max() const { return u > v ? u : v; }
};

OrthogonalityDefect orthogonality_defect(const GenGKFactorization& fact,
                                         const NoiseCovariance& R, const LinearOperator& Q);

}  // namespace gkeb
