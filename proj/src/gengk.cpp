#include "gkeb/gengk.hpp"

#include "gkeb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gkeb {

namespace {

constexpr double kBreakdownTol = 1e-14;

void require_finite(const Vector& v, const char* what, Index iter) {
  if (!v.allFinite()) {
    throw NumericalError(std::string("genGK: non-finite ") + what + " at iteration " +
                         std::to_string(iter));
  }
}

double rel_residual(const Matrix& diff, double scale) {
  const double d = diff.norm();
  return scale > 0.0 ? d / scale : d;
}

}  // namespace

Matrix GenGKFactorization::B() const {
  Matrix Bk = Matrix::Zero(k + 1, k);
  for (Index j = 0; j < k; ++j) {
    Bk(j, j) = alphas[j];
    Bk(j + 1, j) = betas[j + 1];
  }
  return Bk;
}

GenGKFactorization gengk_bidiag(const LinearOperator& A, const NoiseCovariance& R,
                                const LinearOperator& Q, const Vector& mu, const Vector& d,
                                Index k, bool reorth) {
  const Index m = A.rows(), n = A.cols();
  if (R.size() != m || Q.rows() != n || Q.cols() != n || mu.size() != n || d.size() != m) {
    throw ValidationError("genGK: inconsistent operator and vector dimensions");
  }
  if (k < 0 || k > std::min(m, n)) {
    throw ValidationError("genGK: k must satisfy 0 <= k <= min(m, n)");
  }

  GenGKFactorization f;
  f.k_requested = k;
  f.reorth = reorth;
  f.U = Matrix::Zero(m, k + 1);
  f.V = Matrix::Zero(n, k + 1);
  f.QV = Matrix::Zero(n, k + 1);
  f.alphas = Vector::Zero(k + 1);
  f.betas = Vector::Zero(k + 1);

  auto finish = [&f](Index k_eff) {
    f.k = k_eff;
    f.U.conservativeResize(Eigen::NoChange, k_eff + 1);
    f.V.conservativeResize(Eigen::NoChange, k_eff + 1);
    f.QV.conservativeResize(Eigen::NoChange, k_eff + 1);
    f.alphas.conservativeResize(k_eff + 1);
    f.betas.conservativeResize(k_eff + 1);
    if (k_eff < f.k_requested) f.breakdown_at = k_eff;
    return std::move(f);
  };

  // beta_1 u_1 = d - A mu in the R^{-1} norm.
  Vector p = d - A.apply(mu);
  require_finite(p, "initial residual", 0);
  const double beta1 = std::sqrt(std::max(0.0, p.dot(R.apply_inv(p))));
  f.betas[0] = beta1;
  if (!(beta1 > 0.0)) return finish(0);
  f.U.col(0) = p / beta1;

  // Returns alpha and fills v, Qv for column j from the raw vector w.
  auto normalize_v = [&](Vector w, Index j) -> bool {
    Vector qw = Q.apply(w);
    require_finite(qw, "Q application", j);
    const double raw = std::sqrt(std::max(0.0, w.dot(qw)));
    if (reorth && j > 0) {
      for (int pass = 0; pass < 2; ++pass) {
        const Vector c = f.QV.leftCols(j).transpose() * w;
        w.noalias() -= f.V.leftCols(j) * c;
        qw.noalias() -= f.QV.leftCols(j) * c;
      }
    }
    const double alpha = std::sqrt(std::max(0.0, w.dot(qw)));
    if (!(alpha > kBreakdownTol * raw) || alpha == 0.0) {
      f.alphas[j] = 0.0;
      return false;
    }
    f.alphas[j] = alpha;
    f.V.col(j) = w / alpha;
    f.QV.col(j) = qw / alpha;
    return true;
  };

  {
    Vector w = A.apply_adjoint(R.apply_inv(f.U.col(0)));
    require_finite(w, "adjoint application", 0);
    if (!normalize_v(std::move(w), 0)) return finish(0);
  }

  for (Index j = 0; j < k; ++j) {
    // beta_{j+2} u_{j+2} = A Q v_{j+1} - alpha_{j+1} u_{j+1}
    p = A.apply(f.QV.col(j)) - f.alphas[j] * f.U.col(j);
    require_finite(p, "forward application", j + 1);
    Vector rp = R.apply_inv(p);
    const double raw = std::sqrt(std::max(0.0, p.dot(rp)));
    if (reorth) {
      for (int pass = 0; pass < 2; ++pass) {
        const Vector c = f.U.leftCols(j + 1).transpose() * rp;
        p.noalias() -= f.U.leftCols(j + 1) * c;
        rp = R.apply_inv(p);
      }
    }
    const double beta = std::sqrt(std::max(0.0, p.dot(rp)));
    if (!(beta > kBreakdownTol * std::max(beta1, raw))) return finish(j + 1);
    f.betas[j + 1] = beta;
    f.U.col(j + 1) = p / beta;

    // alpha_{j+2} v_{j+2} = A^T R^{-1} u_{j+2} - beta_{j+2} v_{j+1}
    Vector w = A.apply_adjoint(R.apply_inv(f.U.col(j + 1))) - beta * f.V.col(j);
    require_finite(w, "adjoint application", j + 1);
    if (!normalize_v(std::move(w), j + 1)) return finish(j + 1);
  }
  return finish(k);
}

GenGKFactorization truncate_factorization(const GenGKFactorization& f, Index k) {
  if (k < 0 || k > f.k) throw ValidationError("truncate_factorization: k out of range");
  GenGKFactorization out;
  out.U = f.U.leftCols(k + 1);
  out.V = f.V.leftCols(k + 1);
  out.QV = f.QV.leftCols(k + 1);
  out.alphas = f.alphas.head(k + 1);
  out.betas = f.betas.head(k + 1);
  out.k = k;
  out.k_requested = k;
  out.reorth = f.reorth;
  if (f.breakdown_at && *f.breakdown_at == k && f.k_requested > k) out.breakdown_at = k;
  return out;
}

double RelationResiduals::max() const { return std::max({init, forward, adjoint}); }

RelationResiduals verify_relations(const GenGKFactorization& f, const LinearOperator& A,
                                   const NoiseCovariance& R, const LinearOperator& Q,
                                   const Vector& mu, const Vector& d) {
  const Index m = A.rows(), n = A.cols(), k = f.k;
  if (f.U.rows() != m || f.V.rows() != n || f.U.cols() != k + 1 || f.V.cols() != k + 1 ||
      f.alphas.size() != k + 1 || f.betas.size() != k + 1 || R.size() != m || Q.rows() != n ||
      mu.size() != n || d.size() != m) {
    throw ValidationError("verify_relations: shape mismatch");
  }
  RelationResiduals res;
  const Vector r0 = d - A.apply(mu);
  const Vector lhs0 = f.U.col(0) * f.beta1();
  res.init = rel_residual(lhs0 - r0, std::max(lhs0.norm(), r0.norm()));

  const Matrix B = f.B();
  if (k > 0) {
    const Matrix AQV = A.apply_block(Q.apply_block(f.V.leftCols(k)));
    const Matrix UB = f.U * B;
    res.forward = rel_residual(AQV - UB, std::max(AQV.norm(), UB.norm()));
  }
  Matrix RinvU(m, k + 1);
  for (Index j = 0; j <= k; ++j) RinvU.col(j) = R.apply_inv(f.U.col(j));
  const Matrix AtU = A.apply_adjoint_block(RinvU);
  Matrix rhs = f.V.leftCols(k) * B.transpose();
  rhs.col(k) += f.alphas[k] * f.V.col(k);
  res.adjoint = rel_residual(AtU - rhs, std::max(AtU.norm(), rhs.norm()));
  return res;
}

OrthogonalityDefect orthogonality_defect(const GenGKFactorization& f, const NoiseCovariance& R,
                                         const LinearOperator& Q) {
  OrthogonalityDefect out;
  Index ku = f.k + 1;
  if (f.U.col(f.k).squaredNorm() == 0.0) --ku;
  if (ku > 0) {
    const Matrix Uk = f.U.leftCols(ku);
    const Matrix G = Uk.transpose() * Uk / R.theta1();
    out.u = (G - Matrix::Identity(ku, ku)).cwiseAbs().maxCoeff();
  }
  if (f.k > 0) {
    const Matrix QVk = Q.apply_block(f.V.leftCols(f.k));
    const Matrix G = f.V.leftCols(f.k).transpose() * QVk;
    out.v = (G - Matrix::Identity(f.k, f.k)).cwiseAbs().maxCoeff();
  }
  return out;
}

}  // namespace gkeb
