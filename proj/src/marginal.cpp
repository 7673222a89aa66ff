#include "gkeb/marginal.hpp"

#include "gkeb/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace gkeb {

namespace {

constexpr int kNumHyper = 3;

void require_finite(double v, const char* term, int i) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("non-finite ") + term + " in gradient component " +
                         std::to_string(i + 1));
  }
}

void check_dense_cap(const MarginalModel& model, const char* who) {
  if (model.m() > model.dense_cap || model.n() > model.dense_cap) {
    throw ValidationError(std::string(who) + ": problem exceeds the dense cap of " +
                          std::to_string(model.dense_cap) + "; use the genGK path");
  }
}

}  // namespace

std::pair<double, Vector> hyperprior_neglog(const Hyperprior& prior, const Vector& theta) {
  if (!(theta.array() > 0.0).all()) throw DomainError("hyperparameters must be positive");
  if (prior.kind == HyperpriorKind::Flat) return {0.0, Vector::Zero(theta.size())};
  if (!(prior.gamma > 0.0)) throw DomainError("Gamma hyperprior rate must be positive");
  return {prior.gamma * theta.sum(), Vector::Constant(theta.size(), prior.gamma)};
}

MarginalModel::MarginalModel(OperatorHandle A_, PriorFamily prior_, Vector mu_, Vector d_,
                             Hyperprior hp)
    : A(std::move(A_)), prior(std::move(prior_)), mu(std::move(mu_)), d(std::move(d_)),
      hyperprior(hp) {
  if (!A) throw ValidationError("model: forward operator is null");
  if (prior.size() != A->cols()) throw ValidationError("model: prior size differs from n");
  if (mu.size() != A->cols()) throw ValidationError("model: prior mean size differs from n");
  if (d.size() != A->rows()) throw ValidationError("model: data size differs from m");
  if (!mu.allFinite() || !d.allFinite()) throw ValidationError("model: non-finite mean or data");
}

void check_theta(const Vector& theta) {
  if (theta.size() != kNumHyper) throw ValidationError("theta must have 3 components");
  if (!theta.allFinite() || !(theta.array() > 0.0).all()) {
    throw DomainError("theta entries must be positive and finite");
  }
}

// --- dense oracle ------------------------------------------------------------

namespace {

struct DenseParts {
  Matrix At;  // n x m
  Matrix Z;
};

DenseParts dense_parts(const MarginalModel& model, const Vector& theta) {
  check_dense_cap(model, "objective_exact");
  const Index m = model.m();
  DenseParts p;
  p.At = model.A->apply_adjoint_block(Matrix::Identity(m, m));
  const auto Q = model.prior.build(theta, 0);
  p.Z = model.A->apply_block(Q->apply_block(p.At));
  p.Z = 0.5 * (p.Z + p.Z.transpose()).eval();
  p.Z.diagonal().array() += theta[0];
  return p;
}

}  // namespace

Matrix assemble_Z(const MarginalModel& model, const Vector& theta) {
  check_theta(theta);
  return dense_parts(model, theta).Z;
}

ObjectiveEvaluation objective_exact(const MarginalModel& model, const Vector& theta) {
  check_theta(theta);
  const MatvecCount c0 = model.A->counts();
  const DenseParts parts = dense_parts(model, theta);
  const Index m = model.m();

  Eigen::LLT<Matrix> llt(parts.Z);
  if (llt.info() != Eigen::Success) throw NumericalError("objective_exact: Z is not SPD");
  const Matrix& L = llt.matrixL();
  double logdet = 0.0;
  for (Index i = 0; i < m; ++i) logdet += std::log(L(i, i));
  logdet *= 2.0;

  const Vector res = model.A->apply(model.mu) - model.d;
  const Vector r = llt.solve(res);

  ObjectiveEvaluation ev;
  const auto [pv, pg] = hyperprior_neglog(model.hyperprior, theta);
  ev.neglogprior_term = pv;
  ev.logdet_term = 0.5 * logdet;
  ev.quad_term = 0.5 * res.dot(r);
  ev.value = ev.neglogprior_term + ev.logdet_term + ev.quad_term;

  const Matrix Zinv = llt.solve(Matrix::Identity(m, m));
  const NoiseCovariance R(theta[0], m);
  ev.gradient = pg;
  for (int i = 0; i < kNumHyper; ++i) {
    const double c = R.deriv_scale(i + 1);
    double trace = c * Zinv.trace();
    double quad = c * r.squaredNorm();
    if (PriorFamily::depends_on(i + 1)) {
      const auto dQ = model.prior.build(theta, i + 1);
      Matrix dZ = model.A->apply_block(dQ->apply_block(parts.At));
      trace += Zinv.cwiseProduct(dZ).sum();
      quad += r.dot(dZ * r);
    }
    require_finite(trace, "trace term", i);
    require_finite(quad, "quadratic term", i);
    ev.gradient[i] += 0.5 * trace - 0.5 * quad;
  }
  ev.a_counts = model.A->counts() - c0;
  return ev;
}

// --- projected evaluation ----------------------------------------------------

ObjectiveEvaluation evaluate_projected(const ProjectedSystem& sys, double prior_value,
                                       const Vector& prior_grad) {
  const Index k = sys.B.cols();
  const Index K = static_cast<Index>(sys.psi_q.size());
  if (sys.B.rows() != k + 1 || sys.u_gram.rows() != k + 1 || sys.u_gram.cols() != k + 1 ||
      sys.dnoise.size() != K || prior_grad.size() != K) {
    throw ValidationError("evaluate_projected: inconsistent shapes");
  }
  if (!(sys.theta1 > 0.0)) throw DomainError("theta1 must be positive");

  Vector sigma = Vector::Zero(k);
  Matrix P = Matrix::Identity(k + 1, k + 1);
  Matrix W = Matrix::Identity(k, k);
  if (k > 0) {
    Eigen::JacobiSVD<Matrix> svd(sys.B, Eigen::ComputeFullU | Eigen::ComputeFullV);
    sigma = svd.singularValues();
    P = svd.matrixU();
    W = svd.matrixV();
  }
  const Vector s2 = sigma.array().square();
  const Vector inv1p = (1.0 + s2.array()).inverse();

  double logdet_theta = 0.0;
  for (Index j = 0; j < k; ++j) logdet_theta += std::log1p(s2[j]);
  double quad = P(0, k) * P(0, k);
  for (Index j = 0; j < k; ++j) quad += P(0, j) * P(0, j) * inv1p[j];
  quad *= sys.beta1 * sys.beta1;

  ObjectiveEvaluation ev;
  ev.k_used = k;
  ev.neglogprior_term = prior_value;
  ev.logdet_term =
      0.5 * (static_cast<double>(sys.m) * std::log(sys.theta1) + logdet_theta);
  ev.quad_term = 0.5 * quad;
  ev.value = ev.neglogprior_term + ev.logdet_term + ev.quad_term;

  const Matrix IpTinv = W * inv1p.asDiagonal() * W.transpose();
  const Matrix TIpTinv = W * (s2.array() * inv1p.array()).matrix().asDiagonal() * W.transpose();

  // r = Z~^{-1}(A mu - d) = U c, so B^T U^T r = theta1 B^T G c and |r|^2 = theta1 c^T G c.
  const Matrix& G = sys.u_gram;
  Vector c = Vector::Zero(k + 1);
  c[0] = 1.0;
  if (k > 0) c -= sys.B * (IpTinv * (sys.B.transpose() * G.col(0)));
  c *= -sys.beta1 / sys.theta1;
  const Vector Gc = G * c;
  const Vector y = sys.theta1 * (sys.B.transpose() * Gc);
  const double rnorm2 = sys.theta1 * c.dot(Gc);
  const double btgb = k > 0 ? (sys.B.transpose() * G * sys.B).cwiseProduct(IpTinv).sum() : 0.0;

  ev.gradient = prior_grad;
  for (Index i = 0; i < K; ++i) {
    const double ci = sys.dnoise[i];
    double trace = ci * static_cast<double>(sys.m) / sys.theta1 - ci / sys.theta1 * btgb;
    double qterm = ci * rnorm2;
    const Matrix& psi = sys.psi_q[static_cast<std::size_t>(i)];
    if (psi.size() > 0) {
      trace += psi.cwiseProduct(TIpTinv).sum();
      qterm += y.dot(psi * y);
    }
    require_finite(trace, "trace term", static_cast<int>(i));
    require_finite(qterm, "quadratic term", static_cast<int>(i));
    ev.gradient[i] += 0.5 * trace - 0.5 * qterm;
  }
  if (!std::isfinite(ev.value)) throw NumericalError("approximate objective is not finite");
  return ev;
}

namespace {

ProjectedSystem project(const MarginalModel& model, const Vector& theta,
                        const GenGKFactorization& f) {
  const Index m = model.m();
  if (f.U.rows() != m || f.V.rows() != model.n()) {
    throw ValidationError("factorization does not match the model dimensions");
  }
  const NoiseCovariance R(theta[0], m);
  ProjectedSystem sys;
  sys.B = f.B();
  sys.beta1 = f.beta1();
  sys.theta1 = theta[0];
  sys.m = m;
  sys.u_gram = f.U.transpose() * f.U / theta[0];
  sys.dnoise.resize(kNumHyper);
  sys.psi_q.resize(kNumHyper);
  const Matrix Vk = f.Vk();
  for (int i = 0; i < kNumHyper; ++i) {
    sys.dnoise[i] = R.deriv_scale(i + 1);
    if (PriorFamily::depends_on(i + 1) && f.k > 0) {
      const auto dQ = model.prior.build(theta, i + 1);
      Matrix psi = Vk.transpose() * dQ->apply_block(Vk);
      sys.psi_q[static_cast<std::size_t>(i)] = 0.5 * (psi + psi.transpose());
    }
  }
  return sys;
}

}  // namespace

ObjectiveEvaluation objective_gengk(const MarginalModel& model, const Vector& theta, Index k,
                                    const GenGKFactorization* fact) {
  check_theta(theta);
  const MatvecCount c0 = model.A->counts();
  GenGKFactorization local;
  if (fact == nullptr) {
    const NoiseCovariance R(theta[0], model.m());
    const auto Q = model.prior.build(theta, 0);
    local = gengk_bidiag(*model.A, R, *Q, model.mu, model.d, k, true);
    fact = &local;
  }
  const auto [pv, pg] = hyperprior_neglog(model.hyperprior, theta);
  ObjectiveEvaluation ev = evaluate_projected(project(model, theta, *fact), pv, pg);
  ev.breakdown_at = fact->breakdown_at;
  ev.a_counts = model.A->counts() - c0;
  return ev;
}

Vector gradient_gengk(const MarginalModel& model, const Vector& theta,
                      const GenGKFactorization& fact) {
  return objective_gengk(model, theta, fact.k, &fact).gradient;
}

// --- truncated SVD variant ---------------------------------------------------

namespace {

struct SvdParts {
  Matrix Ahat;
  Vector res_hat;  // R^{-1/2}(d - A mu)
};

SvdParts svd_parts(const MarginalModel& model, const Vector& theta) {
  check_theta(theta);
  check_dense_cap(model, "objective_svd");
  const Index n = model.n();
  const Matrix Qd = assemble_dense(*model.prior.build(theta, 0));
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Qd + Qd.transpose()));
  const Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix Qhalf = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  const Matrix Ad = model.A->apply_block(Matrix::Identity(n, n));
  const double s = 1.0 / std::sqrt(theta[0]);
  return {s * Ad * Qhalf, s * (model.d - model.A->apply(model.mu))};
}

}  // namespace

SvdSpectrum svd_spectrum(const MarginalModel& model, const Vector& theta) {
  const SvdParts p = svd_parts(model, theta);
  Eigen::BDCSVD<Matrix> svd(p.Ahat);
  return {svd.singularValues(), p.res_hat.norm()};
}

ObjectiveEvaluation objective_svd(const MarginalModel& model, const Vector& theta, Index k) {
  const SvdParts p = svd_parts(model, theta);
  Eigen::BDCSVD<Matrix> svd(p.Ahat, Eigen::ComputeThinU);
  const Vector& sig = svd.singularValues();
  if (k < 0) throw ValidationError("objective_svd: k must be nonnegative");
  const Index kk = std::min<Index>(k, sig.size());
  double logdet = static_cast<double>(model.m()) * std::log(theta[0]);
  double quad = p.res_hat.squaredNorm();
  for (Index i = 0; i < kk; ++i) {
    const double s2 = sig[i] * sig[i];
    logdet += std::log1p(s2);
    const double proj = svd.matrixU().col(i).dot(p.res_hat);
    quad -= s2 / (1.0 + s2) * proj * proj;
  }
  ObjectiveEvaluation ev;
  ev.k_used = kk;
  ev.neglogprior_term = hyperprior_neglog(model.hyperprior, theta).first;
  ev.logdet_term = 0.5 * logdet;
  ev.quad_term = 0.5 * quad;
  ev.value = ev.neglogprior_term + ev.logdet_term + ev.quad_term;
  return ev;
}

double svd_truncation_bound(const SvdSpectrum& spec, Index k) {
  const Index r = spec.sigma.size();
  if (k < 0) throw ValidationError("svd_truncation_bound: k must be nonnegative");
  double tail = 0.0;
  for (Index i = k; i < r; ++i) tail += std::log1p(spec.sigma[i] * spec.sigma[i]);
  double quad = 0.0;
  if (k < r) {
    const double s2 = spec.sigma[k] * spec.sigma[k];
    quad = spec.beta1 * spec.beta1 * s2 / (1.0 + s2);
  }
  return 0.5 * tail + 0.5 * quad;
}

}  // namespace gkeb
