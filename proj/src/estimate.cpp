#include "gkeb/estimate.hpp"

#include "gkeb/errors.hpp"
#include "gkeb/problems.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace gkeb {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 40;

struct Pair {
  Vector s, y;
  double rho;
};

Vector two_loop(const std::deque<Pair>& mem, const Vector& g) {
  Vector q = g;
  std::vector<double> a(mem.size());
  for (std::size_t i = mem.size(); i-- > 0;) {
    a[i] = mem[i].rho * mem[i].s.dot(q);
    q -= a[i] * mem[i].y;
  }
  if (!mem.empty()) {
    const Pair& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < mem.size(); ++i) {
    const double b = mem[i].rho * mem[i].y.dot(q);
    q += (a[i] - b) * mem[i].s;
  }
  return -q;
}

}  // namespace

std::pair<Vector, OptimizeTrace> minimize_bounded(const ThetaObjective& fun, const Vector& theta0,
                                                  const OptimizeOptions& opts) {
  const Index K = theta0.size();
  if (K < 1) throw ValidationError("optimizer: empty starting point");
  if (opts.max_iters < 0 || !(opts.grad_tol >= 0.0) || !(opts.ftol >= 0.0) || opts.memory < 1) {
    throw ValidationError("optimizer: invalid options");
  }
  Vector lo = opts.lower.size() ? opts.lower : Vector::Constant(K, 1e-12);
  Vector hi = opts.upper.size() ? opts.upper : Vector::Constant(K, 1e12);
  if (lo.size() != K || hi.size() != K || !(lo.array() > 0.0).all() || !(hi.array() > lo.array()).all()) {
    throw ValidationError("optimizer: bounds must be positive with lower < upper");
  }
  if (!(theta0.array() >= lo.array()).all() || !(theta0.array() <= hi.array()).all()) {
    throw ValidationError("optimizer: starting point outside the bounds");
  }
  const bool logp = opts.parameterization == Parameterization::Log;
  auto to_x = [&](const Vector& t) -> Vector { return logp ? Vector(t.array().log()) : t; };
  auto to_theta = [&](const Vector& x) -> Vector { return logp ? Vector(x.array().exp()) : x; };
  const Vector xlo = to_x(lo), xhi = to_x(hi);
  auto project = [&](const Vector& x) -> Vector { return x.cwiseMax(xlo).cwiseMin(xhi); };

  OptimizeTrace trace;
  auto eval = [&](const Vector& x, Vector& g) -> double {
    Vector theta = to_theta(x).cwiseMax(lo).cwiseMin(hi);
    ++trace.func_count;
    auto [f, gt] = fun(theta);
    if (!std::isfinite(f) || !gt.allFinite()) {
      g = Vector::Zero(K);
      return std::numeric_limits<double>::infinity();
    }
    g = logp ? Vector(gt.cwiseProduct(theta)) : gt;
    return f;
  };
  auto pgrad_norm = [&](const Vector& x, const Vector& g) {
    return (project(x - g) - x).cwiseAbs().maxCoeff();
  };
  auto record = [&](const Vector& x, double f, const Vector& g) {
    trace.iterates.push_back({to_theta(x).cwiseMax(lo).cwiseMin(hi), f, pgrad_norm(x, g), trace.func_count});
  };

  Vector x = project(to_x(theta0)), g;
  double f = eval(x, g);
  if (!std::isfinite(f)) throw NumericalError("objective is not finite at the starting point");
  record(x, f, g);

  std::deque<Pair> mem;
  bool retried = false;
  trace.reason = "maximum iterations reached";
  while (trace.iterations < opts.max_iters) {
    if (pgrad_norm(x, g) <= opts.grad_tol) {
      trace.converged = true;
      trace.reason = "projected gradient below tolerance";
      break;
    }
    // Variables pinned at a bound with the gradient pushing outwards stay fixed.
    Eigen::Array<bool, Eigen::Dynamic, 1> fixed(K);
    for (Index i = 0; i < K; ++i) {
      fixed[i] = (x[i] <= xlo[i] && g[i] > 0.0) || (x[i] >= xhi[i] && g[i] < 0.0);
    }
    Vector gf = g;
    for (Index i = 0; i < K; ++i)
      if (fixed[i]) gf[i] = 0.0;
    Vector dir = two_loop(mem, gf);
    for (Index i = 0; i < K; ++i)
      if (fixed[i]) dir[i] = 0.0;
    if (!(gf.dot(dir) < 0.0)) {
      mem.clear();
      dir = -gf;
    }
    double t = mem.empty() ? std::min(1.0, 1.0 / std::max(dir.cwiseAbs().maxCoeff(), 1e-300)) : 1.0;

    bool accepted = false;
    Vector xn, gn;
    double fn = f;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= 0.5) {
      xn = project(x + t * dir);
      if ((xn - x).cwiseAbs().maxCoeff() == 0.0) break;
      fn = eval(xn, gn);
      if (fn <= f + kArmijo * g.dot(xn - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!mem.empty() && !retried) {
        mem.clear();
        retried = true;
        continue;
      }
      trace.line_search_failed = true;
      trace.reason = "line search failed; returning best iterate";
      break;
    }
    retried = false;
    ++trace.iterations;

    const Vector s = xn - x, y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      mem.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(mem.size()) > opts.memory) mem.pop_front();
    }
    const double rel = (f - fn) / std::max({std::abs(f), std::abs(fn), 1.0});
    x = xn;
    f = fn;
    g = gn;
    record(x, f, g);
    if (rel <= opts.ftol) {
      trace.converged = true;
      trace.reason = "relative decrease below ftol";
      break;
    }
  }
  return {trace.iterates.back().theta, trace};
}

std::pair<Vector, OptimizeTrace> optimize_hyperparams(const MarginalModel& model,
                                                      const Vector& theta0,
                                                      const OptimizeOptions& opts) {
  check_theta(theta0);
  if (opts.objective == ObjectiveKind::GenGK && opts.k < 1) {
    throw ValidationError("optimizer: k must be at least 1");
  }
  ThetaObjective fun = [&](const Vector& theta) -> std::pair<double, Vector> {
    const ObjectiveEvaluation ev = opts.objective == ObjectiveKind::GenGK
                                       ? objective_gengk(model, theta, opts.k)
                                       : objective_exact(model, theta);
    return {ev.value, ev.gradient};
  };
  return minimize_bounded(fun, theta0, opts);
}

// --- two-parameter fast path -------------------------------------------------

GenGKFactorization two_param_rescale(const GenGKFactorization& f, double theta1, double theta2) {
  if (!(theta1 > 0.0) || !(theta2 > 0.0) || !std::isfinite(theta1) || !std::isfinite(theta2)) {
    throw DomainError("two_param_rescale: theta must be positive");
  }
  const double st1 = std::sqrt(theta1);
  GenGKFactorization out = f;
  out.U = st1 * f.U;
  out.V = f.V / theta2;
  out.QV = theta2 * f.QV;
  const double scale = theta2 / st1;
  out.alphas = scale * f.alphas;
  out.betas = scale * f.betas;
  out.betas[0] = f.betas[0] / st1;
  return out;
}

TwoParamObjective::TwoParamObjective(const MarginalModel& model, double theta3, Index k)
    : model_(&model), theta3_(theta3) {
  if (!(theta3 > 0.0)) throw DomainError("two-parameter path: theta3 must be positive");
  if (k < 1) throw ValidationError("two-parameter path: k must be at least 1");
  const NoiseCovariance I(1.0, model.m());
  const Vector unit = (Vector(3) << 1.0, 1.0, theta3).finished();
  const auto Q0 = model.prior.build(unit, 0);
  fact_hat_ = gengk_bidiag(*model.A, I, *Q0, model.mu, model.d, k, true);
  gram_u_ = fact_hat_.U.transpose() * fact_hat_.U;
  const Matrix G = fact_hat_.Vk().transpose() * fact_hat_.QVk();
  gram_v_ = 0.5 * (G + G.transpose());
}

ObjectiveEvaluation TwoParamObjective::evaluate(const Vector& theta12) const {
  if (theta12.size() != 2) throw ValidationError("two-parameter path expects (theta1, theta2)");
  if (!theta12.allFinite() || !(theta12.array() > 0.0).all()) {
    throw DomainError("theta entries must be positive and finite");
  }
  const double t1 = theta12[0], t2 = theta12[1];
  ProjectedSystem sys;
  sys.B = (t2 / std::sqrt(t1)) * fact_hat_.B();
  sys.beta1 = fact_hat_.beta1() / std::sqrt(t1);
  sys.theta1 = t1;
  sys.m = model_->m();
  sys.u_gram = gram_u_;
  sys.psi_q = {Matrix(), fact_hat_.k > 0 ? Matrix((2.0 / t2) * gram_v_) : Matrix()};
  sys.dnoise = (Vector(2) << 1.0, 0.0).finished();
  const auto [pv, pg] = hyperprior_neglog(model_->hyperprior, theta12);
  ObjectiveEvaluation ev = evaluate_projected(sys, pv, pg);
  ev.breakdown_at = fact_hat_.breakdown_at;
  return ev;
}

Vector TwoParamObjective::map(double theta1, double theta2) const {
  return map_from_factorization(two_param_rescale(fact_hat_, theta1, theta2), model_->mu);
}

std::pair<Vector, OptimizeTrace> optimize_two_param(const TwoParamObjective& objective,
                                                    const Vector& theta0,
                                                    const OptimizeOptions& opts) {
  if (theta0.size() != 2) throw ValidationError("two-parameter path expects (theta1, theta2)");
  ThetaObjective fun = [&](const Vector& theta) -> std::pair<double, Vector> {
    const ObjectiveEvaluation ev = objective.evaluate(theta);
    return {ev.value, ev.gradient};
  };
  return minimize_bounded(fun, theta0, opts);
}

// --- MAP ---------------------------------------------------------------------

Vector map_from_factorization(const GenGKFactorization& f, const Vector& mu) {
  if (mu.size() != f.V.rows()) throw ValidationError("map: prior mean size mismatch");
  if (f.k == 0) return mu;
  const Matrix B = f.B();
  Matrix M = B.transpose() * B;
  M.diagonal().array() += 1.0;
  const Vector rhs = f.beta1() * B.row(0).transpose();
  const Vector z = M.llt().solve(rhs);
  return mu + f.QVk() * z;
}

Vector map_reconstruct(const MarginalModel& model, const Vector& theta, Index k) {
  check_theta(theta);
  const NoiseCovariance R(theta[0], model.m());
  const auto Q = model.prior.build(theta, 0);
  const GenGKFactorization f = gengk_bidiag(*model.A, R, *Q, model.mu, model.d, k, true);
  return map_from_factorization(f, model.mu);
}

Vector map_exact(const MarginalModel& model, const Vector& theta) {
  const Matrix Z = assemble_Z(model, theta);
  Eigen::LLT<Matrix> llt(Z);
  if (llt.info() != Eigen::Success) throw NumericalError("map_exact: Z is not SPD");
  const Vector w = llt.solve(model.d - model.A->apply(model.mu));
  const auto Q = model.prior.build(theta, 0);
  return model.mu + Q->apply(model.A->apply_adjoint(w));
}

LambdaSweep optimal_lambda_sweep(const TwoParamObjective& objective, double theta1,
                                 const Vector& s_true, const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty()) throw ValidationError("optimal_lambda_sweep: empty grid");
  LambdaSweep out;
  out.best_re = std::numeric_limits<double>::infinity();
  for (double lam : lambda_grid) {
    if (!(lam > 0.0)) throw DomainError("optimal_lambda_sweep: lambda must be positive");
    const double re = relative_error(s_true, objective.map(theta1, 1.0 / lam));
    out.lambdas.push_back(lam);
    out.re.push_back(re);
    if (re < out.best_re) {
      out.best_re = re;
      out.best_lambda = lam;
    }
  }
  return out;
}

}  // namespace gkeb
