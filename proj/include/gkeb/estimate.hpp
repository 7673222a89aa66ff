#pragma once

#include "gkeb/gengk.hpp"
#include "gkeb/marginal.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gkeb {

enum class Parameterization { Log, Linear };
enum class ObjectiveKind { GenGK, Exact };

struct OptimizeOptions {
  Index k = 22;
  int max_iters = 200;
  double grad_tol = 1e-6;   // inf-norm of the projected gradient, optimizer coordinates
  double ftol = 2.2e-9;     // relative decrease of F between accepted steps
  Vector lower;             // empty: 1e-12 per component
  Vector upper;             // empty: 1e12 per component
  Parameterization parameterization = Parameterization::Log;
  ObjectiveKind objective = ObjectiveKind::GenGK;
  int memory = 10;
  std::uint64_t seed = 0;
};

struct OptimizeIterate {
  Vector theta;
  double value = 0.0;
  double grad_norm = 0.0;  // inf-norm of the projected gradient
  int func_count = 0;      // objective evaluations so far
};

struct OptimizeTrace {
  std::vector<OptimizeIterate> iterates;
  int func_count = 0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::string reason;
};

/// Value and gradient in theta coordinates.
using ThetaObjective = std::function<std::pair<double, Vector>(const Vector& theta)>;

/// Bound-constrained limited-memory quasi-Newton minimization with projected
/// backtracking. Works in log(theta) or theta coordinates per opts.
std::pair<Vector, OptimizeTrace> minimize_bounded(const ThetaObjective& fun, const Vector& theta0,
                                                  const OptimizeOptions& opts);

/// Minimize F~_k (fresh genGK per evaluation) or the exact F over theta.
std::pair<Vector, OptimizeTrace> optimize_hyperparams(const MarginalModel& model,
                                                      const Vector& theta0,
                                                      const OptimizeOptions& opts);

/// U = sqrt(theta1) U^, V = V^/theta2, B = (theta2/sqrt(theta1)) B^.
GenGKFactorization two_param_rescale(const GenGKFactorization& fact_hat, double theta1,
                                     double theta2);

/// theta = (theta1, theta2) with theta3 frozen. The factorization at
/// theta1 = theta2 = 1 is computed once; every later evaluation works on the
/// rescaled projected system and never touches A or Q.
class TwoParamObjective {
 public:
  TwoParamObjective(const MarginalModel& model, double theta3, Index k);

  ObjectiveEvaluation evaluate(const Vector& theta12) const;
  /// Projected MAP estimate at (theta1, theta2).
  Vector map(double theta1, double theta2) const;

  const GenGKFactorization& base() const { return fact_hat_; }
  double theta3() const { return theta3_; }
  Index k() const { return fact_hat_.k; }

 private:
  const MarginalModel* model_;
  double theta3_;
  GenGKFactorization fact_hat_;
  Matrix gram_u_;  // U^T U
  Matrix gram_v_;  // V_k^T Q0 V_k
};

std::pair<Vector, OptimizeTrace> optimize_two_param(const TwoParamObjective& objective,
                                                    const Vector& theta0,
                                                    const OptimizeOptions& opts);

/// mu + Q V_k (I + T_k)^{-1} B_k^T beta1 e1 from a factorization at theta.
Vector map_from_factorization(const GenGKFactorization& fact, const Vector& mu);

/// Projected MAP estimate with a fresh genGK run at theta.
Vector map_reconstruct(const MarginalModel& model, const Vector& theta, Index k);

/// Closed-form mu + Q A^T Z^{-1} (d - A mu) with Z assembled densely.
Vector map_exact(const MarginalModel& model, const Vector& theta);

struct LambdaSweep {
  double best_lambda = 0.0;
  double best_re = 0.0;
  std::vector<double> lambdas;
  std::vector<double> re;
};

/// RE of the MAP estimate at theta2 = 1/lambda for every lambda in the grid.
LambdaSweep optimal_lambda_sweep(const TwoParamObjective& objective, double theta1,
                                 const Vector& s_true, const std::vector<double>& lambda_grid);

}  // namespace gkeb
