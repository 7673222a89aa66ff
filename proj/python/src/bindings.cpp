#include "gkeb/commands.hpp"
#include "gkeb/errors.hpp"
#include "gkeb/estimate.hpp"
#include "gkeb/gengk.hpp"
#include "gkeb/marginal.hpp"
#include "gkeb/monitor.hpp"
#include "gkeb/problems.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace gkeb;

namespace {

struct PyModel {
  MarginalModel model;
  std::optional<Vector> s_true;
};

CovBackend parse_backend(const std::string& name) {
  if (name == "fft") return CovBackend::FftGrid;
  if (name == "dense") return CovBackend::Dense;
  throw ValidationError("backend must be 'fft' or 'dense'");
}

PyModel model_from_array(const Matrix& A, const Vector& d, std::pair<Index, Index> shape,
                         std::pair<double, double> spacing, double nu,
                         const std::optional<Vector>& mu, const std::string& backend) {
  const GridSpec grid{shape.first, shape.second, spacing.first, spacing.second};
  if (grid.size() != A.cols()) throw ValidationError("grid size does not match A.shape[1]");
  return {MarginalModel(std::make_shared<DenseOperator>(A), PriorFamily(grid, nu, parse_backend(backend)),
                        mu ? *mu : Vector::Zero(A.cols()), d),
          std::nullopt};
}

PyModel model_from_config(const std::string& text) {
  BuiltProblem b = build_problem(parse_config(text));
  return {std::move(b.model), std::move(b.instance.s_true)};
}

py::tuple value_and_gradient(const ObjectiveEvaluation& e) { return py::make_tuple(e.value, e.gradient); }

py::dict bidiagonalize(const PyModel& m, const Vector& theta, Index k, bool reorth) {
  check_theta(theta);
  const NoiseCovariance R(theta[0], m.model.m());
  const auto Q = m.model.prior.build(theta, 0);
  const GenGKFactorization f = gengk_bidiag(*m.model.A, R, *Q, m.model.mu, m.model.d, k, reorth);
  py::dict out;
  out["U"] = f.U;
  out["V"] = f.V;
  out["QV"] = f.QV;
  out["alphas"] = f.alphas;
  out["betas"] = f.betas;
  out["B"] = f.B();
  out["k"] = f.k;
  out["breakdown_at"] = f.breakdown_at ? py::cast(*f.breakdown_at) : py::none();
  return out;
}

py::dict estimate(const PyModel& m, const Vector& theta0, Index k, int max_iters,
                  const std::string& parameterization, const std::string& objective) {
  OptimizeOptions opts;
  opts.k = k;
  opts.max_iters = max_iters;
  if (parameterization == "log") opts.parameterization = Parameterization::Log;
  else if (parameterization == "linear") opts.parameterization = Parameterization::Linear;
  else throw ValidationError("parameterization must be 'log' or 'linear'");
  if (objective == "gengk") opts.objective = ObjectiveKind::GenGK;
  else if (objective == "exact") opts.objective = ObjectiveKind::Exact;
  else throw ValidationError("objective must be 'gengk' or 'exact'");
  const auto [theta, trace] = optimize_hyperparams(m.model, theta0, opts);
  py::dict out;
  out["theta"] = theta;
  out["value"] = trace.iterates.empty() ? py::none() : py::cast(trace.iterates.back().value);
  out["converged"] = trace.converged;
  out["iterations"] = trace.iterations;
  out["func_count"] = trace.func_count;
  out["reason"] = trace.reason;
  return out;
}

py::dict monitor(const PyModel& m, const Vector& theta, Index k_max, Index n_mc, std::uint64_t seed) {
  check_theta(theta);
  const NoiseCovariance R(theta[0], m.model.m());
  const auto Q = m.model.prior.build(theta, 0);
  const GenGKFactorization f = gengk_bidiag(*m.model.A, R, *Q, m.model.mu, m.model.d, k_max);
  const MonitorReport r = run_monitor(*m.model.A, R, *Q, f, n_mc, seed);
  py::dict out;
  out["xi_hat"] = r.xi_hat;
  out["err_mc"] = r.err_mc;
  out["xi0_hat"] = r.xi0_hat;
  out["beta1"] = r.beta1;
  return out;
}

}  // namespace

PYBIND11_MODULE(_gkeb, mod) {
  mod.doc() = "Empirical Bayes hyperparameter estimation with generalized Golub-Kahan";

  py::class_<PyModel>(mod, "Model")
      .def(py::init(&model_from_array), py::arg("A"), py::arg("d"), py::arg("shape"),
           py::arg("spacing"), py::arg("nu") = 1.5, py::arg("mu") = py::none(),
           py::arg("backend") = "fft")
      .def_static("from_config", &model_from_config, py::arg("config_json"))
      .def_property_readonly("m", [](const PyModel& m) { return m.model.m(); })
      .def_property_readonly("n", [](const PyModel& m) { return m.model.n(); })
      .def_property_readonly("d", [](const PyModel& m) { return m.model.d; })
      .def_property_readonly("s_true", [](const PyModel& m) { return m.s_true; })
      .def("forward_matrix", [](const PyModel& m) { return assemble_dense(*m.model.A); })
      .def("objective_exact",
           [](const PyModel& m, const Vector& t) { return value_and_gradient(objective_exact(m.model, t)); },
           py::arg("theta"))
      .def("objective_gengk",
           [](const PyModel& m, const Vector& t, Index k) {
             return value_and_gradient(objective_gengk(m.model, t, k));
           },
           py::arg("theta"), py::arg("k"))
      .def("bidiagonalize", &bidiagonalize, py::arg("theta"), py::arg("k"), py::arg("reorth") = true)
      .def("estimate", &estimate, py::arg("theta0"), py::arg("k") = 22, py::arg("max_iters") = 200,
           py::arg("parameterization") = "log", py::arg("objective") = "gengk")
      .def("map",
           [](const PyModel& m, const Vector& t, Index k) { return map_reconstruct(m.model, t, k); },
           py::arg("theta"), py::arg("k"))
      .def("map_exact", [](const PyModel& m, const Vector& t) { return map_exact(m.model, t); },
           py::arg("theta"))
      .def("monitor", &monitor, py::arg("theta"), py::arg("k_max"), py::arg("n_mc") = 10,
           py::arg("seed") = 0);

  mod.def("run_command",
          [](const std::string& name, const std::string& config_json) {
            return run_command(name, parse_config(config_json));
          },
          py::arg("name"), py::arg("config_json"),
          "Run a CLI subcommand in process; returns {file name: contents}.");
  mod.def("relative_error", &relative_error, py::arg("s_true"), py::arg("s_hat"));
}
