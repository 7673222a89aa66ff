#include "gkeb/commands.hpp"

#include "gkeb/errors.hpp"
#include "gkeb/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace gkeb {

namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Empty field for "not available" so readers see NaN.
std::string cell(double x) { return std::isnan(x) ? std::string() : format_double(x); }

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<const char*> header) {
    bool first = true;
    for (const char* h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }
  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      if (!first) out_ << ',';
      out_ << cell(v);
      first = false;
    }
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

ojson number_or_null(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }

ojson vec_json(const Vector& v) {
  ojson a = ojson::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v[i]));
  return a;
}

const char* problem_name(const RunConfig& cfg) {
  return cfg.problem.kind == ProblemKind::Heat ? "heat" : "tomo";
}

ProblemInstance make_instance(const RunConfig& cfg, Index size_override = 0) {
  const ProblemConfig& p = cfg.problem;
  if (p.kind == ProblemKind::Heat) {
    return make_heat_problem(size_override ? size_override : p.n, p.kappa, p.noise_level, cfg.seed);
  }
  TomoSpec t = p.tomo;
  if (size_override) {
    t.g = size_override;
    t.truncation = std::min(t.truncation, t.g * t.g);
  }
  return make_tomo_problem(t, cfg.seed);
}

MarginalModel make_model(const RunConfig& cfg, const ProblemInstance& inst) {
  const Index n = inst.A->cols();
  MarginalModel model(inst.A, PriorFamily(inst.grid, cfg.nu, cfg.backend), Vector::Zero(n), inst.d,
                      cfg.hyperprior);
  model.dense_cap = cfg.dense_cap;
  return model;
}

std::string reconstruction_csv(const Vector& s_hat, const Vector& s_true, double re) {
  CsvWriter w({"i", "s_hat", "s_true", "re"});
  for (Index i = 0; i < s_hat.size(); ++i) {
    w.row({static_cast<double>(i), s_hat[i], s_true[i], re});
  }
  return w.str();
}

std::string iterates_csv(const OptimizeTrace& trace, double theta3) {
  CsvWriter w({"iter", "func_count", "value", "grad_norm", "theta1", "theta2", "theta3"});
  for (std::size_t i = 0; i < trace.iterates.size(); ++i) {
    const OptimizeIterate& it = trace.iterates[i];
    const double t3 = it.theta.size() == 3 ? it.theta[2] : theta3;
    w.row({static_cast<double>(i), static_cast<double>(it.func_count), it.value, it.grad_norm,
           it.theta[0], it.theta[1], t3});
  }
  return w.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

template <class F>
double time_median(int repeats, F&& f) {
  std::vector<double> t;
  for (int r = 0; r < repeats; ++r) {
    const auto a = std::chrono::steady_clock::now();
    f();
    const auto b = std::chrono::steady_clock::now();
    t.push_back(std::chrono::duration<double>(b - a).count());
  }
  return median(t);
}

bool dense_ok(const MarginalModel& model) {
  return model.m() <= model.dense_cap && model.n() <= model.dense_cap;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

BuiltProblem build_problem(const RunConfig& cfg) {
  ProblemInstance inst = make_instance(cfg);
  MarginalModel model = make_model(cfg, inst);
  return {std::move(inst), std::move(model)};
}

OutputSet cmd_estimate(const RunConfig& cfg) {
  const BuiltProblem bp = build_problem(cfg);
  const MarginalModel& model = bp.model;
  const Vector& s_true = bp.instance.s_true;

  ojson doc;
  doc["command"] = "estimate";
  doc["problem"] = problem_name(cfg);
  doc["seed"] = cfg.seed;
  doc["k"] = cfg.k;

  Vector theta(3), s_hat;
  OptimizeTrace trace;
  if (cfg.mode == EstimateMode::Full) {
    OptimizeOptions opts = cfg.optimizer;
    opts.k = cfg.k;
    std::tie(theta, trace) = optimize_hyperparams(model, cfg.theta0, opts);
    s_hat = opts.objective == ObjectiveKind::Exact ? map_exact(model, theta)
                                                   : map_reconstruct(model, theta, cfg.k);
    doc["mode"] = "full";
  } else {
    const double t3 = cfg.theta3.value_or(cfg.theta0[2]);
    const TwoParamObjective obj(model, t3, cfg.k);
    OptimizeOptions opts = cfg.optimizer;
    if (opts.lower.size()) opts.lower = Vector(opts.lower.head(2));
    if (opts.upper.size()) opts.upper = Vector(opts.upper.head(2));
    const MatvecCount before = model.A->counts();
    Vector t12;
    std::tie(t12, trace) = optimize_two_param(obj, cfg.theta0.head(2), opts);
    const MatvecCount used = model.A->counts() - before;
    theta << t12[0], t12[1], t3;
    s_hat = obj.map(t12[0], t12[1]);
    doc["mode"] = "two_param";
    doc["a_applications_after_precompute"] = used.total();
    if (!cfg.lambda_grid.empty()) {
      const LambdaSweep sw = optimal_lambda_sweep(obj, t12[0], s_true, cfg.lambda_grid);
      ojson js;
      js["best_lambda"] = sw.best_lambda;
      js["best_re"] = sw.best_re;
      js["lambdas"] = sw.lambdas;
      js["re"] = sw.re;
      js["estimated_lambda"] = 1.0 / t12[1];
      doc["lambda_sweep"] = js;
    }
  }
  const double re = relative_error(s_true, s_hat);
  const OptimizeIterate& last = trace.iterates.back();
  doc["theta"] = vec_json(theta);
  doc["objective_value"] = number_or_null(last.value);
  doc["grad_norm"] = number_or_null(last.grad_norm);
  doc["converged"] = trace.converged;
  doc["line_search_failed"] = trace.line_search_failed;
  doc["reason"] = trace.reason;
  doc["iterations"] = trace.iterations;
  doc["func_count"] = trace.func_count;
  doc["relative_error"] = re;

  return {{"theta_star.json", doc.dump(2) + "\n"},
          {"reconstruction.csv", reconstruction_csv(s_hat, s_true, re)},
          {"iterates.csv", iterates_csv(trace, theta[2])}};
}

OutputSet cmd_monitor(const RunConfig& cfg) {
  const BuiltProblem bp = build_problem(cfg);
  const MarginalModel& model = bp.model;
  const Vector theta = cfg.monitor.theta.value_or(cfg.theta0);
  check_theta(theta);
  const NoiseCovariance R(theta[0], model.m());
  const auto Q = model.prior.build(theta, 0);
  const GenGKFactorization fact =
      gengk_bidiag(*model.A, R, *Q, model.mu, model.d, cfg.monitor.k_max, true);
  const MonitorReport rep = run_monitor(*model.A, R, *Q, fact, cfg.monitor.n_mc,
                                        derive_seed(cfg.seed, 10), cfg.monitor.probes);

  const bool dense = dense_ok(model);
  ObjectiveEvaluation exact;
  Vector xi;
  if (dense) {
    exact = objective_exact(model, theta);
    xi = xi_recurrence(fact.alphas, fact.betas, dense_trace_HQ(*model.A, R, *Q), fact.k);
  }
  CsvWriter w({"k", "exact_re", "abs_err", "re_logdet", "re_quad", "xi_hat", "err_mc",
               "trace_gap_bound", "xi_exact"});
  for (Index k = 1; k <= fact.k; ++k) {
    double re = kNaN, abs_err = kNaN, re_ld = kNaN, re_q = kNaN, bound = kNaN, xk = kNaN;
    if (dense) {
      const GenGKFactorization fk = truncate_factorization(fact, k);
      const ObjectiveEvaluation ev = objective_gengk(model, theta, k, &fk);
      abs_err = std::abs(exact.value - ev.value);
      re = abs_err / std::abs(exact.value);
      re_ld = std::abs(exact.logdet_term - ev.logdet_term) / std::abs(exact.logdet_term);
      re_q = std::abs(exact.quad_term - ev.quad_term) / std::abs(exact.quad_term);
      xk = xi[k - 1];
      bound = trace_gap_bound(std::max(0.0, xk), fact.beta1());
    }
    w.row({static_cast<double>(k), re, abs_err, re_ld, re_q, rep.xi_hat[k - 1], rep.err_mc[k - 1],
           bound, xk});
  }
  return {{"error_vs_k.csv", w.str()}};
}

OutputSet cmd_benchmark(const RunConfig& cfg) {
  const Vector theta = cfg.benchmark.theta.value_or(cfg.theta0);
  check_theta(theta);
  CsvWriter w({"n", "exact_s", "gengk_s", "speedup"});
  for (Index size : cfg.benchmark.sizes) {
    if (cfg.problem.kind == ProblemKind::Tomo && (size < 4 || size > 64)) {
      throw ValidationError("benchmark: tomography grid sizes must lie in [4, 64]");
    }
    const ProblemInstance inst = make_instance(cfg, size);
    const MarginalModel model = make_model(cfg, inst);
    const Index k = std::min<Index>(cfg.k, std::min(model.m(), model.n()));
    const double tg = time_median(cfg.benchmark.repeats, [&] { (void)objective_gengk(model, theta, k); });
    double te = kNaN;
    if (dense_ok(model)) {
      te = time_median(cfg.benchmark.exact_repeats, [&] { (void)objective_exact(model, theta); });
    }
    w.row({static_cast<double>(model.n()), te, tg, te / tg});
  }
  return {{"timing.csv", w.str()}};
}

OutputSet cmd_reconstruct(const RunConfig& cfg) {
  const BuiltProblem bp = build_problem(cfg);
  const Vector theta = cfg.reconstruct.theta.value_or(cfg.theta0);
  check_theta(theta);
  const Vector s_hat = cfg.reconstruct.exact ? map_exact(bp.model, theta)
                                             : map_reconstruct(bp.model, theta, cfg.k);
  const double re = relative_error(bp.instance.s_true, s_hat);
  return {{"reconstruction.csv", reconstruction_csv(s_hat, bp.instance.s_true, re)}};
}

OutputSet run_command(const std::string& name, const RunConfig& cfg) {
  if (name == "estimate") return cmd_estimate(cfg);
  if (name == "monitor") return cmd_monitor(cfg);
  if (name == "benchmark") return cmd_benchmark(cfg);
  if (name == "reconstruct") return cmd_reconstruct(cfg);
  throw ValidationError("unknown command '" + name + "'");
}

void commit_outputs(const std::string& dir, const OutputSet& files) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
  std::vector<std::pair<fs::path, fs::path>> staged;
  try {
    for (const auto& [name, text] : files) {
      const fs::path tmp = root / ("." + name + ".partial");
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      staged.emplace_back(tmp, root / name);
      out << text;
      out.close();
      if (!out) throw NumericalError("failed writing " + tmp.string());
    }
    for (const auto& [tmp, final_path] : staged) fs::rename(tmp, final_path);
  } catch (...) {
    for (const auto& [tmp, _] : staged) fs::remove(tmp, ec);
    throw;
  }
}

Index CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError("csv: no column named " + name);
  return static_cast<Index>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ls(s);
    while (std::getline(ls, field, ',')) out.push_back(field);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw ValidationError("csv: empty input");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != t.header.size()) throw ValidationError("csv: ragged row");
    std::vector<double> row;
    for (const auto& f : fields) {
      if (f.empty()) {
        row.push_back(kNaN);
        continue;
      }
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(f, &used);
      } catch (const std::exception&) {
        throw ValidationError("csv: bad number '" + f + "'");
      }
      if (used != f.size()) throw ValidationError("csv: bad number '" + f + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace gkeb
