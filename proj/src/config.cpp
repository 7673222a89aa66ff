#include "gkeb/config.hpp"

#include "gkeb/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

namespace gkeb {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ValidationError("config: " + where + ": " + what);
}

// One JSON object with a fixed key set; every read checks type and range.
class Section {
 public:
  Section(const json& j, std::string path, std::initializer_list<const char*> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_.empty() ? "document" : path_, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
      if (!ok.count(key)) fail(where(key), "unknown key");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section sub(const char* key, std::initializer_list<const char*> allowed) const {
    return Section(j_.at(key), where(key), allowed);
  }

  double number(const char* key, double fallback, double lo, double hi, bool open_lo = false) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(where(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x > hi || x < lo || (open_lo && x == lo)) {
      fail(where(key), "value out of range");
    }
    return x;
  }

  Index integer(const char* key, Index fallback, Index lo, Index hi) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(where(key), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < lo || x > hi) fail(where(key), "value out of range");
    return static_cast<Index>(x);
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) fail(where(key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(where(key), "expected true or false");
    return v.get<bool>();
  }

  std::string choice(const char* key, const std::string& fallback,
                     std::initializer_list<const char*> options) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(where(key), "expected a string");
    const std::string s = v.get<std::string>();
    for (const char* o : options)
      if (s == o) return s;
    fail(where(key), "unsupported value '" + s + "'");
  }

  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string() || v.get<std::string>().empty()) fail(where(key), "expected a nonempty string");
    return v.get<std::string>();
  }

  /// Array of strictly positive finite numbers; size 0 means any nonzero length.
  std::vector<double> positive_array(const char* key, std::size_t size) const {
    const json& v = j_.at(key);
    if (!v.is_array() || v.empty() || (size && v.size() != size)) {
      fail(where(key), size ? "expected an array of " + std::to_string(size) + " numbers"
                            : "expected a nonempty array");
    }
    std::vector<double> out;
    for (const json& e : v) {
      if (!e.is_number()) fail(where(key), "array entries must be numbers");
      const double x = e.get<double>();
      if (!std::isfinite(x) || !(x > 0.0)) fail(where(key), "array entries must be positive");
      out.push_back(x);
    }
    return out;
  }

  Vector theta(const char* key) const {
    const auto v = positive_array(key, 3);
    return Eigen::Map<const Vector>(v.data(), 3);
  }

 private:
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
};

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr Index kBig = std::numeric_limits<std::int32_t>::max();

void parse_problem(const Section& root, RunConfig& cfg) {
  if (!root.has("problem")) fail("problem", "missing required section");
  const Section p = root.sub("problem", {"name", "n", "kappa", "noise_level", "grid", "n_rays",
                                         "disk_mask", "phantom"});
  if (!p.has("name")) fail("problem.name", "missing required key");
  const std::string name = p.choice("name", "heat", {"heat", "tomo"});
  ProblemConfig& pc = cfg.problem;
  pc.noise_level = p.number("noise_level", 0.02, 0.0, 10.0);
  if (name == "heat") {
    for (const char* k : {"grid", "n_rays", "disk_mask", "phantom"})
      if (p.has(k)) fail(std::string("problem.") + k, "not a heat problem parameter");
    pc.kind = ProblemKind::Heat;
    pc.n = p.integer("n", 256, 2, 1 << 16);
    pc.kappa = p.number("kappa", 1.0, 0.0, kInf, true);
  } else {
    for (const char* k : {"n", "kappa"})
      if (p.has(k)) fail(std::string("problem.") + k, "not a tomography problem parameter");
    pc.kind = ProblemKind::Tomo;
    TomoSpec& t = pc.tomo;
    t.g = p.integer("grid", 32, 4, 64);
    t.n_rays = p.integer("n_rays", 720, 1, 1 << 20);
    t.disk_mask = p.boolean("disk_mask", false);
    t.noise_level = pc.noise_level;
    if (p.has("phantom")) {
      const Section ph = p.sub("phantom", {"nu", "sigma2", "ell", "truncation"});
      t.phantom_kernel.nu = ph.number("nu", 2.5, 0.0, 50.0, true);
      t.phantom_kernel.sigma2 = ph.number("sigma2", 1.0, 0.0, kInf, true);
      t.phantom_kernel.ell = ph.number("ell", 0.2, 0.0, kInf, true);
      t.truncation = ph.integer("truncation", 100, 0, t.g * t.g);
    }
    if (t.truncation > t.g * t.g) fail("problem.phantom.truncation", "exceeds the grid size");
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  const Section root(doc, "", {"problem", "prior", "hyperprior", "k", "theta0", "optimizer",
                               "two_param", "monitor", "benchmark", "reconstruct", "output_dir",
                               "seed", "dense_cap"});
  RunConfig cfg;
  parse_problem(root, cfg);

  if (root.has("prior")) {
    const Section s = root.sub("prior", {"nu", "backend"});
    cfg.nu = s.number("nu", 1.5, 0.0, 50.0, true);
    cfg.backend = s.choice("backend", "fft", {"fft", "dense"}) == "fft" ? CovBackend::FftGrid
                                                                        : CovBackend::Dense;
  }
  if (root.has("hyperprior")) {
    const Section s = root.sub("hyperprior", {"kind", "gamma"});
    cfg.hyperprior.kind =
        s.choice("kind", "flat", {"flat", "gamma"}) == "flat" ? HyperpriorKind::Flat : HyperpriorKind::Gamma;
    cfg.hyperprior.gamma = s.number("gamma", 1e-4, 0.0, kInf, true);
  }
  cfg.dense_cap = root.integer("dense_cap", 4096, 1, 1 << 15);
  cfg.k = root.integer("k", 22, 1, kBig);
  if (!root.has("theta0")) fail("theta0", "missing required key");
  cfg.theta0 = root.theta("theta0");
  cfg.output_dir = root.string("output_dir", "out");
  cfg.seed = root.unsigned_integer("seed", 0);

  OptimizeOptions& o = cfg.optimizer;
  o.k = cfg.k;
  if (root.has("optimizer")) {
    const Section s = root.sub("optimizer", {"mode", "parameterization", "objective", "max_iters",
                                             "grad_tol", "ftol", "memory", "lower", "upper"});
    cfg.mode = s.choice("mode", "full", {"full", "two_param"}) == "full" ? EstimateMode::Full
                                                                         : EstimateMode::TwoParam;
    o.parameterization = s.choice("parameterization", "log", {"log", "linear"}) == "log"
                             ? Parameterization::Log
                             : Parameterization::Linear;
    o.objective = s.choice("objective", "gengk", {"gengk", "exact"}) == "gengk" ? ObjectiveKind::GenGK
                                                                                : ObjectiveKind::Exact;
    o.max_iters = static_cast<int>(s.integer("max_iters", 200, 0, 100000));
    o.grad_tol = s.number("grad_tol", 1e-6, 0.0, kInf);
    o.ftol = s.number("ftol", 2.2e-9, 0.0, 1.0);
    o.memory = static_cast<int>(s.integer("memory", 10, 1, 100));
    if (s.has("lower")) o.lower = s.theta("lower");
    if (s.has("upper")) o.upper = s.theta("upper");
  }
  const Vector lo = o.lower.size() ? o.lower : Vector::Constant(3, 1e-12);
  const Vector hi = o.upper.size() ? o.upper : Vector::Constant(3, 1e12);
  if (!(hi.array() > lo.array()).all()) fail("optimizer", "upper bounds must exceed lower bounds");
  if (!(cfg.theta0.array() >= lo.array()).all() || !(cfg.theta0.array() <= hi.array()).all()) {
    fail("theta0", "outside the optimizer bounds");
  }

  if (root.has("two_param")) {
    const Section s = root.sub("two_param", {"theta3", "lambda_grid"});
    if (s.has("theta3")) cfg.theta3 = s.number("theta3", 1.0, 0.0, kInf, true);
    if (s.has("lambda_grid")) cfg.lambda_grid = s.positive_array("lambda_grid", 0);
  }
  if (root.has("monitor")) {
    const Section s = root.sub("monitor", {"k_max", "n_mc", "probes", "theta"});
    cfg.monitor.k_max = s.integer("k_max", 60, 1, kBig);
    cfg.monitor.n_mc = s.integer("n_mc", 10, 1, 100000);
    cfg.monitor.probes = s.choice("probes", "gaussian", {"gaussian", "rademacher"}) == "gaussian"
                             ? ProbeKind::Gaussian
                             : ProbeKind::Rademacher;
    if (s.has("theta")) cfg.monitor.theta = s.theta("theta");
  }
  if (root.has("benchmark")) {
    const Section s = root.sub("benchmark", {"sizes", "repeats", "exact_repeats", "theta"});
    if (s.has("sizes")) {
      cfg.benchmark.sizes.clear();
      for (double v : s.positive_array("sizes", 0)) {
        if (v != std::floor(v) || v < 2 || v > (1 << 16)) fail("benchmark.sizes", "entries must be integers in [2, 65536]");
        cfg.benchmark.sizes.push_back(static_cast<Index>(v));
      }
    }
    cfg.benchmark.repeats = static_cast<int>(s.integer("repeats", 5, 1, 1000));
    cfg.benchmark.exact_repeats = static_cast<int>(s.integer("exact_repeats", cfg.benchmark.repeats, 1, 1000));
    if (s.has("theta")) cfg.benchmark.theta = s.theta("theta");
  }
  if (root.has("reconstruct")) {
    const Section s = root.sub("reconstruct", {"theta", "exact"});
    if (s.has("theta")) cfg.reconstruct.theta = s.theta("theta");
    cfg.reconstruct.exact = s.boolean("exact", false);
  }

  const Index n = cfg.problem.kind == ProblemKind::Heat ? cfg.problem.n
                                                        : cfg.problem.tomo.g * cfg.problem.tomo.g;
  const Index m = cfg.problem.kind == ProblemKind::Heat ? cfg.problem.n : cfg.problem.tomo.n_rays;
  if (cfg.k > std::min(m, n)) fail("k", "exceeds min(m, n) of the problem");
  if (cfg.monitor.k_max > std::min(m, n)) fail("monitor.k_max", "exceeds min(m, n) of the problem");
  if (cfg.problem.kind == ProblemKind::Tomo && cfg.backend == CovBackend::Dense && n > cfg.dense_cap) {
    fail("prior.backend", "dense covariance above dense_cap");
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace gkeb
