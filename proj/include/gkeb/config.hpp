#pragma once

#include "gkeb/covariance.hpp"
#include "gkeb/estimate.hpp"
#include "gkeb/marginal.hpp"
#include "gkeb/monitor.hpp"
#include "gkeb/problems.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gkeb {

enum class ProblemKind { Heat, Tomo };
enum class EstimateMode { Full, TwoParam };

struct ProblemConfig {
  ProblemKind kind = ProblemKind::Heat;
  Index n = 256;          // heat
  double kappa = 1.0;     // heat
  double noise_level = 0.02;
  TomoSpec tomo;          // tomo (its noise_level mirrors the field above)
};

struct MonitorConfig {
  Index k_max = 60;
  Index n_mc = 10;
  ProbeKind probes = ProbeKind::Gaussian;
  std::optional<Vector> theta;  // defaults to theta0
};

struct BenchmarkConfig {
  std::vector<Index> sizes{256, 512, 1024};  // heat: n; tomo: grid side g
  int repeats = 5;
  int exact_repeats = 5;
  std::optional<Vector> theta;
};

struct ReconstructConfig {
  std::optional<Vector> theta;
  bool exact = false;
};

/// Everything a CLI run needs. Built only through parse_config, which checks
/// the whole document before anything is computed.
struct RunConfig {
  ProblemConfig problem;
  double nu = 1.5;
  CovBackend backend = CovBackend::FftGrid;
  Index dense_cap = 4096;
  Hyperprior hyperprior;
  Index k = 22;
  Vector theta0;
  EstimateMode mode = EstimateMode::Full;
  OptimizeOptions optimizer;
  std::optional<double> theta3;  // two-parameter mode; defaults to theta0[2]
  std::vector<double> lambda_grid;
  MonitorConfig monitor;
  BenchmarkConfig benchmark;
  ReconstructConfig reconstruct;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

/// Parses and validates a JSON document. Unknown keys, wrong types and out of
/// range values raise ValidationError naming the offending key.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

}  // namespace gkeb
