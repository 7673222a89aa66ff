#pragma once

#include "gkeb/config.hpp"

#include <map>
#include <string>
#include <vector>

namespace gkeb {

/// File name -> full contents. Commands build these in memory; nothing
/// touches the output directory until every file is ready.
using OutputSet = std::map<std::string, std::string>;

struct BuiltProblem {
  ProblemInstance instance;
  MarginalModel model;
};

BuiltProblem build_problem(const RunConfig& cfg);

OutputSet cmd_estimate(const RunConfig& cfg);
OutputSet cmd_monitor(const RunConfig& cfg);
OutputSet cmd_benchmark(const RunConfig& cfg);
OutputSet cmd_reconstruct(const RunConfig& cfg);

/// Dispatch by subcommand name; ValidationError for an unknown name.
OutputSet run_command(const std::string& name, const RunConfig& cfg);

/// Writes every file to a temporary name inside dir, then renames them into
/// place. The directory is created when missing.
void commit_outputs(const std::string& dir, const OutputSet& files);

/// Shortest round-trip decimal form ("%.17g").
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;  // empty fields read as NaN

  Index column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

}  // namespace gkeb
