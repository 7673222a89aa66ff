// gkeb: empirical Bayes hyperparameter estimation driver.
//
//   gkeb estimate    --config run.json [--out dir] [--seed n]
//   gkeb monitor     ...
//   gkeb benchmark   ...
//   gkeb reconstruct ...
//
// Exit status: 0 success, 1 invalid input or config, 2 numerical failure.

#include "gkeb/commands.hpp"
#include "gkeb/errors.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

enum Exit { kOk = 0, kInvalid = 1, kNumerical = 2 };

int run(const std::string& command, const std::string& config_path,
        const std::optional<std::string>& out, const std::optional<std::uint64_t>& seed) {
  try {
    gkeb::RunConfig cfg = gkeb::load_config(config_path);
    if (out) cfg.output_dir = *out;
    if (seed) cfg.seed = *seed;
    const gkeb::OutputSet files = gkeb::run_command(command, cfg);
    gkeb::commit_outputs(cfg.output_dir, files);
    for (const auto& [name, _] : files) std::cout << cfg.output_dir << "/" << name << "\n";
    return kOk;
  } catch (const gkeb::ValidationError& e) {
    std::cerr << "gkeb: " << e.what() << "\n";
    return kInvalid;
  } catch (const gkeb::DomainError& e) {
    std::cerr << "gkeb: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "gkeb: numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical Bayes hyperparameter estimation with genGK"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"estimate", "monitor", "benchmark", "reconstruct"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--out", out, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "random seed (overrides seed)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }
  return run(app.get_subcommands().front()->get_name(), config, out, seed);
}
