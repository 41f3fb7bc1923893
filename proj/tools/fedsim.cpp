#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/runner.hpp"
#include "fedsim/selfcheck.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated recommender training simulator: attacks, defenses, metrics"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string out_dir = "runs";
  std::uint64_t seed_value = 0;
  CLI::Option* seed_opt = app.add_option("--seed", seed_value, "override every config's seed");
  app.add_option("--out", out_dir, "base output directory")->capture_default_str();

  std::vector<std::string> config_files;
  CLI::App* run_cmd = app.add_subcommand("run", "execute one or more config files");
  run_cmd->add_option("configs", config_files, "config files")
      ->required()
      ->check(CLI::ExistingFile);

  std::string grid_dir;
  CLI::App* grid_cmd = app.add_subcommand("grid", "execute every .cfg file in a directory");
  grid_cmd->add_option("dir", grid_dir, "directory of configs")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI::App* check_cmd = app.add_subcommand("check", "run gradient and invariant self-checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(check_cmd)) return fedsim::print_selfcheck(fedsim::run_selfcheck());

    std::optional<std::uint64_t> seed;
    if (seed_opt->count() > 0) seed = seed_value;
    if (app.got_subcommand(run_cmd)) {
      std::vector<std::filesystem::path> paths(config_files.begin(), config_files.end());
      return fedsim::run_many(paths, out_dir, seed);
    }
    return fedsim::run_grid_dir(grid_dir, out_dir, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
