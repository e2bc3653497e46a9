// Command-line front end: five subcommands sharing one configuration
// schema. Exit codes: 0 success, 2 configuration or usage problems, 3
// numerical failures.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nhim/commands.hpp"
#include "nhim/errors.hpp"

namespace {

struct Args {
  std::string config;
  std::string recipe;
  std::string out;
  int workers = -1;
  bool seed_only = false;
};

std::string resolve_recipe(const std::string& name) {
  const char* env = std::getenv("NHIM_RECIPES");
  const std::filesystem::path dir = env ? env : NHIM_RECIPE_DIR;
  return (dir / (name + ".json")).string();
}

void add_common(CLI::App* sub, Args& a) {
  sub->add_option("--config", a.config, "Path to a JSON configuration file");
  sub->add_option("--recipe", a.recipe,
                  "Named configuration from the recipe directory "
                  "(NHIM_RECIPES overrides the build-time default)");
  sub->add_option("--workers", a.workers,
                  "Worker threads (0 = all hardware threads)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--out", a.out, "Output directory override");
  sub->add_flag("--seed-only", a.seed_only,
                "Validate the configuration and seed stage, write the "
                "manifest, skip heavy computation");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Phase-space exploration toolkit: descriptor maps on isoenergetic "
      "slices, periodic-orbit families, tube manifolds and return maps"};
  app.require_subcommand(1);

  const std::vector<std::string> names = {"ld-map", "po-family", "manifolds",
                                          "psection", "validate-nhim"};
  const std::vector<std::string> blurbs = {
      "Compute descriptor maps over one or more slices",
      "Continue the saddle orbit family to target energies",
      "Globalize stable/unstable tube manifolds of the saddle orbit",
      "Record return-map crossings for a lattice of seeds",
      "Cross-check detected manifold nodes against the saddle orbit"};
  std::vector<Args> args(names.size());
  for (std::size_t k = 0; k < names.size(); ++k)
    add_common(app.add_subcommand(names[k], blurbs[k]), args[k]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (!app.get_subcommand(names[k])->parsed()) continue;
      const Args& a = args[k];
      if (a.config.empty() == a.recipe.empty())
        throw nhim::ConfigError(
            "provide exactly one of --config or --recipe");
      const std::string path =
          a.config.empty() ? resolve_recipe(a.recipe) : a.config;
      const nhim::RunConfig cfg = nhim::load_run_config(path);
      nhim::CliOptions cli;
      cli.workers = a.workers;
      cli.out_dir = a.out;
      cli.seed_only = a.seed_only;
      nhim::run_command(names[k], cfg, cli);
    }
    return 0;
  } catch (const nhim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nhim::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
