#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "cbob/experiment.hpp"

namespace {

std::optional<int> workers_from_env() {
  const char* raw = std::getenv("CBOB_WORKERS");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (end == raw || *end != '\0' || v < 1)
    throw std::invalid_argument(
        std::string("CBOB_WORKERS: expected a positive integer, got '") +
        raw + "'");
  return static_cast<int>(v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained Bayesian optimization over expensive black boxes"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string seeds_text;
  std::string summarize_dir;
  std::string figure_id;
  std::string demo_out;
  int workers = 0;
  int budget = 0;
  double beta = 0.0;
  bool force = false;
  bool timings = false;
  bool demo_force = false;

  CLI::App* run_cmd =
      app.add_subcommand("run", "Execute an experiment config");
  run_cmd->add_option("--config", config_path, "Experiment config file (JSON)")
      ->required();
  CLI::Option* out_opt = run_cmd->add_option(
      "--out", out_dir, "Output directory (overrides the config)");
  CLI::Option* seeds_opt = run_cmd->add_option(
      "--seeds", seeds_text, "Seed list: '0,1,7' or '0..19'");
  CLI::Option* workers_opt =
      run_cmd->add_option("--workers", workers, "Parallel worker count");
  CLI::Option* budget_opt = run_cmd->add_option(
      "--budget", budget, "Override every template's budget");
  CLI::Option* beta_opt = run_cmd->add_option(
      "--beta", beta, "Override every template's exploration band half-width");
  run_cmd->add_flag("--force", force,
                    "Allow writing into a non-empty output directory");
  run_cmd->add_flag("--timings", timings,
                    "Record per-iteration wall times (reruns then differ)");

  CLI::App* sum_cmd =
      app.add_subcommand("summarize", "Aggregate a results directory");
  sum_cmd
      ->add_option("dir", summarize_dir,
                   "Directory holding manifest.json and trajectory files")
      ->required();

  CLI::App* demo_cmd = app.add_subcommand(
      "demo", "Write plot-ready data files for one illustration");
  demo_cmd->add_option("figure", figure_id, "One of fig1, fig2, fig3, figB1")
      ->required();
  demo_cmd->add_option("--out", demo_out, "Output directory")->required();
  demo_cmd->add_flag("--force", demo_force,
                     "Allow writing into a non-empty output directory");

  CLI::App* list_cmd =
      app.add_subcommand("list-problems", "List built-in benchmark problems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) {
      cbob::ExperimentConfig config =
          cbob::load_experiment_config(config_path);
      cbob::RunOverrides overrides;
      if (*out_opt) overrides.out_dir = out_dir;
      if (*seeds_opt) overrides.seeds = cbob::parse_seed_list(seeds_text);
      if (*workers_opt)
        overrides.workers = workers;
      else
        overrides.workers = workers_from_env();
      if (*budget_opt) overrides.budget = budget;
      if (*beta_opt) overrides.beta = beta;
      overrides.force = force;
      overrides.timings = timings;
      return cbob::cmd_run(std::move(config), overrides, std::cout,
                           std::cerr);
    }
    if (sum_cmd->parsed())
      return cbob::cmd_summarize(summarize_dir, std::cout, std::cerr);
    if (demo_cmd->parsed())
      return cbob::cmd_demo(figure_id, demo_out, demo_force, std::cout,
                            std::cerr);
    if (list_cmd->parsed()) return cbob::cmd_list_problems(std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
