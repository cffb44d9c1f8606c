#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cbob/bo_driver.hpp"
#include "cbob/problems.hpp"

namespace cbob {

inline constexpr const char* kToolVersion = "0.1.0";

// A batch experiment: one problem, a list of run templates, a seed list.
struct ExperimentConfig {
  Problem problem;
  std::string problem_identity;  // canonical text for hashing (name or spec)
  std::vector<RunConfig> algorithms;  // per-template seed fields are ignored
  std::vector<std::uint64_t> seeds;
  std::string out_dir;    // may be empty until --out resolves it
  int workers = 1;
  std::string config_hash;  // canonical hash of the effective config
};

// Load and validate a declarative config file. Unknown keys anywhere in the
// document are errors. Throws std::invalid_argument with a field path.
ExperimentConfig load_experiment_config(const std::string& path);

// Re-derive the canonical hash after command-line overrides are applied.
void refresh_config_hash(ExperimentConfig& config);

// Overrides from the command line; applied to every algorithm template.
struct RunOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<int> workers;
  std::optional<int> budget;
  std::optional<double> beta;
  bool force = false;
  bool timings = false;
};

// Seed list syntax: "0,1,7" or "0..19" (inclusive range).
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Shortest-round-trip-safe decimal formatting used in every data file.
std::string format_double(double v);

void write_trajectory_csv(const std::string& path, std::uint64_t seed,
                          Eigen::Index dim, const Trajectory& trajectory);

struct LoadedTrajectory {
  std::uint64_t seed = 0;
  Trajectory trajectory;
};

// Strict reader: the header must match the documented schema exactly.
LoadedTrajectory read_trajectory_csv(const std::string& path);

std::string trajectory_file_name(const std::string& label,
                                 std::uint64_t seed);

// Subcommand entry points; return process exit codes (0/1/2).
int cmd_run(ExperimentConfig config, const RunOverrides& overrides,
            std::ostream& out, std::ostream& err);
int cmd_summarize(const std::string& dir, std::ostream& out,
                  std::ostream& err);
int cmd_demo(const std::string& figure_id, const std::string& out_dir,
             bool force, std::ostream& out, std::ostream& err);
int cmd_list_problems(std::ostream& out);

}  // namespace cbob
