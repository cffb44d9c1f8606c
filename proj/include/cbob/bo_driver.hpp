#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cbob/acq_opt.hpp"
#include "cbob/acquisition.hpp"
#include "cbob/ep_inference.hpp"
#include "cbob/problems.hpp"

namespace cbob {

enum class Algorithm { Cbob, Eic };
enum class ConstraintModel { Hlgp, Gpc, Gpr };
enum class GammaPolicy { Fixed, Adapt };

Algorithm algorithm_from_string(const std::string& s);
ConstraintModel constraint_model_from_string(const std::string& s);
std::string to_string(Algorithm a);
std::string to_string(ConstraintModel m);

struct RunConfig {
  Algorithm algorithm = Algorithm::Cbob;
  ConstraintModel constraint_model = ConstraintModel::Hlgp;
  AcquisitionSpec acquisition;  // gamma is filled per iteration under Adapt
  GammaPolicy gamma_policy = GammaPolicy::Adapt;
  int budget = 100;
  std::uint64_t seed = 0;
  int init_count = -1;  // -1 means 11 points per dimension
  DesignKind init_design = DesignKind::Sobol;
  OptimizerConfig optimizer;
  EpConfig ep;
  int gp_restarts = 5;
  int adapt_probe_count = 2048;

  // Short label used in file names and summary rows, e.g. "cbob_hlgp".
  [[nodiscard]] std::string label() const;
};

struct IterationRow {
  int k = 0;  // 0 for initial-design rows, then 1..budget
  Eigen::VectorXd x;
  bool feasible = false;
  std::optional<double> objective;      // as observed (scenario-masked)
  std::optional<double> best_feasible;  // incumbent after this evaluation
  std::optional<double> acq_value;      // acquisition at the chosen point
  std::optional<double> wall_ms;        // per-iteration wall time, if timed
};

enum class RunStatus { Completed, Aborted };

struct Trajectory {
  std::vector<IterationRow> rows;
  RunStatus status = RunStatus::Completed;
  std::string error;  // nonempty iff aborted
};

// Throws std::invalid_argument when the config cannot run on the problem
// (e.g. the gpr constraint model under scenario s2, which hides values).
void validate_run_config(const Problem& problem, const RunConfig& config);

// One full optimization run. Deterministic for a fixed (problem, config):
// every random stream is derived from config.seed. Wall times are recorded
// only when record_wall_times is set, so untimed reruns are byte-stable.
Trajectory run(const Problem& problem, const RunConfig& config,
               bool record_wall_times = false);

struct MetricsSummary {
  int runs = 0;
  int terminal_defined = 0;  // runs whose final incumbent exists
  double median_bov = std::numeric_limits<double>::quiet_NaN();
  double mean_rof = std::numeric_limits<double>::quiet_NaN();
  // Quartile bands of best-feasible-so-far; entry 0 is the post-init state.
  std::vector<int> ks;
  std::vector<double> q25, q50, q75;  // NaN where no run has an incumbent
};

// Aggregate equal-shape trajectories (same init size and budget).
MetricsSummary metrics(const std::vector<Trajectory>& trajectories);

// Type-7 (linear interpolation) quantile of the values; NaN when empty.
double quantile(std::vector<double> values, double p);

}  // namespace cbob
