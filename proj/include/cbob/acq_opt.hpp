#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

namespace cbob {

struct OptimizerConfig {
  int probe_count = 4096;     // low-discrepancy probe grid over the box
  int multistarts = 10;       // best probes promoted to local refinement
  int local_iterations = 1000;
  double fd_step = 1e-6;      // finite-difference step in unit coordinates
  std::uint64_t seed = 0;
};

struct AcqOptResult {
  Eigen::VectorXd x;
  double value;
};

// Global maximization of a (possibly multimodal, log-scaled) acquisition
// over a box: scrambled Sobol probes, then projected-gradient refinement of
// the best probes in unit coordinates. The result is never worse than the
// best probe. Throws std::runtime_error when every probe is non-finite.
AcqOptResult maximize_acquisition(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::Ref<const Eigen::VectorXd>& lower,
    const Eigen::Ref<const Eigen::VectorXd>& upper,
    const OptimizerConfig& config);

}  // namespace cbob
