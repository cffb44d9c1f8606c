#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "cbob/ep_inference.hpp"
#include "cbob/gp_regression.hpp"

namespace cbob {

enum class ExplorationKind { None, Pob, Emub };

// Latent constraint posterior at a point. Classifier surrogates squash the
// latent through a probit link when converted to a feasibility probability.
struct LatentState {
  double mean = 0.0;
  double std_dev = 0.0;
  bool classifier = false;
};

struct ConstraintSurrogate {
  std::variant<GpModel, HlgpModel, GpcModel> model;

  LatentState state(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

struct AcquisitionSpec {
  ExplorationKind exploration = ExplorationKind::Emub;
  double beta = 1.96;   // half-width of the exploration band, in latent stds
  double lambda = 0.0;  // feasibility threshold on the latent constraint
  Eigen::VectorXd gamma;  // band-mass normalizers, one per constraint; empty
                          // means all ones
};

struct SurrogateBundle {
  std::optional<GpModel> objective;
  std::vector<ConstraintSurrogate> constraints;
  std::optional<double> best_feasible;
};

// Pointwise pieces -----------------------------------------------------------

double expected_improvement(double best, double mean, double std_dev);
double log_expected_improvement(double best, double mean, double std_dev);

// Probability that the latent constraint is at most lambda. Degenerate
// posteriors (std below 1e-12) fall back to a hard indicator.
double feasibility_factor(const LatentState& s, double lambda);
double log_feasibility_factor(const LatentState& s, double lambda);

// Posterior mass of the band |g| <= beta * std.
double probability_in_band(double mean, double std_dev, double beta);

// Expected amount by which |g| falls short of beta * std, in latent units.
double uncertainty_band_mass(double mean, double std_dev, double beta);

double exploration_value(const LatentState& s, ExplorationKind kind,
                         double beta, double gamma);

// Bundle-level acquisitions --------------------------------------------------

double pof(const SurrogateBundle& b, const AcquisitionSpec& spec,
           const Eigen::Ref<const Eigen::VectorXd>& x);
double dpof(const SurrogateBundle& b, const AcquisitionSpec& spec,
            const Eigen::Ref<const Eigen::VectorXd>& x);
double eicb(const SurrogateBundle& b, const AcquisitionSpec& spec,
            const Eigen::Ref<const Eigen::VectorXd>& x);

// Log-space variants for optimization; results are clamped to -1e300 so the
// maximizer can rank points even where the linear value underflows.
double log_dpof(const SurrogateBundle& b, const AcquisitionSpec& spec,
                const Eigen::Ref<const Eigen::VectorXd>& x);
double log_eicb(const SurrogateBundle& b, const AcquisitionSpec& spec,
                const Eigen::Ref<const Eigen::VectorXd>& x);

// Per-constraint normalizers: the largest decorated band mass seen over a
// low-discrepancy probe of the box, floored at 1e-12.
Eigen::VectorXd adapt_gamma(const SurrogateBundle& b,
                            const AcquisitionSpec& spec,
                            const Eigen::Ref<const Eigen::VectorXd>& lower,
                            const Eigen::Ref<const Eigen::VectorXd>& upper,
                            int probe_count, std::uint64_t seed);

}  // namespace cbob
