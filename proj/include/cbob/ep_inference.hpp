#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cbob/gp_regression.hpp"

namespace cbob {

enum class ObsKind { Value, ViolatedFlag };

// One constraint observation: either an observed value, or only the fact
// that the constraint was violated (value carries the +1 flag encoding).
struct ConstraintObservation {
  ObsKind kind = ObsKind::Value;
  double value = 0.0;

  static ConstraintObservation make_value(double g) { return {ObsKind::Value, g}; }
  static ConstraintObservation violated_flag() { return {ObsKind::ViolatedFlag, 1.0}; }
};

struct EpConfig {
  double sigma = 1e-6;   // observation noise std for value likelihoods
  double alpha = 1e-6;   // probit slope scale for flag likelihoods
  double tolerance = 1e-6;
  int max_sweeps = 100;
  double damping = 0.8;  // weight on the proposed natural parameters
  double min_site_variance = 1e-10;
  double max_site_variance = 1e12;
};

// Gaussian site approximating one likelihood factor, in observation units.
struct SiteParams {
  double mean = 0.0;
  double variance = 0.0;
  double log_normalizer = 0.0;
};

struct MomentMatchResult {
  double zhat;      // zeroth moment of cavity x probit likelihood
  double mean;      // first moment
  double variance;  // centered second moment
};

// Moments of N(g; cavity_mean, cavity_variance) * Phi(g / alpha).
MomentMatchResult moment_match_probit(double cavity_mean,
                                      double cavity_variance, double alpha);

struct HlgpModel {
  GpModel gp;  // GP over virtual observations; prediction goes through this
  std::vector<ConstraintObservation> observations;
  std::vector<SiteParams> sites;
  EpConfig config;
  bool converged = false;
  int sweeps = 0;
};

// Expectation propagation for the mixed value/flag likelihood at fixed
// hyperparameters. Value sites are assigned exactly once; flag sites are
// refined by sequential sweeps until the site parameters stabilize.
HlgpModel ep_fit_hlgp(const Eigen::MatrixXd& X,
                      const std::vector<ConstraintObservation>& observations,
                      const KernelParams& kernel, const MeanParams& mean,
                      const EpConfig& config = {});

GpPrediction hlgp_predict(const HlgpModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x);

// Site means/variances as a regression training set (used for moment-matched
// prediction and for marginal-likelihood hyperparameter refits).
GpTrainingSet to_virtual_observations(const HlgpModel& model);

// EP fit with hyperparameters chosen by alternating vanilla marginal
// likelihood fits on the virtual observations (at most `max_alternations`).
HlgpModel fit_hlgp_auto(const Eigen::MatrixXd& X,
                        const std::vector<ConstraintObservation>& observations,
                        const EpConfig& config = {}, int restarts = 5,
                        std::uint64_t seed = 0, int max_alternations = 3);

// ---------------------------------------------------------------------------
// Probit GP classifier baseline (labels -1 / +1, zero-mean latent).
// ---------------------------------------------------------------------------

struct GpcModel {
  GpModel gp;
  std::vector<int> labels;
  std::vector<SiteParams> sites;
  EpConfig config;
  bool converged = false;
  int sweeps = 0;
};

GpcModel ep_fit_gpc(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                    const KernelParams& kernel, const EpConfig& config = {});

// Latent posterior at x.
GpPrediction gpc_latent(const GpcModel& model,
                        const Eigen::Ref<const Eigen::VectorXd>& x);

// P(label = +1 | x) = Phi(latent_mean / sqrt(1 + latent_variance)).
double gpc_class_probability(const GpcModel& model,
                             const Eigen::Ref<const Eigen::VectorXd>& x);

GpcModel fit_gpc_auto(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                      const EpConfig& config = {}, int restarts = 5,
                      std::uint64_t seed = 0, int max_alternations = 3);

}  // namespace cbob
