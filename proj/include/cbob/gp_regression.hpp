#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "cbob/core_math.hpp"

namespace cbob {

struct GpTrainingSet {
  Eigen::MatrixXd X;                // dim x N, columns are points
  Eigen::VectorXd y;                // N targets
  Eigen::VectorXd noise_variances;  // N, each >= 0
};

// Thrown when the covariance cannot be factorized even at the maximum
// jitter level; carries the closest (most suspicious) pair of points.
struct GpFactorizationError : std::runtime_error {
  GpFactorizationError(const std::string& msg, Eigen::Index a, Eigen::Index b)
      : std::runtime_error(msg), first(a), second(b) {}
  Eigen::Index first;
  Eigen::Index second;
};

struct GpFitOptions {
  // Hyperparameter box, in normalized input / standardized target units.
  double lengthscale_min = 1e-3;
  double lengthscale_max = 10.0;
  double signal_variance_min = 1e-4;
  double signal_variance_max = 1e3;
  double mean_bound = 10.0;
  bool fit_mean = true;
  int max_iterations = 200;
};

struct GpModel {
  GpTrainingSet train;  // raw units
  KernelParams kernel;  // raw units
  MeanParams mean;      // raw units

  // Affine transforms between raw and internal units. Fitted models map
  // inputs to the unit box and standardize targets; explicitly built models
  // use identity transforms.
  Eigen::VectorXd input_lo, input_width;
  double y_offset = 0.0;
  double y_scale = 1.0;
  KernelParams kernel_int;
  double mean_int = 0.0;

  Eigen::MatrixXd X_int;   // normalized inputs
  Eigen::MatrixXd chol;    // lower Cholesky factor of K + noise + jitter
  Eigen::VectorXd alpha;   // (K + noise + jitter)^{-1} (y_int - mean_int)
  double relative_jitter = 1e-9;  // diagonal boost, relative to signal variance

  [[nodiscard]] Eigen::Index dim() const { return train.X.rows(); }
  [[nodiscard]] Eigen::Index size() const { return train.X.cols(); }
};

struct GpPrediction {
  double mean;
  double variance;
};

// Factorize a model at explicit hyperparameters in raw units (no transforms).
GpModel gp_build(GpTrainingSet train, const KernelParams& kernel,
                 const MeanParams& mean);

// Multi-start gradient maximization of the log marginal likelihood in log
// hyperparameter space. Deterministic for a fixed seed.
GpModel gp_fit(GpTrainingSet train, int restarts = 5, std::uint64_t seed = 0,
               const GpFitOptions& options = {});

GpPrediction gp_predict(const GpModel& model,
                        const Eigen::Ref<const Eigen::VectorXd>& x);

// Log marginal likelihood of the stored training data under the model, in
// raw units (transform Jacobian included).
double log_marginal_likelihood(const GpModel& model);

}  // namespace cbob
