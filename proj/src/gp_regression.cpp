#include "cbob/gp_regression.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "cbob/optimize.hpp"
#include "cbob/rng.hpp"

namespace cbob {

namespace {

constexpr double kJitterStart = 1e-9;
constexpr double kJitterMax = 1e-3;
constexpr double kSqrt5 = 2.2360679774997896964;

void validate_training_set(const GpTrainingSet& t) {
  if (t.X.cols() < 1) throw std::invalid_argument("gp: empty training set");
  if (t.y.size() != t.X.cols() || t.noise_variances.size() != t.X.cols())
    throw std::invalid_argument("gp: training set size mismatch");
  if (!t.X.allFinite() || !t.y.allFinite() || !t.noise_variances.allFinite())
    throw std::invalid_argument("gp: non-finite training data");
  if ((t.noise_variances.array() < 0).any())
    throw std::invalid_argument("gp: negative noise variance");
}

std::pair<Eigen::Index, Eigen::Index> closest_pair(const Eigen::MatrixXd& X) {
  Eigen::Index a = 0, b = X.cols() > 1 ? 1 : 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = j + 1; i < X.cols(); ++i) {
      const double d = (X.col(i) - X.col(j)).squaredNorm();
      if (d < best) {
        best = d;
        a = j;
        b = i;
      }
    }
  return {a, b};
}

// Factorize K(X_int) + diag(noise) + jitter, escalating jitter if needed.
// Returns false if even the maximum jitter fails.
bool factorize(const Eigen::MatrixXd& X_int, const Eigen::VectorXd& noise_int,
               const KernelParams& kernel_int, double& relative_jitter,
               Eigen::MatrixXd& L) {
  Eigen::MatrixXd K = kernel_matrix(X_int, kernel_int);
  K.diagonal() += noise_int;
  for (double rj = relative_jitter; rj <= kJitterMax * 1.001; rj *= 10.0) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += rj * kernel_int.signal_variance;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      L = llt.matrixL();
      relative_jitter = rj;
      return true;
    }
  }
  return false;
}

void finalize_factorization(GpModel& m, const Eigen::VectorXd& noise_int,
                            const Eigen::VectorXd& y_int) {
  m.relative_jitter = kJitterStart;
  if (!factorize(m.X_int, noise_int, m.kernel_int, m.relative_jitter, m.chol)) {
    const auto [a, b] = closest_pair(m.X_int);
    throw GpFactorizationError(
        "gp: covariance factorization failed at maximum jitter; closest "
        "training points are #" +
            std::to_string(a) + " and #" + std::to_string(b),
        a, b);
  }
  const Eigen::VectorXd r = (y_int.array() - m.mean_int).matrix();
  m.alpha = m.chol.triangularView<Eigen::Lower>().solve(r);
  m.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(m.alpha);
}

// Marginal likelihood evaluation state for one hyperparameter vector.
// theta = [log l_1..log l_n, log sv, mean_constant].
struct LmlEval {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;
};

class LmlObjective {
 public:
  LmlObjective(const Eigen::MatrixXd& X_int, Eigen::VectorXd y_int,
               Eigen::VectorXd noise_int, bool fit_mean)
      : X_(X_int),
        y_(std::move(y_int)),
        noise_(std::move(noise_int)),
        fit_mean_(fit_mean),
        n_(X_int.rows()),
        N_(X_int.cols()) {
    sqdiff_.reserve(n_);
    for (Eigen::Index d = 0; d < n_; ++d) {
      Eigen::MatrixXd S(N_, N_);
      for (Eigen::Index j = 0; j < N_; ++j)
        for (Eigen::Index i = 0; i < N_; ++i) {
          const double diff = X_(d, i) - X_(d, j);
          S(i, j) = diff * diff;
        }
      sqdiff_.push_back(std::move(S));
    }
  }

  [[nodiscard]] Eigen::Index theta_size() const { return n_ + 2; }

  const LmlEval& evaluate(const Eigen::VectorXd& theta) {
    if (cached_ && theta == cached_theta_) return cache_;
    cached_theta_ = theta;
    cached_ = true;
    cache_ = compute(theta);
    return cache_;
  }

 private:
  LmlEval compute(const Eigen::VectorXd& theta) const {
    LmlEval out;
    out.grad = Eigen::VectorXd::Zero(theta.size());

    const Eigen::VectorXd ls = theta.head(n_).array().exp().matrix();
    const double sv = std::exp(theta(n_));
    const double mean = theta(n_ + 1);

    Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(N_, N_);
    for (Eigen::Index d = 0; d < n_; ++d) r2 += sqdiff_[d] / (ls(d) * ls(d));
    const Eigen::ArrayXXd r = r2.array().sqrt();
    const Eigen::ArrayXXd expf = (-kSqrt5 * r).exp();
    const Eigen::ArrayXXd one_sr5 = 1.0 + kSqrt5 * r;
    Eigen::MatrixXd Kk = (sv * expf * (one_sr5 + (5.0 / 3.0) * r2.array())).matrix();

    const double jit = kJitterStart * sv;
    Eigen::MatrixXd Kn = Kk;
    Kn.diagonal() += noise_;
    Kn.diagonal().array() += jit;

    Eigen::LLT<Eigen::MatrixXd> llt(Kn);
    if (llt.info() != Eigen::Success) return out;  // -inf, rejected by search

    const Eigen::VectorXd resid = (y_.array() - mean).matrix();
    Eigen::VectorXd alpha = llt.solve(resid);
    const Eigen::MatrixXd L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    out.value = -0.5 * resid.dot(alpha) - 0.5 * logdet -
                0.5 * static_cast<double>(N_) * kLog2Pi;

    // d lml / d theta = 0.5 tr((alpha alpha^T - K^{-1}) dK/dtheta)
    Eigen::MatrixXd W = alpha * alpha.transpose();
    W -= llt.solve(Eigen::MatrixXd::Identity(N_, N_));

    const Eigen::ArrayXXd common = (5.0 / 3.0) * sv * expf * one_sr5;
    for (Eigen::Index d = 0; d < n_; ++d) {
      const Eigen::ArrayXXd dK = common * sqdiff_[d].array() / (ls(d) * ls(d));
      out.grad(d) = 0.5 * (W.array() * dK).sum();
    }
    out.grad(n_) = 0.5 * ((W.array() * Kk.array()).sum() + jit * W.trace());
    out.grad(n_ + 1) = fit_mean_ ? alpha.sum() : 0.0;
    return out;
  }

  const Eigen::MatrixXd& X_;
  Eigen::VectorXd y_;
  Eigen::VectorXd noise_;
  bool fit_mean_;
  Eigen::Index n_, N_;
  std::vector<Eigen::MatrixXd> sqdiff_;

  mutable bool cached_ = false;
  mutable Eigen::VectorXd cached_theta_;
  mutable LmlEval cache_;
};

}  // namespace

GpModel gp_build(GpTrainingSet train, const KernelParams& kernel,
                 const MeanParams& mean) {
  validate_training_set(train);
  validate_kernel_params(kernel, train.X.rows());

  GpModel m;
  m.train = std::move(train);
  m.kernel = kernel;
  m.mean = mean;
  m.input_lo = Eigen::VectorXd::Zero(m.train.X.rows());
  m.input_width = Eigen::VectorXd::Ones(m.train.X.rows());
  m.kernel_int = kernel;
  m.mean_int = mean.constant;
  m.X_int = m.train.X;
  finalize_factorization(m, m.train.noise_variances, m.train.y);
  return m;
}

GpModel gp_fit(GpTrainingSet train, int restarts, std::uint64_t seed,
               const GpFitOptions& options) {
  validate_training_set(train);
  if (restarts < 1) throw std::invalid_argument("gp_fit: restarts must be >= 1");

  const Eigen::Index n = train.X.rows();
  const Eigen::Index N = train.X.cols();

  GpModel m;
  m.train = std::move(train);

  // Input normalization to the unit box (degenerate widths fall back to 1).
  m.input_lo = m.train.X.rowwise().minCoeff();
  m.input_width = (m.train.X.rowwise().maxCoeff() - m.input_lo)
                      .cwiseMax(Eigen::VectorXd::Constant(n, 1e-12));
  for (Eigen::Index d = 0; d < n; ++d)
    if (m.train.X.row(d).maxCoeff() == m.train.X.row(d).minCoeff())
      m.input_width(d) = 1.0;
  m.X_int = ((m.train.X.colwise() - m.input_lo).array().colwise() /
             m.input_width.array())
                .matrix();

  // Target standardization (population std; degenerate scales fall back to 1).
  m.y_offset = m.train.y.mean();
  const double var =
      (m.train.y.array() - m.y_offset).square().sum() / static_cast<double>(N);
  m.y_scale = std::sqrt(var);
  if (!(m.y_scale > 1e-12)) m.y_scale = 1.0;
  const Eigen::VectorXd y_int =
      ((m.train.y.array() - m.y_offset) / m.y_scale).matrix();
  const Eigen::VectorXd noise_int =
      m.train.noise_variances / (m.y_scale * m.y_scale);

  LmlObjective objective(m.X_int, y_int, noise_int, options.fit_mean);

  Eigen::VectorXd lo(n + 2), hi(n + 2);
  lo.head(n).setConstant(std::log(options.lengthscale_min));
  hi.head(n).setConstant(std::log(options.lengthscale_max));
  lo(n) = std::log(options.signal_variance_min);
  hi(n) = std::log(options.signal_variance_max);
  lo(n + 1) = options.fit_mean ? -options.mean_bound : 0.0;
  hi(n + 1) = options.fit_mean ? options.mean_bound : 0.0;

  const auto f = [&](const Eigen::VectorXd& t) { return objective.evaluate(t).value; };
  const auto g = [&](const Eigen::VectorXd& t) { return objective.evaluate(t).grad; };

  std::mt19937_64 gen(derive_seed(seed, "gp_fit_restarts"));
  Eigen::VectorXd best_theta;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int rstart = 0; rstart < restarts; ++rstart) {
    Eigen::VectorXd theta(n + 2);
    if (rstart == 0) {
      theta.head(n).setConstant(std::log(0.5));
      theta(n) = 0.0;
      theta(n + 1) = 0.0;
    } else {
      for (Eigen::Index i = 0; i < theta.size(); ++i)
        theta(i) = uniform(gen, lo(i), hi(i));
    }
    theta = theta.cwiseMax(lo).cwiseMin(hi);
    const BoxMaxResult res =
        box_maximize(f, g, theta, lo, hi, options.max_iterations, 1e-9);
    if (std::isfinite(res.value) && res.value > best_value) {
      best_value = res.value;
      best_theta = res.x;
    }
  }
  if (!best_theta.size())
    throw GpFactorizationError("gp_fit: no hyperparameter start succeeded", 0,
                               N > 1 ? 1 : 0);

  m.kernel_int.lengthscales = best_theta.head(n).array().exp().matrix();
  m.kernel_int.signal_variance = std::exp(best_theta(n));
  m.mean_int = best_theta(n + 1);

  m.kernel.lengthscales = m.kernel_int.lengthscales.cwiseProduct(m.input_width);
  m.kernel.signal_variance = m.kernel_int.signal_variance * m.y_scale * m.y_scale;
  m.mean.constant = m.y_offset + m.y_scale * m.mean_int;

  finalize_factorization(m, noise_int, y_int);
  return m;
}

GpPrediction gp_predict(const GpModel& model,
                        const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.dim())
    throw std::invalid_argument("gp_predict: point dimension mismatch");
  const Eigen::VectorXd x_int =
      (x - model.input_lo).cwiseQuotient(model.input_width);
  const Eigen::VectorXd k = kernel_cross(model.X_int, x_int, model.kernel_int);
  const double mean_int = model.mean_int + k.dot(model.alpha);
  const Eigen::VectorXd v = model.chol.triangularView<Eigen::Lower>().solve(k);
  double var_int = model.kernel_int.signal_variance - v.squaredNorm();
  var_int = std::clamp(var_int, 0.0, model.kernel_int.signal_variance);
  return {model.y_offset + model.y_scale * mean_int,
          model.y_scale * model.y_scale * var_int};
}

double log_marginal_likelihood(const GpModel& model) {
  const Eigen::VectorXd y_int =
      ((model.train.y.array() - model.y_offset) / model.y_scale).matrix();
  const Eigen::VectorXd resid = (y_int.array() - model.mean_int).matrix();
  const double logdet = 2.0 * model.chol.diagonal().array().log().sum();
  const double N = static_cast<double>(model.size());
  return -0.5 * resid.dot(model.alpha) - 0.5 * logdet - 0.5 * N * kLog2Pi -
         N * std::log(model.y_scale);
}

}  // namespace cbob
