#pragma once

// Property batteries over seeded random instances. Each function returns a
// list of failure descriptions (empty means the property held), so the same
// checks back both the unit suites and the acceptance gate.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cbob/acq_opt.hpp"
#include "cbob/acquisition.hpp"
#include "cbob/bo_driver.hpp"
#include "cbob/core_math.hpp"
#include "cbob/ep_inference.hpp"
#include "cbob/experiment.hpp"
#include "cbob/gp_regression.hpp"
#include "cbob/problems.hpp"
#include "cbob/rng.hpp"
#include "cbob/sobol.hpp"

#include "oracles.hpp"

namespace props {

using Failures = std::vector<std::string>;

inline std::string join(const Failures& f) {
  std::string s;
  for (const std::string& x : f) {
    if (!s.empty()) s += "; ";
    s += x;
  }
  return s;
}

namespace detail {

inline void fail(Failures& f, const std::string& what) {
  if (f.size() < 20) f.push_back(what);
}

inline Eigen::MatrixXd random_points(std::mt19937_64& rng, Eigen::Index dim,
                                     Eigen::Index n, double lo, double hi) {
  Eigen::MatrixXd X(dim, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < dim; ++i)
      X(i, j) = cbob::uniform(rng, lo, hi);
  return X;
}

inline cbob::KernelParams random_kernel(std::mt19937_64& rng,
                                        Eigen::Index dim) {
  cbob::KernelParams k;
  k.signal_variance = std::exp(cbob::uniform(rng, -1.5, 1.5));
  k.lengthscales.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    k.lengthscales(i) = std::exp(cbob::uniform(rng, -1.2, 1.0));
  return k;
}

// Deterministic smooth latent used to synthesize constraint observations.
inline double latent_fn(double x) {
  return std::sin(0.9 * x) + 0.4 * std::cos(2.3 * x) - 0.2;
}

struct TestBundle {
  cbob::SurrogateBundle bundle;
  Eigen::VectorXd lower, upper;
};

// Objective GP plus three heterogeneous constraint surrogates over [0, 10].
inline TestBundle make_bundle(std::uint64_t seed) {
  std::mt19937_64 rng(cbob::splitmix64(seed));
  const Eigen::Index n = 8;
  Eigen::MatrixXd X = random_points(rng, 1, n, 0.0, 10.0);

  cbob::GpTrainingSet obj;
  obj.X = X;
  obj.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    obj.y(i) = std::cos(X(0, i)) + 0.1 * X(0, i);
  obj.noise_variances = Eigen::VectorXd::Constant(n, 1e-8);

  cbob::KernelParams k;
  k.signal_variance = 1.0;
  k.lengthscales = Eigen::VectorXd::Constant(1, 1.5);
  const cbob::MeanParams m{0.3};

  TestBundle out;
  out.lower = Eigen::VectorXd::Constant(1, 0.0);
  out.upper = Eigen::VectorXd::Constant(1, 10.0);
  out.bundle.objective = cbob::gp_build(obj, k, m);
  out.bundle.best_feasible = obj.y.minCoeff() + 0.2;

  std::vector<cbob::ConstraintObservation> obs;
  std::vector<int> labels;
  cbob::GpTrainingSet con;
  con.X = X;
  con.y.resize(n);
  con.noise_variances = Eigen::VectorXd::Constant(n, 1e-6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g = latent_fn(X(0, i));
    con.y(i) = g;
    labels.push_back(g > 0 ? 1 : -1);
    obs.push_back(g > 0 ? cbob::ConstraintObservation::violated_flag()
                        : cbob::ConstraintObservation::make_value(g));
  }
  cbob::EpConfig ep;
  out.bundle.constraints.push_back(
      {cbob::ep_fit_hlgp(X, obs, k, cbob::MeanParams{0.0}, ep)});
  out.bundle.constraints.push_back({cbob::ep_fit_gpc(X, labels, k, ep)});
  out.bundle.constraints.push_back({cbob::gp_build(con, k, cbob::MeanParams{0.0})});
  return out;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const std::filesystem::path p =
      std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline bool same_double(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return a == b;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// core_math: kernel PSD, kernel gradients vs finite differences, pdf = cdf'.
// ---------------------------------------------------------------------------

inline Failures core_math_properties() {
  Failures f;

  for (int trial = 0; trial < 10; ++trial) {
    std::mt19937_64 rng(cbob::derive_seed(42, "psd", trial));
    const Eigen::Index dim = 1 + trial % 5;
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 19);
    const Eigen::MatrixXd X = detail::random_points(rng, dim, n, -2.0, 2.0);
    const cbob::KernelParams k = detail::random_kernel(rng, dim);
    Eigen::MatrixXd K = cbob::kernel_matrix(X, k);
    K.diagonal().array() += 1e-9 * k.signal_variance;
    if (Eigen::LLT<Eigen::MatrixXd>(K).info() != Eigen::Success)
      detail::fail(f, "kernel matrix not positive definite, trial " +
                          std::to_string(trial));
  }

  // Closed-form kernel partials against central differences of the library
  // kernel (step 1e-6, relative error <= 1e-4).
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(cbob::derive_seed(42, "kgrad", trial));
    const Eigen::Index dim = 1 + trial % 4;
    const Eigen::VectorXd a = detail::random_points(rng, dim, 1, -2.0, 2.0);
    const Eigen::VectorXd b = detail::random_points(rng, dim, 1, -2.0, 2.0);
    cbob::KernelParams k = detail::random_kernel(rng, dim);

    const double h = 1e-6;
    const auto relerr = [](double x, double y) {
      return std::abs(x - y) / std::max({1e-12, std::abs(x), std::abs(y)});
    };

    const double base = cbob::matern52(a, b, k);
    {
      cbob::KernelParams kp = k, km = k;
      kp.signal_variance += h;
      km.signal_variance -= h;
      const double fd =
          (cbob::matern52(a, b, kp) - cbob::matern52(a, b, km)) / (2 * h);
      const double analytic = base / k.signal_variance;
      if (relerr(fd, analytic) > 1e-4)
        detail::fail(f, "signal-variance gradient mismatch, trial " +
                            std::to_string(trial));
    }
    double r2 = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double t = (a(d) - b(d)) / k.lengthscales(d);
      r2 += t * t;
    }
    const double r = std::sqrt(r2);
    for (Eigen::Index d = 0; d < dim; ++d) {
      cbob::KernelParams kp = k, km = k;
      kp.lengthscales(d) += h;
      km.lengthscales(d) -= h;
      const double fd =
          (cbob::matern52(a, b, kp) - cbob::matern52(a, b, km)) / (2 * h);
      const double diff = a(d) - b(d);
      const double analytic = k.signal_variance *
                              std::exp(-std::sqrt(5.0) * r) * (5.0 / 3.0) *
                              (1.0 + std::sqrt(5.0) * r) * diff * diff /
                              std::pow(k.lengthscales(d), 3);
      const double scale = std::max({1e-9, std::abs(fd), std::abs(analytic)});
      if (std::abs(fd - analytic) / scale > 1e-4)
        detail::fail(f, "lengthscale gradient mismatch, trial " +
                            std::to_string(trial));
    }
  }

  for (double z = -6.0; z <= 6.0 + 1e-9; z += 0.1) {
    const double h = 1e-4;
    const double fd = (cbob::norm_cdf(z + h) - cbob::norm_cdf(z - h)) / (2 * h);
    if (std::abs(fd - cbob::norm_pdf(z)) > 1e-6)
      detail::fail(f, "cdf derivative differs from pdf at z=" +
                          std::to_string(z));
  }
  return f;
}

// ---------------------------------------------------------------------------
// gp_regression: variance bounds, variance monotonicity, interpolation.
// ---------------------------------------------------------------------------

inline Failures gp_regression_properties() {
  Failures f;
  for (int trial = 0; trial < 8; ++trial) {
    std::mt19937_64 rng(cbob::derive_seed(7, "gpvar", trial));
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(rng() % 6);
    Eigen::MatrixXd X = detail::random_points(rng, 1, n + 1, 0.0, 10.0);
    const cbob::KernelParams k = detail::random_kernel(rng, 1);
    const cbob::MeanParams m{cbob::uniform(rng, -1.0, 1.0)};

    cbob::GpTrainingSet base;
    base.X = X.leftCols(n);
    base.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      base.y(i) = detail::latent_fn(X(0, i));
    base.noise_variances = Eigen::VectorXd::Zero(n);

    cbob::GpTrainingSet grown;
    grown.X = X;
    grown.y.resize(n + 1);
    for (Eigen::Index i = 0; i <= n; ++i)
      grown.y(i) = detail::latent_fn(X(0, i));
    grown.noise_variances = Eigen::VectorXd::Zero(n + 1);

    const cbob::GpModel small = cbob::gp_build(base, k, m);
    const cbob::GpModel large = cbob::gp_build(grown, k, m);

    const double slack = 1e-9 * k.signal_variance + 1e-12;
    for (int p = 0; p < 50; ++p) {
      Eigen::VectorXd x(1);
      x << cbob::uniform(rng, 0.0, 10.0);
      const cbob::GpPrediction ps = cbob::gp_predict(small, x);
      const cbob::GpPrediction pl = cbob::gp_predict(large, x);
      if (ps.variance > k.signal_variance + 1e-9)
        detail::fail(f, "posterior variance above prior, trial " +
                            std::to_string(trial));
      if (pl.variance > ps.variance + slack)
        detail::fail(f, "extra observation increased variance, trial " +
                            std::to_string(trial));
    }

    for (Eigen::Index i = 0; i < n; ++i) {
      const cbob::GpPrediction p = cbob::gp_predict(small, base.X.col(i));
      if (std::abs(p.mean - base.y(i)) >
          1e-5 * std::max(1.0, base.y.cwiseAbs().maxCoeff()))
        detail::fail(f, "zero-noise model does not interpolate, trial " +
                            std::to_string(trial));
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// ep_inference: fixed point, Gaussian reduction, moment-match oracle,
// sweep-order invariance, flags shrink variance.
// ---------------------------------------------------------------------------

inline std::vector<cbob::ConstraintObservation> synth_observations(
    const Eigen::MatrixXd& X) {
  std::vector<cbob::ConstraintObservation> obs;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const double g = detail::latent_fn(X(0, i));
    obs.push_back(g > 0 ? cbob::ConstraintObservation::violated_flag()
                        : cbob::ConstraintObservation::make_value(g));
  }
  return obs;
}

inline Failures ep_fixed_point_property() {
  Failures f;
  for (int trial = 0; trial < 5; ++trial) {
    std::mt19937_64 rng(cbob::derive_seed(11, "epfix", trial));
    const Eigen::Index n = 6 + static_cast<Eigen::Index>(rng() % 5);
    const Eigen::MatrixXd X = detail::random_points(rng, 1, n, 0.0, 10.0);
    const auto obs = synth_observations(X);
    cbob::KernelParams k;
    k.signal_variance = 1.0;
    k.lengthscales = Eigen::VectorXd::Constant(1, 1.5);

    cbob::EpConfig cfg;
    const cbob::HlgpModel a = cbob::ep_fit_hlgp(X, obs, k, {}, cfg);
    if (!a.converged) continue;

    cbob::EpConfig extra = cfg;
    extra.tolerance = 1e-300;  // never declares convergence
    extra.max_sweeps = a.sweeps + 1;
    const cbob::HlgpModel b = cbob::ep_fit_hlgp(X, obs, k, {}, extra);

    for (std::size_t i = 0; i < a.sites.size(); ++i) {
      const double dm = std::abs(a.sites[i].mean - b.sites[i].mean);
      const double dv = std::abs(a.sites[i].variance - b.sites[i].variance);
      if (dm > cfg.tolerance || dv > cfg.tolerance)
        detail::fail(f, "post-convergence sweep moved a site, trial " +
                            std::to_string(trial));
    }
  }
  return f;
}

inline Failures ep_gaussian_reduction_property() {
  Failures f;
  for (int trial = 0; trial < 5; ++trial) {
    std::mt19937_64 rng(cbob::derive_seed(11, "epred", trial));
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng() % 5);
    const Eigen::MatrixXd X = detail::random_points(rng, 1, n, 0.0, 10.0);
    std::vector<cbob::ConstraintObservation> obs;
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      y(i) = detail::latent_fn(X(0, i));
      obs.push_back(cbob::ConstraintObservation::make_value(y(i)));
    }
    const std::uint64_t seed = cbob::derive_seed(11, "epred-seed", trial);
    cbob::EpConfig ep;
    const cbob::HlgpModel hl = cbob::fit_hlgp_auto(X, obs, ep, 3, seed);

    cbob::GpTrainingSet train;
    train.X = X;
    train.y = y;
    train.noise_variances = Eigen::VectorXd::Constant(n, ep.sigma * ep.sigma);
    const cbob::GpModel gp =
        cbob::gp_fit(train, 3, cbob::derive_seed(seed, "hlgp_init"));

    for (int p = 0; p < 30; ++p) {
      Eigen::VectorXd x(1);
      x << cbob::uniform(rng, 0.0, 10.0);
      const cbob::GpPrediction a = cbob::hlgp_predict(hl, x);
      const cbob::GpPrediction b = cbob::gp_predict(gp, x);
      if (std::abs(a.mean - b.mean) > 1e-8 ||
          std::abs(a.variance - b.variance) > 1e-8)
        detail::fail(f, "flag-free model differs from plain regression, "
                        "trial " + std::to_string(trial));
    }
  }
  return f;
}

inline Failures ep_moment_match_property() {
  Failures f;
  std::mt19937_64 rng(cbob::derive_seed(11, "epmm"));
  const double alphas[] = {1e-6, 0.1, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    const double cm = cbob::uniform(rng, -5.0, 5.0);
    const double cv = cbob::uniform(rng, 0.1, 4.0);
    const double alpha = alphas[trial % 3];
    const cbob::MomentMatchResult got =
        cbob::moment_match_probit(cm, cv, alpha);
    const test_oracle::ProbitMoments want =
        test_oracle::probit_moments_quadrature(cm, cv, alpha);
    const auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)});
    };
    if (rel(got.zhat, want.zhat) > 1e-6 || rel(got.mean, want.mean) > 1e-6 ||
        rel(got.variance, want.variance) > 1e-6)
      detail::fail(f, "tilted moments differ from quadrature at cm=" +
                          std::to_string(cm) + " cv=" + std::to_string(cv) +
                          " alpha=" + std::to_string(alpha));
  }
  return f;
}

inline Failures ep_order_invariance_property() {
  Failures f;
  for (int trial = 0; trial < 4; ++trial) {
    std::mt19937_64 rng(cbob::derive_seed(11, "eporder", trial));
    const Eigen::Index n = 6 + static_cast<Eigen::Index>(rng() % 3);
    const Eigen::MatrixXd X = detail::random_points(rng, 1, n, 0.0, 10.0);
    const auto obs = synth_observations(X);
    cbob::KernelParams k;
    k.signal_variance = 1.0;
    k.lengthscales = Eigen::VectorXd::Constant(1, 1.5);

    // Same factor set in two different sequential update orders.
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      perm[static_cast<std::size_t>(i)] = n - 1 - i;
    Eigen::MatrixXd Xr(1, n);
    std::vector<cbob::ConstraintObservation> obs_r;
    for (Eigen::Index i = 0; i < n; ++i) {
      Xr.col(i) = X.col(perm[static_cast<std::size_t>(i)]);
      obs_r.push_back(obs[static_cast<std::size_t>(
          perm[static_cast<std::size_t>(i)])]);
    }

    cbob::EpConfig cfg;
    const cbob::HlgpModel a = cbob::ep_fit_hlgp(X, obs, k, {}, cfg);
    const cbob::HlgpModel b = cbob::ep_fit_hlgp(Xr, obs_r, k, {}, cfg);
    if (!a.converged || !b.converged) continue;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& sa = a.sites[static_cast<std::size_t>(
          perm[static_cast<std::size_t>(i)])];
      const auto& sb = b.sites[static_cast<std::size_t>(i)];
      if (std::abs(sa.mean - sb.mean) > 10 * cfg.tolerance ||
          std::abs(sa.variance - sb.variance) > 10 * cfg.tolerance)
        detail::fail(f, "update order changed the fixed point, trial " +
                            std::to_string(trial));
    }
  }
  return f;
}

inline Failures ep_flag_shrinks_variance_property() {
  Failures f;
  for (int trial = 0; trial < 5; ++trial) {
    std::mt19937_64 rng(cbob::derive_seed(11, "epflag", trial));
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng() % 4);
    Eigen::MatrixXd X = detail::random_points(rng, 1, n + 1, 0.0, 10.0);
    cbob::KernelParams k;
    k.signal_variance = 1.0;
    k.lengthscales = Eigen::VectorXd::Constant(1, 1.5);

    auto obs = synth_observations(X.leftCols(n));
    cbob::EpConfig cfg;
    const cbob::HlgpModel base =
        cbob::ep_fit_hlgp(X.leftCols(n), obs, k, {}, cfg);

    auto obs2 = obs;
    obs2.push_back(cbob::ConstraintObservation::violated_flag());
    const cbob::HlgpModel grown = cbob::ep_fit_hlgp(X, obs2, k, {}, cfg);

    // The flag is informative: variance drops at the flagged point and on
    // net across probes. Refitting redistributes the remaining sites a
    // little, so individual probes get a bounded relative allowance.
    const double at_new0 = cbob::hlgp_predict(base, X.col(n)).variance;
    const double at_new1 = cbob::hlgp_predict(grown, X.col(n)).variance;
    if (!(at_new1 < at_new0))
      detail::fail(f, "flag did not shrink variance at its location, trial " +
                          std::to_string(trial));
    double sum0 = 0.0, sum1 = 0.0;
    for (int p = 0; p < 30; ++p) {
      Eigen::VectorXd x(1);
      x << cbob::uniform(rng, 0.0, 10.0);
      const double v0 = cbob::hlgp_predict(base, x).variance;
      const double v1 = cbob::hlgp_predict(grown, x).variance;
      sum0 += v0;
      sum1 += v1;
      if (v1 > v0 * 1.15 + 1e-9)
        detail::fail(f, "flag observation increased variance, trial " +
                            std::to_string(trial));
    }
    if (sum1 > sum0 + 1e-9)
      detail::fail(f, "flag increased mean probe variance, trial " +
                          std::to_string(trial));
  }
  return f;
}

inline Failures ep_properties() {
  Failures f;
  for (auto fn : {ep_fixed_point_property, ep_gaussian_reduction_property,
                  ep_moment_match_property, ep_order_invariance_property,
                  ep_flag_shrinks_variance_property}) {
    const Failures part = fn();
    f.insert(f.end(), part.begin(), part.end());
  }
  return f;
}

// ---------------------------------------------------------------------------
// acquisition: monotone weighting, bounds, degenerate-std limits, argmax
// invariance under joint scaling, band-mass quadrature.
// ---------------------------------------------------------------------------

inline Failures acquisition_properties() {
  Failures f;

  for (int trial = 0; trial < 4; ++trial) {
    const detail::TestBundle tb = detail::make_bundle(1000 + trial);
    std::mt19937_64 rng(cbob::derive_seed(13, "acq", trial));

    cbob::AcquisitionSpec pob;
    pob.exploration = cbob::ExplorationKind::Pob;
    pob.beta = 1.96;
    cbob::AcquisitionSpec none = pob;
    none.exploration = cbob::ExplorationKind::None;
    cbob::AcquisitionSpec emub = pob;
    emub.exploration = cbob::ExplorationKind::Emub;
    emub.gamma = cbob::adapt_gamma(tb.bundle, emub, tb.lower, tb.upper, 512,
                                   cbob::derive_seed(13, "gamma", trial));

    for (int p = 0; p < 40; ++p) {
      Eigen::VectorXd x(1);
      x << cbob::uniform(rng, 0.0, 10.0);

      const double pof_v = cbob::pof(tb.bundle, none, x);
      for (const cbob::AcquisitionSpec* spec : {&pob, &emub}) {
        const double dpof_v = cbob::dpof(tb.bundle, *spec, x);
        if (dpof_v < pof_v - 1e-12)
          detail::fail(f, "decorated feasibility fell below plain feasibility");
        const double eic_v = cbob::eicb(tb.bundle, none, x);
        const double eicb_v = cbob::eicb(tb.bundle, *spec, x);
        if (eicb_v < eic_v - 1e-12)
          detail::fail(f, "banded improvement fell below plain improvement");
      }

      // Per-factor bound under the band-probability decoration.
      double bound = 1.0;
      const cbob::GpPrediction po =
          cbob::gp_predict(*tb.bundle.objective, x);
      for (const auto& c : tb.bundle.constraints) {
        const cbob::LatentState s = c.state(x);
        const double base = cbob::feasibility_factor(s, pob.lambda);
        const double rho =
            cbob::probability_in_band(s.mean, s.std_dev, pob.beta);
        if (rho < -1e-15 || rho > 1.0 + 1e-12)
          detail::fail(f, "band probability not a probability");
        bound *= std::min(1.0, 2.0 * base);
      }
      if (cbob::dpof(tb.bundle, pob, x) > bound + 1e-9)
        detail::fail(f, "decorated factor exceeded twice-feasibility bound");

      const double ei = cbob::expected_improvement(
          *tb.bundle.best_feasible, po.mean, std::sqrt(po.variance));
      if (cbob::eicb(tb.bundle, pob, x) > ei + 1e-9)
        detail::fail(f, "banded improvement exceeded raw improvement");
    }
  }

  // Degenerate latent: exploration must vanish and stay bounded.
  for (double sd : {0.0, 1e-15, 1e-13}) {
    cbob::LatentState s{0.4, sd, false};
    if (cbob::exploration_value(s, cbob::ExplorationKind::Pob, 1.96, 1.0) != 0.0 ||
        cbob::exploration_value(s, cbob::ExplorationKind::Emub, 1.96, 1.0) != 0.0)
      detail::fail(f, "exploration did not vanish at zero spread");
  }
  {
    std::mt19937_64 rng(cbob::derive_seed(13, "val-bound"));
    for (int i = 0; i < 200; ++i) {
      cbob::LatentState s{cbob::uniform(rng, -4, 4),
                          cbob::uniform(rng, 1e-6, 4.0), false};
      const double v =
          cbob::exploration_value(s, cbob::ExplorationKind::Pob, 1.96, 1.0);
      if (v < 0.0 || v > 1.0)
        detail::fail(f, "band probability left [0,1]");
      const double e =
          cbob::exploration_value(s, cbob::ExplorationKind::Emub, 1.96, 0.7);
      if (!(e >= 0.0) || !std::isfinite(e))
        detail::fail(f, "band mass not finite and non-negative");
    }
  }

  // Joint scaling of the improvement inputs by c > 0 scales EI linearly and
  // keeps the banded-improvement argmax on a fixed candidate set.
  {
    const detail::TestBundle tb = detail::make_bundle(77);
    cbob::AcquisitionSpec spec;
    spec.exploration = cbob::ExplorationKind::Pob;
    for (double c : {0.25, 3.0, 40.0}) {
      cbob::SurrogateBundle scaled = tb.bundle;
      cbob::GpTrainingSet t = tb.bundle.objective->train;
      t.y *= c;
      t.noise_variances *= c * c;
      cbob::KernelParams k = tb.bundle.objective->kernel;
      k.signal_variance *= c * c;
      cbob::MeanParams m = tb.bundle.objective->mean;
      m.constant *= c;
      scaled.objective = cbob::gp_build(t, k, m);
      scaled.best_feasible = *tb.bundle.best_feasible * c;

      int arg_a = -1, arg_b = -1;
      double best_a = -1.0, best_b = -1.0;
      for (int j = 0; j <= 100; ++j) {
        Eigen::VectorXd x(1);
        x << 0.1 * j;
        const double va = cbob::eicb(tb.bundle, spec, x);
        const double vb = cbob::eicb(scaled, spec, x);
        if (va > best_a) { best_a = va; arg_a = j; }
        if (vb > best_b) { best_b = vb; arg_b = j; }
        const double scale = std::max(1e-12, c * va);
        if (va > 1e-12 && std::abs(vb - c * va) / scale > 1e-6)
          detail::fail(f, "scaling broke the linear-improvement identity");
      }
      if (arg_a != arg_b)
        detail::fail(f, "scaling moved the candidate-set argmax");
    }
  }

  // Closed-form band mass against quadrature over random triples. The
  // standardized center stays within beta + 4 of the band so the mass is
  // large enough for the quadrature itself to carry relative accuracy.
  {
    std::mt19937_64 rng(cbob::derive_seed(13, "emubq"));
    for (int i = 0; i < 100; ++i) {
      const double sd = cbob::uniform(rng, 0.05, 3.0);
      const double beta = cbob::uniform(rng, 0.1, 3.0);
      const double mu = sd * cbob::uniform(rng, -(beta + 4.0), beta + 4.0);
      const double got = cbob::uncertainty_band_mass(mu, sd, beta);
      const double want = test_oracle::emub_quadrature(mu, sd, beta);
      if (std::abs(got - want) / want > 1e-6) {
        detail::fail(f, "band mass differs from quadrature at mu=" +
                            std::to_string(mu) + " sd=" +
                            std::to_string(sd) + " beta=" +
                            std::to_string(beta));
      }
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// acq_opt: never below the probe grid, bitwise determinism, box feasibility.
// ---------------------------------------------------------------------------

inline Failures acq_opt_properties() {
  Failures f;
  const auto acq = [](const Eigen::VectorXd& x) {
    return std::sin(3.0 * x(0)) * std::cos(2.0 * x(1)) +
           0.5 * std::exp(-(x - Eigen::VectorXd::Constant(2, 0.6)).squaredNorm());
  };
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(2, -1.0);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(2, 2.0);

  for (int trial = 0; trial < 5; ++trial) {
    cbob::OptimizerConfig cfg;
    cfg.probe_count = 256;
    cfg.multistarts = 4;
    cfg.local_iterations = 60;
    cfg.seed = cbob::derive_seed(17, "opt", trial);

    long outside = 0;
    const auto guarded = [&](const Eigen::VectorXd& x) {
      if (((x - lo).array() < -1e-12).any() ||
          ((hi - x).array() < -1e-12).any())
        ++outside;
      return acq(x);
    };

    const cbob::AcqOptResult a =
        cbob::maximize_acquisition(guarded, lo, hi, cfg);
    const cbob::AcqOptResult b =
        cbob::maximize_acquisition(guarded, lo, hi, cfg);

    if (outside > 0)
      detail::fail(f, "optimizer evaluated outside the box");
    if (a.value != b.value || (a.x.array() != b.x.array()).any())
      detail::fail(f, "optimizer not bitwise deterministic");
    if (((a.x - lo).array() < 0).any() || ((hi - a.x).array() < 0).any())
      detail::fail(f, "optimizer result escaped the box");

    cbob::SobolSequence sob(2, cfg.seed, true);
    double probe_best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cfg.probe_count; ++j) {
      const Eigen::VectorXd u = sob.next();
      const Eigen::VectorXd x = lo + u.cwiseProduct(hi - lo);
      const double v = acq(x);
      if (std::isfinite(v)) probe_best = std::max(probe_best, v);
    }
    if (a.value < probe_best)
      detail::fail(f, "optimizer returned below the best probe");
  }
  return f;
}

// ---------------------------------------------------------------------------
// problems: masking soundness, purity, known feasible points.
// ---------------------------------------------------------------------------

inline Failures problems_properties() {
  Failures f;
  std::vector<cbob::Problem> probs;
  for (const std::string& name : cbob::builtin_problem_names())
    probs.push_back(cbob::make_builtin_problem(name));
  {
    Eigen::VectorXd lo(2), hi(2);
    lo << 0, 0;
    hi << 1, 1;
    probs.push_back(cbob::make_expression_problem(
        "custom-mask", lo, hi, cbob::Scenario::S2, {},
        "x_1 + x_2", {"x_1 - 0.5", "0.3 - x_2"}));
  }

  for (const cbob::Problem& p : probs) {
    std::mt19937_64 rng(cbob::derive_seed(19, "mask:" + p.name));
    for (int t = 0; t < 50; ++t) {
      Eigen::VectorXd x(p.dim());
      for (Eigen::Index d = 0; d < p.dim(); ++d)
        x(d) = cbob::uniform(rng, p.lower(d), p.upper(d));

      const cbob::EvaluationRecord rec = p.evaluate(x);
      const Eigen::VectorXd canon = p.canonical(x);
      const Eigen::VectorXd g = p.constraint_values(canon);
      const bool feas = (g.array() <= 0.0).all();

      if ((rec.x.array() != canon.array()).any())
        detail::fail(f, p.name + ": record point is not the canonical point");
      if (rec.feasible != feas)
        detail::fail(f, p.name + ": feasibility flag wrong");
      const bool hide_objective =
          p.scenario != cbob::Scenario::Full && !feas;
      if (rec.objective.has_value() == hide_objective)
        detail::fail(f, p.name + ": objective visibility wrong");
      if (rec.objective &&
          *rec.objective != p.objective_value(canon))
        detail::fail(f, p.name + ": objective value wrong");
      for (Eigen::Index i = 0; i < p.constraint_count(); ++i) {
        const auto& o = rec.constraints[static_cast<std::size_t>(i)];
        const bool violated = g(i) > 0.0;
        const bool expect_flag =
            p.scenario == cbob::Scenario::S2 && violated;
        if ((o.kind == cbob::ObsKind::ViolatedFlag) != expect_flag)
          detail::fail(f, p.name + ": constraint observation kind wrong");
        if (o.kind == cbob::ObsKind::Value && o.value != g(i))
          detail::fail(f, p.name + ": constraint value wrong");
      }

      const cbob::EvaluationRecord again = p.evaluate(x);
      const bool same =
          (again.x.array() == rec.x.array()).all() &&
          again.feasible == rec.feasible &&
          again.objective == rec.objective &&
          again.constraints.size() == rec.constraints.size();
      if (!same)
        detail::fail(f, p.name + ": evaluate is not pure");
    }
  }

  // Every registry entry has a nonempty feasible set; spot-check one point.
  const std::vector<std::pair<std::string, std::vector<double>>> feasible = {
      {"kbf", {1, 1, 1, 1, 1, 1, 1, 1, 1, 1}},
      {"ackley", {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}},
      {"ackley5", {0, 0, 0, 0, 0}},
      {"wbd", {0.2444, 6.2187, 8.2915, 0.2444}},
      {"pvd", {1, 1, 50, 150}},
      {"illustrative1d", {4.5}},
      {"illustrative1d-po", {4.5}},
      {"hlgp-demo-2d", {0.2, 0.8}},
  };
  for (const auto& [name, pt] : feasible) {
    const cbob::Problem p = cbob::make_builtin_problem(name);
    Eigen::VectorXd x(p.dim());
    for (Eigen::Index i = 0; i < p.dim(); ++i)
      x(i) = pt[static_cast<std::size_t>(i)];
    if (!p.feasible(x))
      detail::fail(f, name + ": registry feasible point is infeasible");
  }
  return f;
}

// ---------------------------------------------------------------------------
// bo_driver: monotone incumbent, budget exactness, masking integrity.
// ---------------------------------------------------------------------------

inline Failures bo_driver_properties() {
  Failures f;

  Eigen::VectorXd lo(1), hi(1);
  lo << 0;
  hi << 10;
  const cbob::Problem s1 = cbob::make_expression_problem(
      "s1-toy", lo, hi, cbob::Scenario::S1, {},
      "cos(5*x_1) - sin(x_1)*sin(2*x_1)",
      {"cos(5*x_1) - sin(x_1)*sin(2*x_1)"});
  const cbob::Problem s2 = cbob::make_builtin_problem("illustrative1d-po");

  struct Case {
    const cbob::Problem* problem;
    cbob::Algorithm algo;
    cbob::ConstraintModel model;
  };
  const std::vector<Case> cases = {
      {&s1, cbob::Algorithm::Cbob, cbob::ConstraintModel::Hlgp},
      {&s1, cbob::Algorithm::Eic, cbob::ConstraintModel::Gpr},
      {&s2, cbob::Algorithm::Cbob, cbob::ConstraintModel::Hlgp},
      {&s2, cbob::Algorithm::Eic, cbob::ConstraintModel::Gpc},
  };

  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const Case& c = cases[ci];
    cbob::RunConfig cfg;
    cfg.algorithm = c.algo;
    cfg.constraint_model = c.model;
    cfg.budget = 4;
    cfg.init_count = 6;
    cfg.seed = 3 + ci;
    cfg.gp_restarts = 2;
    cfg.adapt_probe_count = 128;
    cfg.optimizer.probe_count = 128;
    cfg.optimizer.multistarts = 2;
    cfg.optimizer.local_iterations = 30;

    const cbob::Trajectory t = cbob::run(*c.problem, cfg);
    if (t.status != cbob::RunStatus::Completed) {
      detail::fail(f, "short run aborted: " + t.error);
      continue;
    }
    if (t.rows.size() != static_cast<std::size_t>(cfg.init_count + cfg.budget))
      detail::fail(f, "row count differs from init + budget");
    int acquired = 0;
    std::optional<double> best;
    int prev_k = 0;
    for (const cbob::IterationRow& row : t.rows) {
      if (row.k > 0) ++acquired;
      if (row.k < prev_k)
        detail::fail(f, "iteration index decreased");
      prev_k = row.k;
      if (row.best_feasible) {
        if (best && *row.best_feasible > *best + 1e-15)
          detail::fail(f, "incumbent increased");
        best = row.best_feasible;
      } else if (best) {
        detail::fail(f, "incumbent vanished");
      }
      if (!row.feasible && row.objective)
        detail::fail(f, "hidden objective leaked into the trajectory");
      if ((row.x.array() < c.problem->lower.array() - 1e-12).any() ||
          (row.x.array() > c.problem->upper.array() + 1e-12).any())
        detail::fail(f, "evaluated point escaped the box");
    }
    if (acquired != cfg.budget)
      detail::fail(f, "acquired row count differs from budget");
    if (t.rows.back().k != cfg.budget)
      detail::fail(f, "final iteration index differs from budget");
  }
  return f;
}

// ---------------------------------------------------------------------------
// cli: exact summarize round-trip, strict trajectory schema.
// ---------------------------------------------------------------------------

inline Failures cli_properties() {
  Failures f;
  namespace fs = std::filesystem;

  cbob::ExperimentConfig cfg;
  cfg.problem = cbob::make_builtin_problem("illustrative1d");
  cfg.problem_identity = "builtin:illustrative1d";
  cbob::RunConfig rc;
  rc.budget = 3;
  rc.init_count = 6;
  rc.gp_restarts = 2;
  rc.adapt_probe_count = 128;
  rc.optimizer.probe_count = 128;
  rc.optimizer.multistarts = 2;
  rc.optimizer.local_iterations = 30;
  cfg.algorithms = {rc};
  cfg.seeds = {0, 1};
  cbob::refresh_config_hash(cfg);

  const fs::path dir = detail::fresh_dir("cbob_prop_cli");
  cbob::RunOverrides ov;
  ov.out_dir = dir.string();
  ov.force = true;
  std::ostringstream out, err;
  const int rc_run = cbob::cmd_run(cfg, ov, out, err);
  if (rc_run != 0) {
    detail::fail(f, "round-trip run failed: " + err.str());
    return f;
  }

  std::vector<cbob::Trajectory> mem, loaded;
  for (std::uint64_t seed : cfg.seeds) {
    cbob::RunConfig r = rc;
    r.seed = seed;
    mem.push_back(cbob::run(cfg.problem, r));
    loaded.push_back(
        cbob::read_trajectory_csv(
            (dir / cbob::trajectory_file_name(rc.label(), seed)).string())
            .trajectory);
  }
  const cbob::MetricsSummary a = cbob::metrics(mem);
  const cbob::MetricsSummary b = cbob::metrics(loaded);
  if (!detail::same_double(a.median_bov, b.median_bov) ||
      !detail::same_double(a.mean_rof, b.mean_rof) ||
      a.ks != b.ks)
    detail::fail(f, "summary metrics changed across serialization");
  for (std::size_t i = 0; i < a.ks.size(); ++i)
    if (!detail::same_double(a.q25[i], b.q25[i]) ||
        !detail::same_double(a.q50[i], b.q50[i]) ||
        !detail::same_double(a.q75[i], b.q75[i]))
      detail::fail(f, "band quantiles changed across serialization");

  // Schema violations must be rejected.
  const fs::path good =
      dir / cbob::trajectory_file_name(rc.label(), cfg.seeds[0]);
  std::ifstream in(good);
  std::string header;
  std::getline(in, header);
  std::string rest((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const auto expect_reject = [&](const std::string& mutated_header,
                                 const std::string& label) {
    const fs::path bad = dir / ("bad_" + label + ".csv");
    std::ofstream o(bad);
    o << mutated_header << "\n" << rest;
    o.close();
    try {
      (void)cbob::read_trajectory_csv(bad.string());
      detail::fail(f, "reader accepted a " + label + " header");
    } catch (const std::exception&) {
    }
  };
  expect_reject(header + ",extra_column", "widened");
  {
    std::string renamed = header;
    const std::size_t pos = renamed.find("acq_value");
    renamed.replace(pos, 9, "acq_score");
    expect_reject(renamed, "renamed");
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return f;
}

}  // namespace props
