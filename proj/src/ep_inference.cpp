#include "cbob/ep_inference.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cbob/rng.hpp"

namespace cbob {

namespace {

constexpr double kSiteMeanCap = 1e6;

void validate_ep_config(const EpConfig& c) {
  if (!(c.sigma > 0) || !(c.alpha > 0))
    throw std::invalid_argument("ep: sigma and alpha must be positive");
  if (!(c.tolerance > 0) || c.max_sweeps < 1)
    throw std::invalid_argument("ep: bad convergence settings");
  if (!(c.damping > 0) || c.damping > 1)
    throw std::invalid_argument("ep: damping must be in (0, 1]");
  if (!(c.min_site_variance > 0) ||
      !(c.max_site_variance > c.min_site_variance))
    throw std::invalid_argument("ep: bad site variance limits");
}

// One probit likelihood factor Phi(sign * (u + shift) / alpha) on the
// zero-mean latent u that EP sweeps over. Exact Gaussian factors never
// enter the sweeps: they are folded into the prior by direct conditioning
// (see ep_fit_hlgp). Mixing near-exact precisions 1/sigma^2 into the site
// updates would drown the fixed point in roundoff.
struct ProbitSite {
  double sign = 1.0;
  double shift = 0.0;
  double alpha = 1.0;
};

struct EpState {
  Eigen::VectorXd tau, nu;  // natural site parameters on t
  Eigen::MatrixXd Sigma;
  Eigen::VectorXd mu;
  bool converged = false;
  int sweeps = 0;
};

void recompute_posterior(const Eigen::MatrixXd& K, EpState& s) {
  const Eigen::Index N = K.rows();
  const Eigen::VectorXd sr = s.tau.cwiseSqrt();
  Eigen::MatrixXd B = sr.asDiagonal() * K * sr.asDiagonal();
  B.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(B);  // B >= I, always well posed
  const Eigen::MatrixXd V =
      llt.matrixL().solve(sr.asDiagonal() * K);
  s.Sigma = K - V.transpose() * V;
  s.mu = s.Sigma * s.nu;
}

// Moments of the tilted distribution for a probit factor, on u.
bool tilted_moments(const ProbitSite& site, double cavity_mean, double cavity_var,
                    double& mean, double& var) {
  const MomentMatchResult mm = moment_match_probit(
      site.sign * (cavity_mean + site.shift), cavity_var, site.alpha);
  mean = site.sign * mm.mean - site.shift;
  var = mm.variance;
  return std::isfinite(mean) && std::isfinite(var) && var > 0;
}

EpState run_ep(const Eigen::MatrixXd& K, const std::vector<ProbitSite>& sites,
               const EpConfig& cfg) {
  const Eigen::Index N = K.rows();
  EpState s;
  s.tau = Eigen::VectorXd::Zero(N);
  s.nu = Eigen::VectorXd::Zero(N);
  s.Sigma = K;
  s.mu = Eigen::VectorXd::Zero(N);

  const double tau_floor = 1.0 / cfg.max_site_variance;
  const double tau_cap = 1.0 / cfg.min_site_variance;

  const auto site_summary = [&](Eigen::Index i) {
    const double tau = std::max(s.tau(i), tau_floor);
    return std::pair<double, double>{
        std::clamp(s.nu(i) / tau, -kSiteMeanCap, kSiteMeanCap), 1.0 / tau};
  };

  for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto before = site_summary(i);

      const double sigma2 = s.Sigma(i, i);
      if (!(sigma2 > 0)) continue;
      const double tau_cav = 1.0 / sigma2 - s.tau(i);
      if (!(tau_cav > 1e-12)) continue;  // cavity invalid, skip this sweep
      const double nu_cav = s.mu(i) / sigma2 - s.nu(i);
      const double cav_var = 1.0 / tau_cav;
      const double cav_mean = nu_cav * cav_var;

      double mean_t, var;
      if (!tilted_moments(sites[i], cav_mean, cav_var, mean_t, var)) continue;

      const double tau_raw = 1.0 / var - tau_cav;
      const double nu_raw = mean_t / var - nu_cav;
      double tau_new = cfg.damping * tau_raw + (1.0 - cfg.damping) * s.tau(i);
      double nu_new = cfg.damping * nu_raw + (1.0 - cfg.damping) * s.nu(i);
      if (!(tau_new > 0)) continue;  // would leave the positive cone, skip
      if (tau_new < tau_floor) {     // cap precision, preserve site mean
        nu_new *= tau_floor / tau_new;
        tau_new = tau_floor;
      } else if (tau_new > tau_cap) {
        nu_new *= tau_cap / tau_new;
        tau_new = tau_cap;
      }

      const double delta_tau = tau_new - s.tau(i);
      const double denom = 1.0 + delta_tau * sigma2;
      if (!(denom > 1e-12)) continue;

      const Eigen::VectorXd col = s.Sigma.col(i);
      s.Sigma.noalias() -= (delta_tau / denom) * (col * col.transpose());
      s.tau(i) = tau_new;
      s.nu(i) = nu_new;
      s.mu.noalias() = s.Sigma * s.nu;

      const auto after = site_summary(i);
      max_change = std::max(max_change, std::abs(after.first - before.first));
      max_change =
          std::max(max_change, std::abs(after.second - before.second));
    }
    recompute_posterior(K, s);
    s.sweeps = sweep + 1;
    if (max_change < cfg.tolerance) {
      s.converged = true;
      break;
    }
  }
  return s;
}

// Final cavity of site i from the converged posterior; used for the site
// normalizers. Returns false when the cavity is numerically invalid.
bool final_cavity(const EpState& s, Eigen::Index i, double& mean_t,
                  double& var) {
  const double sigma2 = s.Sigma(i, i);
  if (!(sigma2 > 0)) return false;
  const double tau_cav = 1.0 / sigma2 - s.tau(i);
  if (!(tau_cav > 1e-12)) return false;
  var = 1.0 / tau_cav;
  mean_t = (s.mu(i) / sigma2 - s.nu(i)) * var;
  return true;
}

double site_log_normalizer(const ProbitSite& site, const EpState& s,
                           Eigen::Index i, double site_mean_t,
                           double site_var) {
  double cav_mean, cav_var;
  if (!final_cavity(s, i, cav_mean, cav_var)) return 0.0;
  const double log_zhat =
      norm_logcdf(site.sign * (cav_mean + site.shift) /
                  std::sqrt(site.alpha * site.alpha + cav_var));
  const double tot = cav_var + site_var;
  const double diff = cav_mean - site_mean_t;
  return log_zhat + 0.5 * std::log(2.0 * M_PI * tot) + diff * diff / (2.0 * tot);
}

double rel_change(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double hyperparam_change(const KernelParams& a, const MeanParams& ma,
                         const KernelParams& b, const MeanParams& mb) {
  double c = rel_change(a.signal_variance, b.signal_variance);
  c = std::max(c, rel_change(ma.constant, mb.constant));
  for (Eigen::Index i = 0; i < a.lengthscales.size(); ++i)
    c = std::max(c, rel_change(a.lengthscales(i), b.lengthscales(i)));
  return c;
}

}  // namespace

MomentMatchResult moment_match_probit(double cavity_mean,
                                      double cavity_variance, double alpha) {
  if (!(cavity_variance > 0))
    throw std::invalid_argument("moment_match_probit: cavity variance <= 0");
  if (!(alpha > 0))
    throw std::invalid_argument("moment_match_probit: alpha must be positive");
  const double s2 = alpha * alpha + cavity_variance;
  const double sq = std::sqrt(s2);
  const double z = cavity_mean / sq;
  const ProbitTail tail = probit_tail(z);
  const double mean = cavity_mean + cavity_variance * tail.ratio / sq;
  double var = cavity_variance -
               cavity_variance * cavity_variance * tail.ratio *
                   tail.z_plus_ratio / s2;
  var = std::clamp(var, cavity_variance * 1e-15, cavity_variance);
  return {norm_cdf(z), mean, var};
}

HlgpModel ep_fit_hlgp(const Eigen::MatrixXd& X,
                      const std::vector<ConstraintObservation>& observations,
                      const KernelParams& kernel, const MeanParams& mean,
                      const EpConfig& config) {
  validate_ep_config(config);
  const Eigen::Index N = X.cols();
  if (static_cast<Eigen::Index>(observations.size()) != N || N < 1)
    throw std::invalid_argument("ep_fit_hlgp: observation count mismatch");
  validate_kernel_params(kernel, X.rows());

  Eigen::MatrixXd K = kernel_matrix(X, kernel);
  K.diagonal().array() += 1e-9 * kernel.signal_variance;

  std::vector<Eigen::Index> val_idx, flag_idx;
  for (Eigen::Index i = 0; i < N; ++i) {
    if (observations[i].kind == ObsKind::Value)
      val_idx.push_back(i);
    else
      flag_idx.push_back(i);
  }
  const double noise = config.sigma * config.sigma;

  HlgpModel model;
  model.observations = observations;
  model.config = config;
  model.converged = true;
  model.sweeps = 1;
  model.sites.resize(N);
  for (Eigen::Index i : val_idx) {
    SiteParams& sp = model.sites[i];
    sp.mean = observations[i].value;
    sp.variance = noise;
    sp.log_normalizer = 0.0;
  }

  const Eigen::Index nf = static_cast<Eigen::Index>(flag_idx.size());
  if (nf > 0) {
    const Eigen::Index nv = static_cast<Eigen::Index>(val_idx.size());
    // Prior restricted to the flagged points, conditioned exactly on the
    // value observations. EP then only sweeps probit sites on a system
    // whose precisions stay moderate.
    Eigen::MatrixXd C(nf, nf);
    for (Eigen::Index a = 0; a < nf; ++a)
      for (Eigen::Index b = 0; b < nf; ++b)
        C(a, b) = K(flag_idx[a], flag_idx[b]);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(nf);
    if (nv > 0) {
      Eigen::MatrixXd A(nv, nv);
      Eigen::VectorXd yv(nv);
      Eigen::MatrixXd Kfv(nf, nv);
      for (Eigen::Index a = 0; a < nv; ++a) {
        for (Eigen::Index b = 0; b < nv; ++b)
          A(a, b) = K(val_idx[a], val_idx[b]);
        yv(a) = observations[val_idx[a]].value - mean.constant;
        for (Eigen::Index b = 0; b < nf; ++b)
          Kfv(b, a) = K(flag_idx[b], val_idx[a]);
      }
      A.diagonal().array() += noise;
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      for (double jitter = 1e-9 * kernel.signal_variance;
           llt.info() != Eigen::Success; jitter *= 10.0) {
        if (jitter > kernel.signal_variance)
          throw std::runtime_error(
              "ep_fit_hlgp: value block is not positive definite");
        Eigen::MatrixXd Aj = A;
        Aj.diagonal().array() += jitter;
        llt.compute(Aj);
      }
      m.noalias() = Kfv * llt.solve(yv);
      C.noalias() -= Kfv * llt.solve(Kfv.transpose());
      const Eigen::MatrixXd Ct = C.transpose();
      C = 0.5 * (C + Ct);
    }

    // Violation flag: Phi(g / alpha) with g = u + m + mean.
    std::vector<ProbitSite> sites(nf);
    for (Eigen::Index a = 0; a < nf; ++a)
      sites[a] = {1.0, mean.constant + m(a), config.alpha};

    EpState state = run_ep(C, sites, config);
    model.converged = state.converged;
    model.sweeps = state.sweeps;

    const double tau_floor = 1.0 / config.max_site_variance;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const double tau = std::max(state.tau(a), tau_floor);
      const double mean_u =
          std::clamp(state.nu(a) / tau, -kSiteMeanCap, kSiteMeanCap);
      SiteParams& sp = model.sites[flag_idx[a]];
      sp.variance = 1.0 / tau;
      sp.mean = mean_u + m(a) + mean.constant;
      sp.log_normalizer =
          site_log_normalizer(sites[a], state, a, mean_u, sp.variance);
    }
  }

  GpTrainingSet virt;
  virt.X = X;
  virt.y.resize(N);
  virt.noise_variances.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    virt.y(i) = model.sites[i].mean;
    virt.noise_variances(i) = model.sites[i].variance;
  }
  model.gp = gp_build(std::move(virt), kernel, mean);
  return model;
}

GpPrediction hlgp_predict(const HlgpModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x) {
  return gp_predict(model.gp, x);
}

GpTrainingSet to_virtual_observations(const HlgpModel& model) {
  return model.gp.train;
}

HlgpModel fit_hlgp_auto(const Eigen::MatrixXd& X,
                        const std::vector<ConstraintObservation>& observations,
                        const EpConfig& config, int restarts,
                        std::uint64_t seed, int max_alternations) {
  validate_ep_config(config);
  const Eigen::Index N = X.cols();
  if (static_cast<Eigen::Index>(observations.size()) != N || N < 1)
    throw std::invalid_argument("fit_hlgp_auto: observation count mismatch");

  bool any_flag = false;
  GpTrainingSet init;
  init.X = X;
  init.y.resize(N);
  init.noise_variances.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const ConstraintObservation& o = observations[i];
    if (o.kind == ObsKind::Value) {
      init.y(i) = o.value;
      init.noise_variances(i) = config.sigma * config.sigma;
    } else {
      init.y(i) = o.value;  // +1 flag encoding as provisional target
      init.noise_variances(i) = 1.0;
      any_flag = true;
    }
  }

  GpModel fit = gp_fit(init, restarts, derive_seed(seed, "hlgp_init"));
  HlgpModel model = ep_fit_hlgp(X, observations, fit.kernel, fit.mean, config);
  if (!any_flag) return model;

  for (int alt = 1; alt <= max_alternations; ++alt) {
    const GpModel refit = gp_fit(to_virtual_observations(model), restarts,
                                 derive_seed(seed, "hlgp_alt", alt));
    const double change =
        hyperparam_change(refit.kernel, refit.mean, fit.kernel, fit.mean);
    fit = refit;
    model = ep_fit_hlgp(X, observations, fit.kernel, fit.mean, config);
    if (change < 1e-3) break;
  }
  return model;
}

GpcModel ep_fit_gpc(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                    const KernelParams& kernel, const EpConfig& config) {
  validate_ep_config(config);
  const Eigen::Index N = X.cols();
  if (static_cast<Eigen::Index>(labels.size()) != N || N < 1)
    throw std::invalid_argument("ep_fit_gpc: label count mismatch");
  for (int l : labels)
    if (l != -1 && l != 1)
      throw std::invalid_argument("ep_fit_gpc: labels must be -1 or +1");
  validate_kernel_params(kernel, X.rows());

  Eigen::MatrixXd K = kernel_matrix(X, kernel);
  K.diagonal().array() += 1e-9 * kernel.signal_variance;

  std::vector<ProbitSite> sites(N);
  for (Eigen::Index i = 0; i < N; ++i)
    sites[i] = {static_cast<double>(labels[i]), 0.0, 1.0};

  EpState state = run_ep(K, sites, config);

  GpcModel model;
  model.labels = labels;
  model.config = config;
  model.converged = state.converged;
  model.sweeps = state.sweeps;
  model.sites.resize(N);

  const double tau_floor = 1.0 / config.max_site_variance;
  GpTrainingSet virt;
  virt.X = X;
  virt.y.resize(N);
  virt.noise_variances.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double tau = std::max(state.tau(i), tau_floor);
    SiteParams& sp = model.sites[i];
    sp.variance = 1.0 / tau;
    sp.mean = std::clamp(state.nu(i) / tau, -kSiteMeanCap, kSiteMeanCap);
    sp.log_normalizer =
        site_log_normalizer(sites[i], state, i, sp.mean, sp.variance);
    virt.y(i) = sp.mean;
    virt.noise_variances(i) = sp.variance;
  }
  model.gp = gp_build(std::move(virt), kernel, MeanParams{0.0});
  return model;
}

GpPrediction gpc_latent(const GpcModel& model,
                        const Eigen::Ref<const Eigen::VectorXd>& x) {
  return gp_predict(model.gp, x);
}

double gpc_class_probability(const GpcModel& model,
                             const Eigen::Ref<const Eigen::VectorXd>& x) {
  const GpPrediction p = gpc_latent(model, x);
  return norm_cdf(p.mean / std::sqrt(1.0 + p.variance));
}

GpcModel fit_gpc_auto(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                      const EpConfig& config, int restarts, std::uint64_t seed,
                      int max_alternations) {
  const Eigen::Index N = X.cols();
  if (static_cast<Eigen::Index>(labels.size()) != N || N < 1)
    throw std::invalid_argument("fit_gpc_auto: label count mismatch");

  GpTrainingSet init;
  init.X = X;
  init.y.resize(N);
  init.noise_variances = Eigen::VectorXd::Ones(N);
  for (Eigen::Index i = 0; i < N; ++i) init.y(i) = labels[i];

  GpFitOptions opts;
  opts.fit_mean = false;
  GpModel fit = gp_fit(init, restarts, derive_seed(seed, "gpc_init"), opts);
  GpcModel model = ep_fit_gpc(X, labels, fit.kernel, config);

  for (int alt = 1; alt <= max_alternations; ++alt) {
    const GpModel refit = gp_fit(model.gp.train, restarts,
                                 derive_seed(seed, "gpc_alt", alt), opts);
    const double change = hyperparam_change(refit.kernel, MeanParams{0.0},
                                            fit.kernel, MeanParams{0.0});
    fit = refit;
    model = ep_fit_gpc(X, labels, fit.kernel, config);
    if (change < 1e-3) break;
  }
  return model;
}

}  // namespace cbob
