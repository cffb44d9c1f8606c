#include "cbob/acquisition.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cbob/core_math.hpp"
#include "cbob/sobol.hpp"

namespace cbob {

namespace {

constexpr double kDegenerateStd = 1e-12;
constexpr double kLogClamp = -1e300;

double gamma_for(const AcquisitionSpec& spec, Eigen::Index i) {
  if (spec.gamma.size() == 0) return 1.0;
  return spec.gamma(i);
}

void validate_spec(const SurrogateBundle& b, const AcquisitionSpec& spec) {
  if (!(spec.beta >= 0))
    throw std::invalid_argument("acquisition: beta must be non-negative");
  if (spec.gamma.size() != 0) {
    if (spec.gamma.size() != static_cast<Eigen::Index>(b.constraints.size()))
      throw std::invalid_argument(
          "acquisition: gamma size must match constraint count");
    if ((spec.gamma.array() <= 0).any())
      throw std::invalid_argument("acquisition: gamma must be positive");
  }
}

// Product over constraints of clip01((1 + exploration) * feasibility).
double factor_product(const SurrogateBundle& b, const AcquisitionSpec& spec,
                      ExplorationKind kind,
                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  double prod = 1.0;
  for (std::size_t i = 0; i < b.constraints.size(); ++i) {
    const LatentState s = b.constraints[i].state(x);
    const double rho = exploration_value(
        s, kind, spec.beta, gamma_for(spec, static_cast<Eigen::Index>(i)));
    const double f = (rho + 1.0) * feasibility_factor(s, spec.lambda);
    prod *= std::clamp(f, 0.0, 1.0);
  }
  return prod;
}

double log_factor_product(const SurrogateBundle& b, const AcquisitionSpec& spec,
                          ExplorationKind kind,
                          const Eigen::Ref<const Eigen::VectorXd>& x) {
  double sum = 0.0;
  for (std::size_t i = 0; i < b.constraints.size(); ++i) {
    const LatentState s = b.constraints[i].state(x);
    const double rho = exploration_value(
        s, kind, spec.beta, gamma_for(spec, static_cast<Eigen::Index>(i)));
    const double lf = std::log1p(rho) + log_feasibility_factor(s, spec.lambda);
    sum += std::min(lf, 0.0);
  }
  return sum;
}

}  // namespace

LatentState ConstraintSurrogate::state(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return std::visit(
      [&](const auto& m) -> LatentState {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GpModel>) {
          const GpPrediction p = gp_predict(m, x);
          return {p.mean, std::sqrt(p.variance), false};
        } else if constexpr (std::is_same_v<T, HlgpModel>) {
          const GpPrediction p = hlgp_predict(m, x);
          return {p.mean, std::sqrt(p.variance), false};
        } else {
          const GpPrediction p = gpc_latent(m, x);
          return {p.mean, std::sqrt(p.variance), true};
        }
      },
      model);
}

double expected_improvement(double best, double mean, double std_dev) {
  if (!(std_dev > kDegenerateStd)) return 0.0;
  const double z = (best - mean) / std_dev;
  const double v = std_dev * (z * norm_cdf(z) + norm_pdf(z));
  return std::max(v, 0.0);
}

double log_expected_improvement(double best, double mean, double std_dev) {
  if (!(std_dev > kDegenerateStd))
    return -std::numeric_limits<double>::infinity();
  const double z = (best - mean) / std_dev;
  return std::log(std_dev) + log_ei_term(z);
}

double feasibility_factor(const LatentState& s, double lambda) {
  if (s.classifier)
    return norm_cdf(-s.mean / std::sqrt(1.0 + s.std_dev * s.std_dev));
  if (s.std_dev < kDegenerateStd) return s.mean <= lambda ? 1.0 : 0.0;
  return norm_cdf((lambda - s.mean) / s.std_dev);
}

double log_feasibility_factor(const LatentState& s, double lambda) {
  if (s.classifier)
    return norm_logcdf(-s.mean / std::sqrt(1.0 + s.std_dev * s.std_dev));
  if (s.std_dev < kDegenerateStd)
    return s.mean <= lambda ? 0.0 : -std::numeric_limits<double>::infinity();
  return norm_logcdf((lambda - s.mean) / s.std_dev);
}

double probability_in_band(double mean, double std_dev, double beta) {
  if (std_dev < kDegenerateStd) return 0.0;
  const double gbar = mean / std_dev;
  return std::max(norm_cdf(beta - gbar) - norm_cdf(-beta - gbar), 0.0);
}

double uncertainty_band_mass(double mean, double std_dev, double beta) {
  if (std_dev < kDegenerateStd) return 0.0;
  const double gbar = mean / std_dev;
  const double gp = beta - gbar;
  const double gm = -beta - gbar;
  const double eps = beta * std_dev;
  const double v = eps * (norm_cdf(gp) - norm_cdf(gm)) -
                   std_dev * (2.0 * norm_pdf(-gbar) - norm_pdf(gp) -
                              norm_pdf(gm)) +
                   mean * (2.0 * norm_cdf(-gbar) - norm_cdf(gp) -
                           norm_cdf(gm));
  return std::max(v, 0.0);
}

double exploration_value(const LatentState& s, ExplorationKind kind,
                         double beta, double gamma) {
  switch (kind) {
    case ExplorationKind::None:
      return 0.0;
    case ExplorationKind::Pob:
      return probability_in_band(s.mean, s.std_dev, beta);
    case ExplorationKind::Emub:
      return uncertainty_band_mass(s.mean, s.std_dev, beta) / gamma;
  }
  return 0.0;
}

double pof(const SurrogateBundle& b, const AcquisitionSpec& spec,
           const Eigen::Ref<const Eigen::VectorXd>& x) {
  validate_spec(b, spec);
  return factor_product(b, spec, ExplorationKind::None, x);
}

double dpof(const SurrogateBundle& b, const AcquisitionSpec& spec,
            const Eigen::Ref<const Eigen::VectorXd>& x) {
  validate_spec(b, spec);
  return factor_product(b, spec, spec.exploration, x);
}

double eicb(const SurrogateBundle& b, const AcquisitionSpec& spec,
            const Eigen::Ref<const Eigen::VectorXd>& x) {
  validate_spec(b, spec);
  if (!b.objective || !b.best_feasible)
    throw std::logic_error("eicb: needs an objective model and an incumbent");
  const GpPrediction p = gp_predict(*b.objective, x);
  const double ei =
      expected_improvement(*b.best_feasible, p.mean, std::sqrt(p.variance));
  return ei * factor_product(b, spec, spec.exploration, x);
}

double log_dpof(const SurrogateBundle& b, const AcquisitionSpec& spec,
                const Eigen::Ref<const Eigen::VectorXd>& x) {
  validate_spec(b, spec);
  return std::max(log_factor_product(b, spec, spec.exploration, x), kLogClamp);
}

double log_eicb(const SurrogateBundle& b, const AcquisitionSpec& spec,
                const Eigen::Ref<const Eigen::VectorXd>& x) {
  validate_spec(b, spec);
  if (!b.objective || !b.best_feasible)
    throw std::logic_error(
        "log_eicb: needs an objective model and an incumbent");
  const GpPrediction p = gp_predict(*b.objective, x);
  const double lei =
      log_expected_improvement(*b.best_feasible, p.mean, std::sqrt(p.variance));
  return std::max(lei + log_factor_product(b, spec, spec.exploration, x),
                  kLogClamp);
}

Eigen::VectorXd adapt_gamma(const SurrogateBundle& b,
                            const AcquisitionSpec& spec,
                            const Eigen::Ref<const Eigen::VectorXd>& lower,
                            const Eigen::Ref<const Eigen::VectorXd>& upper,
                            int probe_count, std::uint64_t seed) {
  if (probe_count < 1)
    throw std::invalid_argument("adapt_gamma: probe_count must be positive");
  const Eigen::Index m = static_cast<Eigen::Index>(b.constraints.size());
  Eigen::VectorXd gamma = Eigen::VectorXd::Constant(m, 1e-12);
  SobolSequence sobol(static_cast<int>(lower.size()), seed, true);
  const Eigen::VectorXd span = upper - lower;
  for (int j = 0; j < probe_count; ++j) {
    const Eigen::VectorXd x =
        lower + sobol.next().cwiseProduct(span).matrix();
    for (Eigen::Index i = 0; i < m; ++i) {
      const LatentState s =
          b.constraints[static_cast<std::size_t>(i)].state(x);
      const double v = uncertainty_band_mass(s.mean, s.std_dev, spec.beta) *
                       feasibility_factor(s, spec.lambda);
      gamma(i) = std::max(gamma(i), v);
    }
  }
  return gamma;
}

}  // namespace cbob
