#include "cbob/acq_opt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cbob/optimize.hpp"
#include "cbob/sobol.hpp"

namespace cbob {

namespace {

constexpr double kInsideEps = 1e-12;

void validate_config(const OptimizerConfig& c, Eigen::Index n) {
  if (c.probe_count < 1 || c.multistarts < 1 || c.local_iterations < 0)
    throw std::invalid_argument("acq_opt: bad optimizer configuration");
  if (!(c.fd_step > 0))
    throw std::invalid_argument("acq_opt: fd_step must be positive");
  if (n < 1) throw std::invalid_argument("acq_opt: empty box");
}

}  // namespace

AcqOptResult maximize_acquisition(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::Ref<const Eigen::VectorXd>& lower,
    const Eigen::Ref<const Eigen::VectorXd>& upper,
    const OptimizerConfig& config) {
  const Eigen::Index n = lower.size();
  validate_config(config, n);
  if (upper.size() != n || ((upper - lower).array() < 0).any())
    throw std::invalid_argument("acq_opt: invalid bounds");

  const Eigen::VectorXd span = upper - lower;
  const auto to_x = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return lower + u.cwiseProduct(span);
  };
  const auto g = [&](const Eigen::VectorXd& u) { return f(to_x(u)); };

  SobolSequence sobol(static_cast<int>(n), config.seed, true);
  Eigen::MatrixXd U(n, config.probe_count);
  std::vector<double> vals(static_cast<std::size_t>(config.probe_count));
  std::vector<int> finite;
  finite.reserve(static_cast<std::size_t>(config.probe_count));
  for (int j = 0; j < config.probe_count; ++j) {
    U.col(j) = sobol.next();
    const double v = g(U.col(j));
    vals[static_cast<std::size_t>(j)] = v;
    if (std::isfinite(v)) finite.push_back(j);
  }
  if (finite.empty())
    throw std::runtime_error(
        "acq_opt: acquisition was non-finite at every probe");

  // Best probes first; ties resolve to the earlier probe so runs are
  // reproducible across platforms.
  std::sort(finite.begin(), finite.end(), [&](int a, int b) {
    const double va = vals[static_cast<std::size_t>(a)];
    const double vb = vals[static_cast<std::size_t>(b)];
    if (va != vb) return va > vb;
    return a < b;
  });

  Eigen::VectorXd best_u = U.col(finite.front());
  double best_v = vals[static_cast<std::size_t>(finite.front())];

  const auto fd_grad = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    Eigen::VectorXd grad(n);
    Eigen::VectorXd probe = u;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ui = u(i);
      const double up = std::min(ui + config.fd_step, 1.0);
      const double um = std::max(ui - config.fd_step, 0.0);
      const double spread = up - um;
      if (!(spread > 0)) {
        grad(i) = 0.0;
        continue;
      }
      probe(i) = up;
      const double fp = g(probe);
      probe(i) = um;
      const double fm = g(probe);
      probe(i) = ui;
      grad(i) = (fp - fm) / spread;
    }
    return grad;
  };

  const Eigen::VectorXd lo_u = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd hi_u = Eigen::VectorXd::Ones(n);
  const int starts =
      std::min<int>(config.multistarts, static_cast<int>(finite.size()));
  for (int s = 0; s < starts; ++s) {
    const BoxMaxResult local =
        box_maximize(g, fd_grad, U.col(finite[static_cast<std::size_t>(s)]),
                     lo_u, hi_u, config.local_iterations);
    // Keep candidates strictly interior so downstream models never see a
    // point pinned to the box boundary by floating-point rounding.
    Eigen::VectorXd u = local.x.cwiseMax(kInsideEps).cwiseMin(1.0 - kInsideEps);
    const double v = g(u);
    if (std::isfinite(v) && v > best_v) {
      best_v = v;
      best_u = u;
    }
  }

  return {to_x(best_u), best_v};
}

}  // namespace cbob
