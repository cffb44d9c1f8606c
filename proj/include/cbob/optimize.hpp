#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>

namespace cbob {

struct BoxMaxResult {
  Eigen::VectorXd x;
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
};

/// Deterministic box-constrained ascent: projected gradient steps with a
// Barzilai-Borwein step length and an Armijo backtracking safeguard.
// `grad` may be analytic or finite-difference; non-finite trial values are
// treated as line-search rejections.
inline BoxMaxResult box_maximize(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    Eigen::VectorXd x0, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
    int max_iters, double step_tol = 1e-10) {
  const auto project = [&](Eigen::VectorXd v) {
    return v.cwiseMax(lo).cwiseMin(hi);
  };

  Eigen::VectorXd x = project(std::move(x0));
  double fx = f(x);
  BoxMaxResult best{x, fx, 0};
  if (!std::isfinite(fx)) return best;

  Eigen::VectorXd g = grad(x);
  if (!g.allFinite()) return best;

  const double span = (hi - lo).cwiseAbs().maxCoeff();
  double step = 0.1 * span / std::max(1e-12, g.cwiseAbs().maxCoeff());
  const double step_min = 1e-15 * std::max(span, 1.0);
  const double step_max = 1e6 * std::max(span, 1.0);
  step = std::clamp(step, step_min, step_max);

  int it = 0;
  for (; it < max_iters; ++it) {
    Eigen::VectorXd cand = project(x + step * g);
    Eigen::VectorXd d = cand - x;
    if (d.cwiseAbs().maxCoeff() < step_tol) break;

    double fc = f(cand);
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      if (std::isfinite(fc) && fc >= fx + 1e-4 * g.dot(d)) {
        accepted = true;
        break;
      }
      step *= 0.5;
      cand = project(x + step * g);
      d = cand - x;
      if (d.cwiseAbs().maxCoeff() < step_tol) break;
      fc = f(cand);
    }
    if (!accepted) break;

    Eigen::VectorXd gc = grad(cand);
    if (!gc.allFinite()) {
      x = cand;
      fx = fc;
      break;
    }
    // BB1 step from the secant pair; expand when curvature is not concave.
    const Eigen::VectorXd y = gc - g;
    const double sy = d.dot(y);
    step = (sy < 0) ? std::clamp(-d.squaredNorm() / sy, step_min, step_max)
                    : std::min(step * 2.0, step_max);
    x = std::move(cand);
    fx = fc;
    g = std::move(gc);
    if (fx > best.value) {
      best.x = x;
      best.value = fx;
    }
  }
  if (fx > best.value) {
    best.x = x;
    best.value = fx;
  }
  best.iterations = it;
  return best;
}

}  // namespace cbob
