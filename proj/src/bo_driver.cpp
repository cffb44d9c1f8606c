#include "cbob/bo_driver.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cbob/rng.hpp"

namespace cbob {

namespace {

struct FitSet {
  SurrogateBundle bundle;
  std::vector<bool> hlgp_converged;  // EP convergence flags, one per HLGP
};

std::optional<double> incumbent(const std::vector<EvaluationRecord>& records) {
  std::optional<double> best;
  for (const EvaluationRecord& r : records) {
    if (!r.feasible || !r.objective) continue;
    if (!best || *r.objective < *best) best = *r.objective;
  }
  return best;
}

Eigen::MatrixXd record_matrix(const std::vector<EvaluationRecord>& records) {
  const Eigen::Index n = records.front().x.size();
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(records.size()));
  for (std::size_t r = 0; r < records.size(); ++r)
    X.col(static_cast<Eigen::Index>(r)) = records[r].x;
  return X;
}

// Fit the objective model and one surrogate per constraint. When `escalated`
// is set the observation noise floors are raised, the retry path after a
// factorization failure on exactly duplicated or near-duplicate points.
FitSet fit_surrogates(const Problem& problem, const RunConfig& config,
                      const std::vector<EvaluationRecord>& records, int k,
                      bool escalated) {
  FitSet out;
  const Eigen::Index N = static_cast<Eigen::Index>(records.size());

  EpConfig ep = config.ep;
  if (escalated) ep.sigma = std::max(ep.sigma, 1e-3);

  // Objective model over the records whose objective is visible.
  std::vector<Eigen::Index> with_obj;
  for (Eigen::Index r = 0; r < N; ++r)
    if (records[static_cast<std::size_t>(r)].objective) with_obj.push_back(r);
  if (!with_obj.empty()) {
    GpTrainingSet train;
    train.X.resize(problem.dim(), static_cast<Eigen::Index>(with_obj.size()));
    train.y.resize(static_cast<Eigen::Index>(with_obj.size()));
    for (std::size_t j = 0; j < with_obj.size(); ++j) {
      const EvaluationRecord& r =
          records[static_cast<std::size_t>(with_obj[j])];
      train.X.col(static_cast<Eigen::Index>(j)) = r.x;
      train.y(static_cast<Eigen::Index>(j)) = *r.objective;
    }
    train.noise_variances = Eigen::VectorXd::Constant(
        train.y.size(), escalated ? 1e-6 : 0.0);
    out.bundle.objective = gp_fit(train, config.gp_restarts,
                                  derive_seed(config.seed, "fit:obj", k));
  }

  const Eigen::MatrixXd X = record_matrix(records);
  for (Eigen::Index i = 0; i < problem.constraint_count(); ++i) {
    const std::uint64_t fit_seed =
        derive_seed(config.seed, "fit:con:" + std::to_string(i), k);
    switch (config.constraint_model) {
      case ConstraintModel::Hlgp: {
        std::vector<ConstraintObservation> obs;
        obs.reserve(static_cast<std::size_t>(N));
        for (const EvaluationRecord& r : records)
          obs.push_back(r.constraints[static_cast<std::size_t>(i)]);
        HlgpModel m =
            fit_hlgp_auto(X, obs, ep, config.gp_restarts, fit_seed);
        out.hlgp_converged.push_back(m.converged);
        out.bundle.constraints.push_back({std::move(m)});
        break;
      }
      case ConstraintModel::Gpc: {
        std::vector<int> labels;
        labels.reserve(static_cast<std::size_t>(N));
        for (const EvaluationRecord& r : records) {
          const ConstraintObservation& o =
              r.constraints[static_cast<std::size_t>(i)];
          labels.push_back(
              o.kind == ObsKind::ViolatedFlag || o.value > 0.0 ? 1 : -1);
        }
        GpcModel m =
            fit_gpc_auto(X, labels, ep, config.gp_restarts, fit_seed);
        out.bundle.constraints.push_back({std::move(m)});
        break;
      }
      case ConstraintModel::Gpr: {
        GpTrainingSet train;
        train.X = X;
        train.y.resize(N);
        for (Eigen::Index r = 0; r < N; ++r) {
          const ConstraintObservation& o =
              records[static_cast<std::size_t>(r)]
                  .constraints[static_cast<std::size_t>(i)];
          if (o.kind != ObsKind::Value)
            throw std::logic_error(
                "gpr constraint model met a flag observation");
          train.y(r) = o.value;
        }
        train.noise_variances =
            Eigen::VectorXd::Constant(N, ep.sigma * ep.sigma);
        out.bundle.constraints.push_back(
            {gp_fit(train, config.gp_restarts, fit_seed)});
        break;
      }
    }
  }
  out.bundle.best_feasible = incumbent(records);
  return out;
}

}  // namespace

void validate_run_config(const Problem& problem, const RunConfig& config) {
  if (config.budget < 0)
    throw std::invalid_argument("run: budget must be non-negative");
  if (config.init_count == 0 || config.init_count < -1)
    throw std::invalid_argument("run: init_count must be positive (or -1)");
  if (config.gp_restarts < 1)
    throw std::invalid_argument("run: gp_restarts must be positive");
  if (config.adapt_probe_count < 1)
    throw std::invalid_argument("run: adapt_probe_count must be positive");
  if (config.constraint_model == ConstraintModel::Gpr &&
      problem.scenario == Scenario::S2)
    throw std::invalid_argument(
        "run: the gpr constraint model needs constraint values at every "
        "evaluated point; scenario s2 hides them (use hlgp or gpc)");
  if (config.gamma_policy == GammaPolicy::Fixed &&
      config.acquisition.gamma.size() != 0 &&
      config.acquisition.gamma.size() != problem.constraint_count())
    throw std::invalid_argument("run: fixed gamma size mismatch");
}

std::string RunConfig::label() const {
  return to_string(algorithm) + "_" + to_string(constraint_model);
}

Algorithm algorithm_from_string(const std::string& s) {
  std::string t;
  for (char c : s) t.push_back(static_cast<char>(std::tolower(c)));
  if (t == "cbob") return Algorithm::Cbob;
  if (t == "eic") return Algorithm::Eic;
  throw std::invalid_argument("unknown algorithm '" + s +
                              "' (expected cbob or eic)");
}

ConstraintModel constraint_model_from_string(const std::string& s) {
  std::string t;
  for (char c : s) t.push_back(static_cast<char>(std::tolower(c)));
  if (t == "hlgp") return ConstraintModel::Hlgp;
  if (t == "gpc") return ConstraintModel::Gpc;
  if (t == "gpr") return ConstraintModel::Gpr;
  throw std::invalid_argument("unknown constraint model '" + s +
                              "' (expected hlgp, gpc, or gpr)");
}

std::string to_string(Algorithm a) {
  return a == Algorithm::Cbob ? "cbob" : "eic";
}

std::string to_string(ConstraintModel m) {
  switch (m) {
    case ConstraintModel::Hlgp: return "hlgp";
    case ConstraintModel::Gpc: return "gpc";
    case ConstraintModel::Gpr: return "gpr";
  }
  return "hlgp";
}

Trajectory run(const Problem& problem, const RunConfig& config,
               bool record_wall_times) {
  problem.validate();
  validate_run_config(problem, config);

  AcquisitionSpec spec = config.acquisition;
  if (config.algorithm == Algorithm::Eic)
    spec.exploration = ExplorationKind::None;

  Trajectory traj;
  std::vector<EvaluationRecord> records;
  std::optional<double> best;

  const int init_count = config.init_count > 0 ? config.init_count
                                               : default_init_count(problem);
  const Eigen::MatrixXd design =
      initial_design(problem, config.init_design, init_count, config.seed);
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    EvaluationRecord rec = problem.evaluate(design.col(j));
    if (rec.feasible && rec.objective && (!best || *rec.objective < *best))
      best = *rec.objective;
    IterationRow row;
    row.k = 0;
    row.x = rec.x;
    row.feasible = rec.feasible;
    row.objective = rec.objective;
    row.best_feasible = best;
    traj.rows.push_back(std::move(row));
    records.push_back(std::move(rec));
  }

  for (int k = 1; k <= config.budget; ++k) {
    const auto started = std::chrono::steady_clock::now();

    FitSet fits;
    try {
      fits = fit_surrogates(problem, config, records, k, false);
    } catch (const std::exception&) {
      try {
        fits = fit_surrogates(problem, config, records, k, true);
      } catch (const std::exception& retry) {
        traj.status = RunStatus::Aborted;
        traj.error = "surrogate fit failed at iteration " +
                     std::to_string(k) + ": " + retry.what();
        return traj;
      }
    }
    const SurrogateBundle& bundle = fits.bundle;

    if (spec.exploration == ExplorationKind::Emub) {
      if (config.gamma_policy == GammaPolicy::Adapt)
        spec.gamma = adapt_gamma(bundle, spec, problem.lower, problem.upper,
                                 config.adapt_probe_count,
                                 derive_seed(config.seed, "gamma", k));
      else if (config.acquisition.gamma.size() == 0)
        spec.gamma =
            Eigen::VectorXd::Ones(problem.constraint_count());
    }

    const bool have_ei = bundle.objective && bundle.best_feasible;
    const auto objective_fn = [&](const Eigen::VectorXd& x) {
      return have_ei ? log_eicb(bundle, spec, x) : log_dpof(bundle, spec, x);
    };
    OptimizerConfig opt = config.optimizer;
    opt.seed = derive_seed(config.seed, "acq", k);

    AcqOptResult chosen;
    try {
      chosen = maximize_acquisition(objective_fn, problem.lower,
                                    problem.upper, opt);
    } catch (const std::exception& e) {
      traj.status = RunStatus::Aborted;
      traj.error = "acquisition maximization failed at iteration " +
                   std::to_string(k) + ": " + e.what();
      return traj;
    }

    const double acq_exact = have_ei ? eicb(bundle, spec, chosen.x)
                                     : dpof(bundle, spec, chosen.x);

    EvaluationRecord rec = problem.evaluate(chosen.x);
    if (rec.feasible && rec.objective && (!best || *rec.objective < *best))
      best = *rec.objective;

    IterationRow row;
    row.k = k;
    row.x = rec.x;
    row.feasible = rec.feasible;
    row.objective = rec.objective;
    row.best_feasible = best;
    row.acq_value = acq_exact;
    if (record_wall_times) {
      const auto elapsed = std::chrono::steady_clock::now() - started;
      row.wall_ms =
          std::chrono::duration<double, std::milli>(elapsed).count();
    }
    traj.rows.push_back(std::move(row));
    records.push_back(std::move(rec));
  }
  return traj;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - std::floor(h);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

MetricsSummary metrics(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty())
    throw std::invalid_argument("metrics: no trajectories");

  int max_k = 0;
  for (const IterationRow& row : trajectories.front().rows)
    max_k = std::max(max_k, row.k);
  for (const Trajectory& t : trajectories) {
    int mk = 0;
    for (const IterationRow& row : t.rows) mk = std::max(mk, row.k);
    if (mk != max_k || t.rows.size() != trajectories.front().rows.size())
      throw std::invalid_argument("metrics: trajectories differ in shape");
  }

  MetricsSummary out;
  out.runs = static_cast<int>(trajectories.size());

  std::vector<double> terminal;
  std::vector<double> rofs;
  for (const Trajectory& t : trajectories) {
    const IterationRow& last = t.rows.back();
    if (last.best_feasible) terminal.push_back(*last.best_feasible);
    int acquired = 0, feasible = 0;
    for (const IterationRow& row : t.rows) {
      if (row.k == 0) continue;
      ++acquired;
      feasible += row.feasible ? 1 : 0;
    }
    if (acquired > 0)
      rofs.push_back(static_cast<double>(feasible) /
                     static_cast<double>(acquired));
  }
  out.terminal_defined = static_cast<int>(terminal.size());
  out.median_bov = quantile(terminal, 0.5);
  if (!rofs.empty()) {
    double s = 0.0;
    for (double r : rofs) s += r;
    out.mean_rof = s / static_cast<double>(rofs.size());
  }

  // Bands: entry 0 is the post-init incumbent, then one entry per iteration.
  for (int k = 0; k <= max_k; ++k) {
    std::vector<double> at_k;
    for (const Trajectory& t : trajectories) {
      std::optional<double> value;
      for (const IterationRow& row : t.rows)
        if (row.k <= k && row.best_feasible) value = row.best_feasible;
      if (value) at_k.push_back(*value);
    }
    out.ks.push_back(k);
    out.q25.push_back(quantile(at_k, 0.25));
    out.q50.push_back(quantile(at_k, 0.5));
    out.q75.push_back(quantile(at_k, 0.75));
  }
  return out;
}

}  // namespace cbob
