#include <doctest.h>

#include <cmath>

#include "cbob/bo_driver.hpp"
#include "common/properties.hpp"

namespace {

cbob::RunConfig small_config() {
  cbob::RunConfig c;
  c.budget = 3;
  c.init_count = 6;
  c.gp_restarts = 2;
  c.adapt_probe_count = 128;
  c.optimizer.probe_count = 128;
  c.optimizer.multistarts = 2;
  c.optimizer.local_iterations = 30;
  return c;
}

cbob::Trajectory synthetic(std::initializer_list<double> best,
                           std::initializer_list<int> feas) {
  cbob::Trajectory t;
  int k = 0;
  auto fit = feas.begin();
  for (double b : best) {
    cbob::IterationRow r;
    r.k = k++;
    r.x = Eigen::VectorXd::Zero(1);
    r.feasible = *fit++ != 0;
    if (std::isfinite(b)) r.best_feasible = b;
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace

TEST_SUITE("bo_driver") {

TEST_CASE("type-7 quantiles interpolate linearly") {
  CHECK(cbob::quantile({1.0, 2.0, 5.0}, 0.5) == 2.0);
  CHECK(cbob::quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
  CHECK(cbob::quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25) == 2.0);
  CHECK(cbob::quantile({5.0, 1.0, 3.0}, 0.0) == 1.0);  // sorts internally
  CHECK(cbob::quantile({5.0, 1.0, 3.0}, 1.0) == 5.0);
  CHECK(cbob::quantile({7.5}, 0.75) == 7.5);
  CHECK(std::isnan(cbob::quantile({}, 0.5)));
}

TEST_CASE("metrics aggregate terminal values, feasibility rate, and bands") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // Three runs, one init row plus two acquisitions each.
  const std::vector<cbob::Trajectory> runs = {
      synthetic({nan, 4.0, 2.0}, {0, 1, 1}),
      synthetic({nan, nan, 6.0}, {0, 0, 1}),
      synthetic({1.0, 1.0, 1.0}, {1, 0, 0}),
  };
  const cbob::MetricsSummary m = cbob::metrics(runs);
  CHECK(m.runs == 3);
  CHECK(m.terminal_defined == 3);
  CHECK(m.median_bov == 2.0);  // median of {2, 6, 1}
  // Acquired feasibility fractions: 2/2, 1/2, 0/2 -> mean 0.5.
  CHECK(m.mean_rof == doctest::Approx(0.5).epsilon(1e-15));

  REQUIRE(m.ks == std::vector<int>{0, 1, 2});
  // k = 0: only run 3 has an incumbent.
  CHECK(std::isnan(m.q50[0]) == false);
  CHECK(m.q50[0] == 1.0);
  // k = 1: incumbents {4, 1}; k = 2: incumbents {2, 6, 1}.
  CHECK(m.q50[1] == 2.5);
  CHECK(m.q50[2] == 2.0);
  CHECK(m.q25[2] == 1.5);
  CHECK(m.q75[2] == 4.0);

  // Shape mismatch: different budgets cannot be aggregated.
  const std::vector<cbob::Trajectory> bad = {
      synthetic({nan, 1.0}, {0, 1}),
      synthetic({nan, 1.0, 1.0}, {0, 1, 1}),
  };
  CHECK_THROWS_AS((void)cbob::metrics(bad), std::invalid_argument);
  CHECK_THROWS_AS((void)cbob::metrics({}), std::invalid_argument);
}

TEST_CASE("run configs are validated against the problem") {
  const cbob::Problem full = cbob::make_builtin_problem("illustrative1d");
  const cbob::Problem s2 = cbob::make_builtin_problem("illustrative1d-po");

  cbob::RunConfig c = small_config();
  CHECK_NOTHROW(cbob::validate_run_config(full, c));

  c.budget = -1;
  CHECK_THROWS_AS(cbob::validate_run_config(full, c), std::invalid_argument);
  c = small_config();
  c.budget = 0;  // measuring only the initial design is allowed
  CHECK_NOTHROW(cbob::validate_run_config(full, c));
  c = small_config();
  c.init_count = 0;
  CHECK_THROWS_AS(cbob::validate_run_config(full, c), std::invalid_argument);
  c = small_config();
  c.gp_restarts = 0;
  CHECK_THROWS_AS(cbob::validate_run_config(full, c), std::invalid_argument);

  // Plain regression surrogates need value observations everywhere.
  c = small_config();
  c.constraint_model = cbob::ConstraintModel::Gpr;
  CHECK_NOTHROW(cbob::validate_run_config(full, c));
  CHECK_THROWS_AS(cbob::validate_run_config(s2, c), std::invalid_argument);

  c = small_config();
  c.gamma_policy = cbob::GammaPolicy::Fixed;
  c.acquisition.gamma = Eigen::VectorXd::Ones(3);  // problem has 1 constraint
  CHECK_THROWS_AS(cbob::validate_run_config(full, c), std::invalid_argument);
}

TEST_CASE("short runs produce well-formed trajectories") {
  const cbob::Problem p = cbob::make_builtin_problem("illustrative1d");
  cbob::RunConfig c = small_config();

  const cbob::Trajectory t = cbob::run(p, c);
  REQUIRE(t.status == cbob::RunStatus::Completed);
  REQUIRE(t.rows.size() == 9);
  for (const cbob::IterationRow& r : t.rows) {
    CHECK(r.x.size() == 1);
    CHECK(r.acq_value.has_value() == (r.k > 0));
    CHECK(!r.wall_ms.has_value());
    // Full scenario: every row carries its objective.
    CHECK(r.objective.has_value());
  }
  const cbob::Trajectory timed = cbob::run(p, c, true);
  for (const cbob::IterationRow& r : timed.rows)
    if (r.k > 0) CHECK(r.wall_ms.has_value());

  // Budget zero stops after the initial design.
  cbob::RunConfig z = small_config();
  z.budget = 0;
  const cbob::Trajectory t0 = cbob::run(p, z);
  CHECK(t0.rows.size() == 6);
  for (const cbob::IterationRow& r : t0.rows) CHECK(r.k == 0);
}

TEST_CASE("runs are bitwise deterministic") {
  const cbob::Problem p = cbob::make_builtin_problem("illustrative1d-po");
  cbob::RunConfig c = small_config();
  c.seed = 11;

  const cbob::Trajectory a = cbob::run(p, c);
  const cbob::Trajectory b = cbob::run(p, c);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK((a.rows[i].x.array() == b.rows[i].x.array()).all());
    CHECK(a.rows[i].objective == b.rows[i].objective);
    CHECK(a.rows[i].best_feasible == b.rows[i].best_feasible);
    CHECK(a.rows[i].acq_value == b.rows[i].acq_value);
  }
}

TEST_CASE("the improvement-only baseline ignores exploration settings") {
  const cbob::Problem p = cbob::make_builtin_problem("illustrative1d");
  cbob::RunConfig a = small_config();
  a.algorithm = cbob::Algorithm::Eic;
  a.constraint_model = cbob::ConstraintModel::Gpc;
  a.acquisition.exploration = cbob::ExplorationKind::Emub;
  cbob::RunConfig b = a;
  b.acquisition.exploration = cbob::ExplorationKind::None;

  const cbob::Trajectory ta = cbob::run(p, a);
  const cbob::Trajectory tb = cbob::run(p, b);
  REQUIRE(ta.rows.size() == tb.rows.size());
  for (std::size_t i = 0; i < ta.rows.size(); ++i)
    CHECK((ta.rows[i].x.array() == tb.rows[i].x.array()).all());
}

TEST_CASE("labels and enum round trips") {
  cbob::RunConfig c;
  CHECK(c.label() == "cbob_hlgp");
  c.algorithm = cbob::Algorithm::Eic;
  c.constraint_model = cbob::ConstraintModel::Gpc;
  CHECK(c.label() == "eic_gpc");

  CHECK(cbob::algorithm_from_string("CBOB") == cbob::Algorithm::Cbob);
  CHECK(cbob::algorithm_from_string("eic") == cbob::Algorithm::Eic);
  CHECK_THROWS_AS(cbob::algorithm_from_string("ei"), std::invalid_argument);
  CHECK(cbob::constraint_model_from_string("hlgp") ==
        cbob::ConstraintModel::Hlgp);
  CHECK(cbob::constraint_model_from_string("gpr") == cbob::ConstraintModel::Gpr);
  CHECK_THROWS_AS(cbob::constraint_model_from_string("gp"),
                  std::invalid_argument);
}

TEST_CASE("property battery") {
  const props::Failures f = props::bo_driver_properties();
  CHECK_MESSAGE(f.empty(), props::join(f));
}

}  // TEST_SUITE
