#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cbob/ep_inference.hpp"

namespace cbob {

// Observability of a constrained problem:
//   Full  everything is measured everywhere
//   S1    the objective is hidden at infeasible points
//   S2    the objective is hidden at infeasible points and violated
//         constraints report only a flag; satisfied ones report their value
enum class Scenario { Full, S1, S2 };

Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);

// One measurement. `x` is the point that was actually evaluated (integer
// dimensions already rounded). A record never carries a value the scenario
// hides: `objective` is absent iff the point is infeasible under S1/S2.
struct EvaluationRecord {
  Eigen::VectorXd x;
  bool feasible = false;
  std::optional<double> objective;
  std::vector<ConstraintObservation> constraints;
};

class Problem {
 public:
  using Fn = std::function<double(const Eigen::VectorXd&)>;

  std::string name;
  Eigen::VectorXd lower, upper;
  Scenario scenario = Scenario::Full;
  std::vector<int> integer_dims;  // rounded to the nearest integer before use
  Fn objective;
  std::vector<Fn> constraints;

  [[nodiscard]] Eigen::Index dim() const { return lower.size(); }
  [[nodiscard]] Eigen::Index constraint_count() const {
    return static_cast<Eigen::Index>(constraints.size());
  }

  // The point the black box actually sees (integer dims rounded).
  [[nodiscard]] Eigen::VectorXd canonical(
      const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // Unmasked ground truth, for plots and reference computations.
  [[nodiscard]] double objective_value(
      const Eigen::Ref<const Eigen::VectorXd>& x) const;
  [[nodiscard]] Eigen::VectorXd constraint_values(
      const Eigen::Ref<const Eigen::VectorXd>& x) const;
  [[nodiscard]] bool feasible(
      const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // One black-box measurement with the scenario's observability applied.
  [[nodiscard]] EvaluationRecord evaluate(
      const Eigen::Ref<const Eigen::VectorXd>& x) const;

  void validate() const;  // throws std::invalid_argument on bad shape
};

// Problem from declarative pieces: expression strings over x_1..x_n.
Problem make_expression_problem(const std::string& name,
                                Eigen::VectorXd lower, Eigen::VectorXd upper,
                                Scenario scenario,
                                std::vector<int> integer_dims,
                                const std::string& objective_text,
                                const std::vector<std::string>& constraint_texts);

// Built-in benchmark registry.
std::vector<std::string> builtin_problem_names();
Problem make_builtin_problem(const std::string& name);

// Initial designs over the problem box.
enum class DesignKind { Sobol, Uniform };
DesignKind design_from_string(const std::string& s);
std::string to_string(DesignKind k);

// dim x count matrix of design points. The stream seed is derived from the
// problem name and the run seed only, so designs are reproducible.
Eigen::MatrixXd initial_design(const Problem& p, DesignKind kind, int count,
                               std::uint64_t seed);

// Default initial design size: 11 points per dimension.
int default_init_count(const Problem& p);

}  // namespace cbob
