#include "cbob/problems.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "cbob/expression.hpp"
#include "cbob/rng.hpp"
#include "cbob/sobol.hpp"

namespace cbob {

namespace {

Eigen::VectorXd constant_vector(Eigen::Index n, double v) {
  return Eigen::VectorXd::Constant(n, v);
}

double kbf_objective(const Eigen::VectorXd& x) {
  double sum4 = 0.0, prod2 = 1.0, wsum = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double c2 = std::cos(x(i)) * std::cos(x(i));
    sum4 += c2 * c2;
    prod2 *= c2;
    wsum += static_cast<double>(i + 1) * x(i) * x(i);
  }
  const double den = std::sqrt(wsum);
  if (den < 1e-12) return 0.0;  // only at the origin corner of the box
  return -std::abs(sum4 - 2.0 * prod2) / den;
}

double ackley_objective(const Eigen::VectorXd& x) {
  const double n = static_cast<double>(x.size());
  const double s1 = x.squaredNorm() / n;
  double s2 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    s2 += std::cos(2.0 * std::numbers::pi * x(i));
  s2 /= n;
  return -20.0 * std::exp(-0.2 * std::sqrt(s1)) - std::exp(s2) + 20.0 +
         std::numbers::e;
}

struct WbdQuantities {
  double tau, sigma, delta, buckling;
};

WbdQuantities wbd_quantities(const Eigen::VectorXd& x) {
  const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3);
  constexpr double P = 6000.0, L = 14.0, E = 30e6, G = 12e6;
  const double tp = P / (std::numbers::sqrt2 * x1 * x2);
  const double M = P * (L + x2 / 2.0);
  const double half = (x1 + x3) / 2.0;
  const double R = std::sqrt(x2 * x2 / 4.0 + half * half);
  const double J =
      2.0 * (std::numbers::sqrt2 * x1 * x2 * (x2 * x2 / 12.0 + half * half));
  const double tpp = M * R / J;
  const double tau =
      std::sqrt(tp * tp + 2.0 * tp * tpp * x2 / (2.0 * R) + tpp * tpp);
  const double sigma = 6.0 * P * L / (x4 * x3 * x3);
  const double delta = 6.0 * P * L * L * L / (E * x3 * x3 * x3 * x4);
  const double buckling =
      (4.013 * E * std::sqrt(x3 * x3 * std::pow(x4, 6) / 36.0) / (L * L)) *
      (1.0 - (x3 / (2.0 * L)) * std::sqrt(E / (4.0 * G)));
  return {tau, sigma, delta, buckling};
}

double pvd_objective(const Eigen::VectorXd& x) {
  const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3);
  return 0.6224 * x1 * x3 * x4 + 1.7781 * x2 * x3 * x3 +
         3.1661 * x1 * x1 * x4 + 19.84 * x1 * x1 * x3;
}

double illustrative_value(double x) {
  return std::cos(5.0 * x) - std::sin(x) * std::sin(2.0 * x);
}

// Small 2-D fixture whose feasible set is one curved bar: wide lobes at the
// ends, a narrow throat in the middle. Sampled on a coarse grid the lobes
// yield two well-separated label clusters, so label-only surrogates tend to
// carve the bar apart while value-informed ones keep it whole.
constexpr double kBarBend = 0.19;
constexpr double kBarEndHalfWidth = 0.24;
constexpr double kBarMidHalfWidth = 0.06;
constexpr double kBarValueScale = 3.0;
constexpr int kBarSamples = 256;

double bar_constraint(const Eigen::VectorXd& x) {
  const Eigen::Vector2d p0(0.2, 0.8);
  const Eigen::Vector2d p1(0.5 + kBarBend, 0.5 + kBarBend);
  const Eigen::Vector2d p2(0.8, 0.2);
  const Eigen::Vector2d pt(x(0), x(1));
  double dist = std::numeric_limits<double>::infinity();
  double nearest_t = 0.0;
  for (int i = 0; i <= kBarSamples; ++i) {
    const double t = static_cast<double>(i) / kBarSamples;
    const Eigen::Vector2d c =
        (1 - t) * (1 - t) * p0 + 2 * t * (1 - t) * p1 + t * t * p2;
    const double d = (pt - c).norm();
    if (d < dist) {
      dist = d;
      nearest_t = t;
    }
  }
  const double u = 2.0 * nearest_t - 1.0;
  const double halfwidth =
      kBarMidHalfWidth + (kBarEndHalfWidth - kBarMidHalfWidth) * u * u;
  return kBarValueScale * (dist - halfwidth);
}

Problem make_kbf() {
  Problem p;
  p.name = "kbf";
  p.lower = constant_vector(10, 0.0);
  p.upper = constant_vector(10, 10.0);
  p.scenario = Scenario::S1;
  p.objective = kbf_objective;
  p.constraints = {
      [](const Eigen::VectorXd& x) { return 0.75 - x.prod(); },
      [](const Eigen::VectorXd& x) { return x.sum() - 7.5 * x.size(); },
  };
  return p;
}

Problem make_ackley(int n) {
  Problem p;
  p.name = n == 5 ? "ackley5" : "ackley";
  p.lower = constant_vector(n, -5.0);
  p.upper = constant_vector(n, 5.0);
  p.scenario = Scenario::S2;
  p.objective = ackley_objective;
  p.constraints = {[](const Eigen::VectorXd& x) { return x.sum(); }};
  return p;
}

Problem make_wbd() {
  Problem p;
  p.name = "wbd";
  p.lower.resize(4);
  p.upper.resize(4);
  p.lower << 0.125, 0.1, 0.1, 0.125;
  p.upper << 5.0, 10.0, 10.0, 5.0;
  p.scenario = Scenario::S1;
  p.objective = [](const Eigen::VectorXd& x) {
    return 1.10471 * x(0) * x(0) * x(1) +
           0.04811 * x(2) * x(3) * (14.0 + x(1));
  };
  p.constraints = {
      [](const Eigen::VectorXd& x) { return wbd_quantities(x).tau - 13600.0; },
      [](const Eigen::VectorXd& x) {
        return wbd_quantities(x).sigma - 30000.0;
      },
      [](const Eigen::VectorXd& x) { return x(0) - x(3); },
      [](const Eigen::VectorXd& x) {
        return 6000.0 - wbd_quantities(x).buckling;
      },
      [](const Eigen::VectorXd& x) { return wbd_quantities(x).delta - 0.25; },
  };
  return p;
}

Problem make_pvd() {
  Problem p;
  p.name = "pvd";
  p.lower.resize(4);
  p.upper.resize(4);
  p.lower << 0.0, 0.0, 10.0, 150.0;
  p.upper << 20.0, 20.0, 50.0, 200.0;
  p.scenario = Scenario::S2;
  p.integer_dims = {0, 1};
  p.objective = pvd_objective;
  p.constraints = {
      [](const Eigen::VectorXd& x) { return -x(0) + 0.0193 * x(2); },
      [](const Eigen::VectorXd& x) { return -x(1) + 0.00954 * x(2); },
      [](const Eigen::VectorXd& x) {
        return -std::numbers::pi * x(2) * x(2) * x(3) -
               4.0 / 3.0 * std::numbers::pi * x(2) * x(2) * x(2) + 1296000.0;
      },
      [](const Eigen::VectorXd& x) { return x(3) - 240.0; },
  };
  return p;
}

Problem make_illustrative(bool partial) {
  Problem p;
  p.name = partial ? "illustrative1d-po" : "illustrative1d";
  p.lower = constant_vector(1, 0.0);
  p.upper = constant_vector(1, 10.0);
  p.scenario = partial ? Scenario::S2 : Scenario::Full;
  p.objective = [](const Eigen::VectorXd& x) {
    return illustrative_value(x(0));
  };
  p.constraints = {
      [](const Eigen::VectorXd& x) { return illustrative_value(x(0)); }};
  return p;
}

Problem make_bar_demo() {
  Problem p;
  p.name = "hlgp-demo-2d";
  p.lower = constant_vector(2, 0.0);
  p.upper = constant_vector(2, 1.0);
  p.scenario = Scenario::S2;
  p.objective = [](const Eigen::VectorXd& x) {
    return (x(0) - 0.5) * (x(0) - 0.5) + (x(1) - 0.5) * (x(1) - 0.5);
  };
  p.constraints = {bar_constraint};
  return p;
}

}  // namespace

Scenario scenario_from_string(const std::string& s) {
  std::string t;
  t.reserve(s.size());
  for (char c : s) t.push_back(static_cast<char>(std::tolower(c)));
  if (t == "full") return Scenario::Full;
  if (t == "s1") return Scenario::S1;
  if (t == "s2") return Scenario::S2;
  throw std::invalid_argument("unknown scenario '" + s +
                              "' (expected full, s1, or s2)");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Full: return "full";
    case Scenario::S1: return "s1";
    case Scenario::S2: return "s2";
  }
  return "full";
}

Eigen::VectorXd Problem::canonical(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd xc = x;
  for (int i : integer_dims) xc(i) = std::round(xc(i));
  return xc;
}

double Problem::objective_value(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return objective(canonical(x));
}

Eigen::VectorXd Problem::constraint_values(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd xc = canonical(x);
  Eigen::VectorXd g(constraint_count());
  for (Eigen::Index i = 0; i < g.size(); ++i)
    g(i) = constraints[static_cast<std::size_t>(i)](xc);
  return g;
}

bool Problem::feasible(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return (constraint_values(x).array() <= 0.0).all();
}

EvaluationRecord Problem::evaluate(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim())
    throw std::invalid_argument("problem '" + name +
                                "': point dimension mismatch");
  const Eigen::VectorXd xc = canonical(x);
  Eigen::VectorXd g(constraint_count());
  for (Eigen::Index i = 0; i < g.size(); ++i)
    g(i) = constraints[static_cast<std::size_t>(i)](xc);
  const bool feas = (g.array() <= 0.0).all();

  EvaluationRecord rec;
  rec.x = xc;
  rec.feasible = feas;
  if (scenario == Scenario::Full || feas) rec.objective = objective(xc);
  rec.constraints.reserve(static_cast<std::size_t>(g.size()));
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (scenario == Scenario::S2 && g(i) > 0.0)
      rec.constraints.push_back(ConstraintObservation::violated_flag());
    else
      rec.constraints.push_back(ConstraintObservation::make_value(g(i)));
  }
  return rec;
}

void Problem::validate() const {
  if (dim() < 1) throw std::invalid_argument("problem: empty box");
  if (upper.size() != dim())
    throw std::invalid_argument("problem: bound size mismatch");
  if (((upper - lower).array() <= 0.0).any())
    throw std::invalid_argument("problem: need lower < upper per dimension");
  if (!objective) throw std::invalid_argument("problem: missing objective");
  if (constraints.empty())
    throw std::invalid_argument("problem: needs at least one constraint");
  for (int i : integer_dims)
    if (i < 0 || i >= dim())
      throw std::invalid_argument("problem: integer dimension out of range");
}

Problem make_expression_problem(
    const std::string& name, Eigen::VectorXd lower, Eigen::VectorXd upper,
    Scenario scenario, std::vector<int> integer_dims,
    const std::string& objective_text,
    const std::vector<std::string>& constraint_texts) {
  Problem p;
  p.name = name;
  p.lower = std::move(lower);
  p.upper = std::move(upper);
  p.scenario = scenario;
  p.integer_dims = std::move(integer_dims);
  const Eigen::Index n = p.lower.size();
  const Expression fobj = Expression::parse(objective_text, n);
  p.objective = [fobj](const Eigen::VectorXd& x) { return fobj(x); };
  for (const std::string& text : constraint_texts) {
    const Expression fcon = Expression::parse(text, n);
    p.constraints.push_back(
        [fcon](const Eigen::VectorXd& x) { return fcon(x); });
  }
  p.validate();
  return p;
}

std::vector<std::string> builtin_problem_names() {
  return {"kbf",  "ackley", "ackley5", "wbd", "pvd", "illustrative1d",
          "illustrative1d-po", "hlgp-demo-2d"};
}

Problem make_builtin_problem(const std::string& name) {
  Problem p;
  if (name == "kbf") p = make_kbf();
  else if (name == "ackley") p = make_ackley(10);
  else if (name == "ackley5") p = make_ackley(5);
  else if (name == "wbd") p = make_wbd();
  else if (name == "pvd") p = make_pvd();
  else if (name == "illustrative1d") p = make_illustrative(false);
  else if (name == "illustrative1d-po") p = make_illustrative(true);
  else if (name == "hlgp-demo-2d") p = make_bar_demo();
  else
    throw std::invalid_argument("unknown problem '" + name +
                                "'; see list-problems");
  p.validate();
  return p;
}

DesignKind design_from_string(const std::string& s) {
  std::string t;
  t.reserve(s.size());
  for (char c : s) t.push_back(static_cast<char>(std::tolower(c)));
  if (t == "sobol") return DesignKind::Sobol;
  if (t == "uniform") return DesignKind::Uniform;
  throw std::invalid_argument("unknown design '" + s +
                              "' (expected sobol or uniform)");
}

std::string to_string(DesignKind k) {
  return k == DesignKind::Sobol ? "sobol" : "uniform";
}

Eigen::MatrixXd initial_design(const Problem& p, DesignKind kind, int count,
                               std::uint64_t seed) {
  if (count < 1)
    throw std::invalid_argument("initial_design: count must be positive");
  const Eigen::Index n = p.dim();
  const std::uint64_t stream = derive_seed(seed, "init:" + p.name);
  Eigen::MatrixXd U(n, count);
  if (kind == DesignKind::Sobol) {
    U = sobol_points(static_cast<int>(n), count, stream);
  } else {
    std::mt19937_64 gen(stream);
    for (int j = 0; j < count; ++j)
      for (Eigen::Index i = 0; i < n; ++i) U(i, j) = uniform01(gen);
  }
  const Eigen::VectorXd span = p.upper - p.lower;
  return ((U.array().colwise() * span.array()).colwise() + p.lower.array())
      .matrix();
}

int default_init_count(const Problem& p) {
  return 11 * static_cast<int>(p.dim());
}

}  // namespace cbob
