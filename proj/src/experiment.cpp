#include "cbob/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "cbob/acquisition.hpp"
#include "cbob/core_math.hpp"
#include "cbob/rng.hpp"

namespace cbob {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_fail(const std::string& where,
                              const std::string& what) {
  throw std::invalid_argument("config: " + where + ": " + what);
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) config_fail(where, "unknown key '" + it.key() + "'");
  }
}

double get_number(const json& o, const char* k, const std::string& where,
                  double dflt) {
  if (!o.contains(k)) return dflt;
  if (!o[k].is_number()) config_fail(where + "." + k, "expected a number");
  return o[k].get<double>();
}

int get_integer(const json& o, const char* k, const std::string& where,
                int dflt) {
  if (!o.contains(k)) return dflt;
  if (!o[k].is_number_integer())
    config_fail(where + "." + k, "expected an integer");
  return o[k].get<int>();
}

std::string get_string(const json& o, const char* k,
                       const std::string& where) {
  if (!o.contains(k)) config_fail(where, std::string("missing key '") + k + "'");
  if (!o[k].is_string()) config_fail(where + "." + k, "expected a string");
  return o[k].get<std::string>();
}

std::string exploration_to_string(ExplorationKind k) {
  switch (k) {
    case ExplorationKind::None: return "none";
    case ExplorationKind::Pob: return "pob";
    case ExplorationKind::Emub: return "emub";
  }
  return "emub";
}

ExplorationKind exploration_from_string(const std::string& s,
                                        const std::string& where) {
  if (s == "none") return ExplorationKind::None;
  if (s == "pob") return ExplorationKind::Pob;
  if (s == "emub") return ExplorationKind::Emub;
  config_fail(where, "unknown exploration '" + s +
                         "' (expected none, pob, or emub)");
}

RunConfig parse_algorithm(const json& a, const std::string& where,
                          Eigen::Index constraint_count) {
  if (!a.is_object()) config_fail(where, "expected an object");
  check_keys(a, where,
             {"algorithm", "constraint_model", "exploration", "beta",
              "lambda", "gamma", "budget", "init_count", "init_design",
              "gp_restarts", "adapt_probe_count", "optimizer", "ep"});
  RunConfig c;
  try {
    c.algorithm = algorithm_from_string(get_string(a, "algorithm", where));
    c.constraint_model =
        constraint_model_from_string(get_string(a, "constraint_model", where));
    if (a.contains("init_design"))
      c.init_design = design_from_string(get_string(a, "init_design", where));
  } catch (const std::invalid_argument& e) {
    config_fail(where, e.what());
  }
  if (a.contains("exploration"))
    c.acquisition.exploration = exploration_from_string(
        get_string(a, "exploration", where), where + ".exploration");
  c.acquisition.beta = get_number(a, "beta", where, 1.96);
  c.acquisition.lambda = get_number(a, "lambda", where, 0.0);
  if (c.acquisition.beta < 0) config_fail(where + ".beta", "must be >= 0");

  if (a.contains("gamma")) {
    const json& g = a["gamma"];
    if (g.is_string()) {
      if (g.get<std::string>() != "adapt")
        config_fail(where + ".gamma",
                    "expected \"adapt\", a number, or an array");
      c.gamma_policy = GammaPolicy::Adapt;
    } else if (g.is_number()) {
      const double v = g.get<double>();
      if (!(v > 0)) config_fail(where + ".gamma", "must be positive");
      c.gamma_policy = GammaPolicy::Fixed;
      c.acquisition.gamma = Eigen::VectorXd::Constant(constraint_count, v);
    } else if (g.is_array()) {
      if (static_cast<Eigen::Index>(g.size()) != constraint_count)
        config_fail(where + ".gamma",
                    "needs one entry per constraint (" +
                        std::to_string(constraint_count) + ")");
      c.gamma_policy = GammaPolicy::Fixed;
      c.acquisition.gamma.resize(constraint_count);
      for (Eigen::Index i = 0; i < constraint_count; ++i) {
        if (!g[static_cast<std::size_t>(i)].is_number())
          config_fail(where + ".gamma", "expected numbers");
        c.acquisition.gamma(i) = g[static_cast<std::size_t>(i)].get<double>();
        if (!(c.acquisition.gamma(i) > 0))
          config_fail(where + ".gamma", "entries must be positive");
      }
    } else {
      config_fail(where + ".gamma",
                  "expected \"adapt\", a number, or an array");
    }
  }

  c.budget = get_integer(a, "budget", where, 100);
  if (c.budget < 0) config_fail(where + ".budget", "must be >= 0");
  c.init_count = get_integer(a, "init_count", where, -1);
  if (c.init_count == 0 || c.init_count < -1)
    config_fail(where + ".init_count", "must be positive (or -1 for 11n)");
  c.gp_restarts = get_integer(a, "gp_restarts", where, 5);
  if (c.gp_restarts < 1) config_fail(where + ".gp_restarts", "must be >= 1");
  c.adapt_probe_count = get_integer(a, "adapt_probe_count", where, 2048);
  if (c.adapt_probe_count < 1)
    config_fail(where + ".adapt_probe_count", "must be >= 1");

  if (a.contains("optimizer")) {
    const json& o = a["optimizer"];
    const std::string ow = where + ".optimizer";
    if (!o.is_object()) config_fail(ow, "expected an object");
    check_keys(o, ow,
               {"probe_count", "multistarts", "local_iterations", "fd_step"});
    c.optimizer.probe_count =
        get_integer(o, "probe_count", ow, c.optimizer.probe_count);
    c.optimizer.multistarts =
        get_integer(o, "multistarts", ow, c.optimizer.multistarts);
    c.optimizer.local_iterations =
        get_integer(o, "local_iterations", ow, c.optimizer.local_iterations);
    c.optimizer.fd_step = get_number(o, "fd_step", ow, c.optimizer.fd_step);
    if (c.optimizer.probe_count < 1 || c.optimizer.multistarts < 1 ||
        c.optimizer.local_iterations < 0 || !(c.optimizer.fd_step > 0))
      config_fail(ow, "invalid optimizer settings");
  }

  if (a.contains("ep")) {
    const json& e = a["ep"];
    const std::string ew = where + ".ep";
    if (!e.is_object()) config_fail(ew, "expected an object");
    check_keys(e, ew,
               {"sigma", "alpha", "tolerance", "max_sweeps", "damping",
                "min_site_variance", "max_site_variance"});
    c.ep.sigma = get_number(e, "sigma", ew, c.ep.sigma);
    c.ep.alpha = get_number(e, "alpha", ew, c.ep.alpha);
    c.ep.tolerance = get_number(e, "tolerance", ew, c.ep.tolerance);
    c.ep.max_sweeps = get_integer(e, "max_sweeps", ew, c.ep.max_sweeps);
    c.ep.damping = get_number(e, "damping", ew, c.ep.damping);
    c.ep.min_site_variance =
        get_number(e, "min_site_variance", ew, c.ep.min_site_variance);
    c.ep.max_site_variance =
        get_number(e, "max_site_variance", ew, c.ep.max_site_variance);
  }
  return c;
}

json algorithm_json(const RunConfig& c, Eigen::Index constraint_count) {
  json g;
  if (c.gamma_policy == GammaPolicy::Adapt) {
    g = "adapt";
  } else {
    g = json::array();
    if (c.acquisition.gamma.size() == 0)
      for (Eigen::Index i = 0; i < constraint_count; ++i) g.push_back(1.0);
    else
      for (Eigen::Index i = 0; i < c.acquisition.gamma.size(); ++i)
        g.push_back(c.acquisition.gamma(i));
  }
  return json{
      {"algorithm", to_string(c.algorithm)},
      {"constraint_model", to_string(c.constraint_model)},
      {"exploration", exploration_to_string(c.acquisition.exploration)},
      {"beta", c.acquisition.beta},
      {"lambda", c.acquisition.lambda},
      {"gamma", g},
      {"budget", c.budget},
      {"init_count", c.init_count},
      {"init_design", to_string(c.init_design)},
      {"gp_restarts", c.gp_restarts},
      {"adapt_probe_count", c.adapt_probe_count},
      {"optimizer",
       {{"probe_count", c.optimizer.probe_count},
        {"multistarts", c.optimizer.multistarts},
        {"local_iterations", c.optimizer.local_iterations},
        {"fd_step", c.optimizer.fd_step}}},
      {"ep",
       {{"sigma", c.ep.sigma},
        {"alpha", c.ep.alpha},
        {"tolerance", c.ep.tolerance},
        {"max_sweeps", c.ep.max_sweeps},
        {"damping", c.ep.damping},
        {"min_site_variance", c.ep.min_site_variance},
        {"max_site_variance", c.ep.max_site_variance}}},
  };
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_field_double(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + s.size() || s.empty())
    throw std::runtime_error(where + ": malformed number '" + s + "'");
  return v;
}

std::optional<double> parse_optional_double(const std::string& s,
                                            const std::string& where) {
  if (s.empty()) return std::nullopt;
  return parse_field_double(s, where);
}

std::string optional_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::string csv_quantile_field(double v) {
  return std::isnan(v) ? std::string() : format_double(v);
}

struct RunResult {
  std::string label;
  std::uint64_t seed = 0;
  std::string file;
  std::string status = "failed";
  std::string error;
  double wall_ms = 0.0;
};

int ensure_output_dir(const std::string& dir, bool force, std::ostream& err) {
  const fs::path p(dir);
  std::error_code ec;
  if (fs::exists(p, ec)) {
    if (!fs::is_directory(p, ec)) {
      err << "error: '" << dir << "' exists and is not a directory\n";
      return 1;
    }
    if (!fs::is_empty(p, ec) && !force) {
      err << "error: output directory '" << dir
          << "' already has contents; pass --force to overwrite\n";
      return 1;
    }
  } else {
    fs::create_directories(p, ec);
    if (ec) {
      err << "error: cannot create output directory '" << dir
          << "': " << ec.message() << "\n";
      return 1;
    }
  }
  return 0;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  f << content;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto parse_one = [&](const std::string& tok) -> std::uint64_t {
    if (tok.empty())
      throw std::invalid_argument("seeds: empty entry in '" + text + "'");
    for (char c : tok)
      if (!std::isdigit(static_cast<unsigned char>(c)))
        throw std::invalid_argument("seeds: '" + tok +
                                    "' is not a non-negative integer");
    return std::strtoull(tok.c_str(), nullptr, 10);
  };
  const std::size_t range = text.find("..");
  if (range != std::string::npos && text.find(',') == std::string::npos) {
    const std::uint64_t lo = parse_one(text.substr(0, range));
    const std::uint64_t hi = parse_one(text.substr(range + 2));
    if (hi < lo)
      throw std::invalid_argument("seeds: empty range '" + text + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string tok =
        text.substr(start, comma == std::string::npos ? std::string::npos
                                                      : comma - start);
    seeds.push_back(parse_one(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size())
    throw std::invalid_argument("seeds: duplicates in '" + text + "'");
  return seeds;
}

void refresh_config_hash(ExperimentConfig& config) {
  json j;
  j["problem"] = config.problem_identity;
  j["algorithms"] = json::array();
  for (const RunConfig& c : config.algorithms)
    j["algorithms"].push_back(
        algorithm_json(c, config.problem.constraint_count()));
  j["seeds"] = config.seeds;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  config.config_hash = std::string("fnv1a64:") + buf;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f)
    throw std::invalid_argument("config: cannot read file '" + path + "'");
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  if (!doc.is_object()) config_fail("top level", "expected an object");
  check_keys(doc, "top level",
             {"problem", "custom_problem", "algorithms", "seeds", "out",
              "workers"});

  ExperimentConfig cfg;
  const bool has_builtin = doc.contains("problem");
  const bool has_custom = doc.contains("custom_problem");
  if (has_builtin == has_custom)
    config_fail("top level",
                "need exactly one of 'problem' or 'custom_problem'");
  if (has_builtin) {
    const std::string name = get_string(doc, "problem", "top level");
    try {
      cfg.problem = make_builtin_problem(name);
    } catch (const std::invalid_argument& e) {
      config_fail("problem", e.what());
    }
    cfg.problem_identity = "builtin:" + name;
  } else {
    const json& cp = doc["custom_problem"];
    const std::string where = "custom_problem";
    if (!cp.is_object()) config_fail(where, "expected an object");
    check_keys(cp, where,
               {"name", "lower", "upper", "scenario", "integer_dims",
                "objective", "constraints"});
    const std::string name = get_string(cp, "name", where);
    const auto read_bounds = [&](const char* k) {
      if (!cp.contains(k) || !cp[k].is_array())
        config_fail(where + "." + k, "expected an array of numbers");
      Eigen::VectorXd v(static_cast<Eigen::Index>(cp[k].size()));
      for (std::size_t i = 0; i < cp[k].size(); ++i) {
        if (!cp[k][i].is_number())
          config_fail(where + "." + k, "expected numbers");
        v(static_cast<Eigen::Index>(i)) = cp[k][i].get<double>();
      }
      return v;
    };
    const Eigen::VectorXd lower = read_bounds("lower");
    const Eigen::VectorXd upper = read_bounds("upper");
    Scenario scenario;
    try {
      scenario = scenario_from_string(get_string(cp, "scenario", where));
    } catch (const std::invalid_argument& e) {
      config_fail(where + ".scenario", e.what());
    }
    std::vector<int> integer_dims;
    if (cp.contains("integer_dims")) {
      if (!cp["integer_dims"].is_array())
        config_fail(where + ".integer_dims", "expected an array of indices");
      for (const json& v : cp["integer_dims"]) {
        if (!v.is_number_integer())
          config_fail(where + ".integer_dims", "expected integers");
        integer_dims.push_back(v.get<int>());
      }
    }
    const std::string objective = get_string(cp, "objective", where);
    if (!cp.contains("constraints") || !cp["constraints"].is_array() ||
        cp["constraints"].empty())
      config_fail(where + ".constraints",
                  "expected a non-empty array of expression strings");
    std::vector<std::string> constraints;
    for (const json& v : cp["constraints"]) {
      if (!v.is_string())
        config_fail(where + ".constraints", "expected strings");
      constraints.push_back(v.get<std::string>());
    }
    try {
      cfg.problem =
          make_expression_problem(name, lower, upper, scenario, integer_dims,
                                  objective, constraints);
    } catch (const std::invalid_argument& e) {
      config_fail(where, e.what());
    }
    cfg.problem_identity = "custom:" + cp.dump();
  }

  if (!doc.contains("algorithms") || !doc["algorithms"].is_array() ||
      doc["algorithms"].empty())
    config_fail("algorithms", "expected a non-empty array");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < doc["algorithms"].size(); ++i) {
    RunConfig c =
        parse_algorithm(doc["algorithms"][i],
                        "algorithms[" + std::to_string(i) + "]",
                        cfg.problem.constraint_count());
    if (!labels.insert(c.label()).second)
      config_fail("algorithms[" + std::to_string(i) + "]",
                  "duplicate algorithm/constraint_model pair '" + c.label() +
                      "'");
    cfg.algorithms.push_back(std::move(c));
  }

  if (doc.contains("seeds")) {
    if (!doc["seeds"].is_array() || doc["seeds"].empty())
      config_fail("seeds", "expected a non-empty array of integers");
    std::set<std::uint64_t> unique;
    for (const json& v : doc["seeds"]) {
      if (!v.is_number_integer() ||
          (v.is_number_integer() && v.get<long long>() < 0))
        config_fail("seeds", "expected non-negative integers");
      const std::uint64_t s = v.get<std::uint64_t>();
      if (!unique.insert(s).second) config_fail("seeds", "duplicate seed");
      cfg.seeds.push_back(s);
    }
  } else {
    for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
  }

  if (doc.contains("out")) cfg.out_dir = get_string(doc, "out", "top level");
  cfg.workers = get_integer(doc, "workers", "top level", 1);
  if (cfg.workers < 1) config_fail("workers", "must be >= 1");

  refresh_config_hash(cfg);
  return cfg;
}

std::string trajectory_file_name(const std::string& label,
                                 std::uint64_t seed) {
  return "traj_" + label + "_seed" + std::to_string(seed) + ".csv";
}

void write_trajectory_csv(const std::string& path, std::uint64_t seed,
                          Eigen::Index dim, const Trajectory& trajectory) {
  std::ostringstream s;
  s << "seed,k";
  for (Eigen::Index i = 1; i <= dim; ++i) s << ",x_" << i;
  s << ",feasible,f_obs,best_feasible,acq_value,wall_ms\n";
  for (const IterationRow& row : trajectory.rows) {
    s << seed << ',' << row.k;
    for (Eigen::Index i = 0; i < dim; ++i)
      s << ',' << format_double(row.x(i));
    s << ',' << (row.feasible ? 1 : 0) << ',' << optional_field(row.objective)
      << ',' << optional_field(row.best_feasible) << ','
      << optional_field(row.acq_value) << ',' << optional_field(row.wall_ms)
      << '\n';
  }
  write_text_file(path, s.str());
}

LoadedTrajectory read_trajectory_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_fields(line);
  if (header.size() < 8 || header[0] != "seed" || header[1] != "k")
    throw std::runtime_error(path + ": unexpected header");
  const std::size_t n = header.size() - 7;
  for (std::size_t i = 0; i < n; ++i)
    if (header[2 + i] != "x_" + std::to_string(i + 1))
      throw std::runtime_error(path + ": unexpected header column '" +
                               header[2 + i] + "'");
  const char* tail[] = {"feasible", "f_obs", "best_feasible", "acq_value",
                        "wall_ms"};
  for (std::size_t i = 0; i < 5; ++i)
    if (header[2 + n + i] != tail[i])
      throw std::runtime_error(path + ": unexpected header column '" +
                               header[2 + n + i] + "'");

  LoadedTrajectory out;
  bool have_seed = false;
  int line_no = 1;
  int last_k = -1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size())
      throw std::runtime_error(where + ": wrong field count");

    const double seed_v = parse_field_double(fields[0], where);
    if (!have_seed) {
      out.seed = static_cast<std::uint64_t>(seed_v);
      have_seed = true;
    } else if (static_cast<std::uint64_t>(seed_v) != out.seed) {
      throw std::runtime_error(where + ": seed changes mid-file");
    }

    IterationRow row;
    const double k_v = parse_field_double(fields[1], where);
    row.k = static_cast<int>(k_v);
    if (row.k < 0 || static_cast<double>(row.k) != k_v || row.k < last_k)
      throw std::runtime_error(where + ": bad iteration index");
    last_k = row.k;
    row.x.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      row.x(static_cast<Eigen::Index>(i)) =
          parse_field_double(fields[2 + i], where);
    const std::string& feas = fields[2 + n];
    if (feas != "0" && feas != "1")
      throw std::runtime_error(where + ": feasible must be 0 or 1");
    row.feasible = feas == "1";
    row.objective = parse_optional_double(fields[3 + n], where);
    row.best_feasible = parse_optional_double(fields[4 + n], where);
    row.acq_value = parse_optional_double(fields[5 + n], where);
    row.wall_ms = parse_optional_double(fields[6 + n], where);
    out.trajectory.rows.push_back(std::move(row));
  }
  if (out.trajectory.rows.empty())
    throw std::runtime_error(path + ": no data rows");
  return out;
}

int cmd_run(ExperimentConfig config, const RunOverrides& overrides,
            std::ostream& out, std::ostream& err) {
  if (overrides.out_dir) config.out_dir = *overrides.out_dir;
  if (config.out_dir.empty())
    throw std::invalid_argument(
        "config: no output directory (set \"out\" in the config or pass "
        "--out)");
  if (overrides.seeds) {
    if (overrides.seeds->empty())
      throw std::invalid_argument("seeds: empty list");
    config.seeds = *overrides.seeds;
  }
  if (overrides.workers) {
    if (*overrides.workers < 1)
      throw std::invalid_argument("workers: must be >= 1");
    config.workers = *overrides.workers;
  }
  for (RunConfig& c : config.algorithms) {
    if (overrides.budget) {
      if (*overrides.budget < 0)
        throw std::invalid_argument("budget: must be >= 0");
      c.budget = *overrides.budget;
    }
    if (overrides.beta) {
      if (*overrides.beta < 0)
        throw std::invalid_argument("beta: must be >= 0");
      c.acquisition.beta = *overrides.beta;
    }
  }
  refresh_config_hash(config);
  for (const RunConfig& c : config.algorithms)
    validate_run_config(config.problem, c);

  if (const int rc = ensure_output_dir(config.out_dir, overrides.force, err))
    return rc;
  const fs::path dir(config.out_dir);

  struct Task {
    std::size_t algorithm;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t a = 0; a < config.algorithms.size(); ++a)
    for (std::uint64_t s : config.seeds) tasks.push_back({a, s});

  std::vector<RunResult> results(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      RunConfig cfg = config.algorithms[task.algorithm];
      cfg.seed = task.seed;
      RunResult& res = results[i];
      res.label = cfg.label();
      res.seed = task.seed;
      res.file = trajectory_file_name(res.label, task.seed);
      const auto started = std::chrono::steady_clock::now();
      try {
        const Trajectory traj =
            run(config.problem, cfg, overrides.timings);
        write_trajectory_csv((dir / res.file).string(), task.seed,
                             config.problem.dim(), traj);
        if (traj.status == RunStatus::Completed) {
          res.status = "ok";
        } else {
          res.status = "aborted";
          res.error = traj.error;
        }
      } catch (const std::exception& e) {
        res.status = "failed";
        res.error = e.what();
      }
      const auto elapsed = std::chrono::steady_clock::now() - started;
      res.wall_ms =
          std::chrono::duration<double, std::milli>(elapsed).count();
    }
  };

  const std::size_t pool = std::min<std::size_t>(
      static_cast<std::size_t>(config.workers), tasks.size());
  if (pool <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }

  json manifest;
  manifest["tool"] = "cbob";
  manifest["version"] = kToolVersion;
  manifest["config_hash"] = config.config_hash;
  manifest["problem"] = {{"name", config.problem.name},
                         {"dim", config.problem.dim()},
                         {"constraints", config.problem.constraint_count()},
                         {"scenario", to_string(config.problem.scenario)}};
  manifest["problem_identity"] = config.problem_identity;
  json algs = json::array();
  for (const RunConfig& c : config.algorithms) algs.push_back(c.label());
  manifest["algorithms"] = algs;
  manifest["seeds"] = config.seeds;
  manifest["timings"] = overrides.timings;
  json runs = json::array();
  for (const RunResult& r : results)
    runs.push_back({{"file", r.file},
                    {"algorithm", r.label},
                    {"seed", r.seed},
                    {"status", r.status},
                    {"error", r.error},
                    {"wall_ms", r.wall_ms}});
  manifest["runs"] = runs;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

  int failed = 0;
  for (const RunResult& r : results)
    if (r.status != "ok") {
      ++failed;
      err << "run " << r.label << " seed " << r.seed << ": " << r.status
          << (r.error.empty() ? "" : ": " + r.error) << "\n";
    }
  out << "wrote " << (results.size() - static_cast<std::size_t>(failed))
      << "/" << results.size() << " trajectory files and manifest.json to "
      << config.out_dir << "\n";
  return failed == 0 ? 0 : 2;
}

int cmd_summarize(const std::string& dir, std::ostream& out,
                  std::ostream& err) {
  const fs::path base(dir);
  json manifest;
  {
    std::ifstream f(base / "manifest.json");
    if (!f) {
      err << "error: cannot read " << (base / "manifest.json").string()
          << "\n";
      return 1;
    }
    try {
      manifest = json::parse(f);
    } catch (const json::parse_error& e) {
      err << "error: manifest.json: " << e.what() << "\n";
      return 1;
    }
  }
  if (!manifest.contains("runs") || !manifest["runs"].is_array() ||
      !manifest.contains("algorithms") || !manifest.contains("config_hash")) {
    err << "error: manifest.json is missing required fields\n";
    return 1;
  }

  // Refuse directories holding trajectory files from another experiment.
  std::set<std::string> listed;
  for (const json& r : manifest["runs"])
    listed.insert(r.value("file", std::string()));
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(base, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("traj_", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv" && !listed.count(name)) {
      err << "error: " << name
          << " is not part of this manifest; refusing a mixed results "
             "directory\n";
      return 1;
    }
  }

  std::vector<std::string> labels;
  for (const json& l : manifest["algorithms"])
    labels.push_back(l.get<std::string>());

  std::map<std::string, std::vector<Trajectory>> by_label;
  std::vector<std::string> excluded;
  for (const json& r : manifest["runs"]) {
    const std::string file = r.value("file", std::string());
    const std::string label = r.value("algorithm", std::string());
    const std::string status = r.value("status", std::string());
    if (status != "ok") {
      excluded.push_back(file + " (" + status + ")");
      continue;
    }
    try {
      LoadedTrajectory lt = read_trajectory_csv((base / file).string());
      by_label[label].push_back(std::move(lt.trajectory));
    } catch (const std::exception& e) {
      excluded.push_back(file + " (" + e.what() + ")");
    }
  }

  bool any = false;
  std::ostringstream table;
  std::ostringstream summary_csv;
  summary_csv << "algorithm,runs,terminal_defined,median_bov,mean_rof\n";
  table << "algorithm            runs  median_bov      mean_rof\n";
  for (const std::string& label : labels) {
    auto it = by_label.find(label);
    if (it == by_label.end() || it->second.empty()) continue;
    MetricsSummary m;
    try {
      m = metrics(it->second);
    } catch (const std::exception& e) {
      excluded.push_back(label + " (" + e.what() + ")");
      continue;
    }
    any = true;
    summary_csv << label << ',' << m.runs << ',' << m.terminal_defined << ','
                << csv_quantile_field(m.median_bov) << ','
                << csv_quantile_field(m.mean_rof) << "\n";
    char line[128];
    std::snprintf(line, sizeof line, "%-20s %4d  %-14.8g  %-10.6g\n",
                  label.c_str(), m.runs,
                  m.median_bov, m.mean_rof);
    table << line;

    std::ostringstream bands;
    bands << "k,q25,q50,q75\n";
    for (std::size_t i = 0; i < m.ks.size(); ++i)
      bands << m.ks[i] << ',' << csv_quantile_field(m.q25[i]) << ','
            << csv_quantile_field(m.q50[i]) << ','
            << csv_quantile_field(m.q75[i]) << "\n";
    write_text_file(base / ("bands_" + label + ".csv"), bands.str());
  }

  if (!any) {
    err << "error: no usable trajectories in " << dir << "\n";
    for (const std::string& e : excluded) err << "  excluded: " << e << "\n";
    return 1;
  }
  write_text_file(base / "summary.csv", summary_csv.str());
  out << table.str();
  for (const std::string& e : excluded) err << "excluded: " << e << "\n";
  return excluded.empty() ? 0 : 2;
}

namespace {

// Six-point fixture on the 1-D problem: two feasible points near the narrow
// valley, four infeasible ones around it.
const std::vector<double> kFixture1d = {2.5, 3.7, 4.2, 4.25, 4.7, 5.0};

struct Fixture1d {
  Eigen::MatrixXd X;
  std::vector<EvaluationRecord> records;
};

Fixture1d evaluate_fixture_1d(const Problem& p) {
  Fixture1d fx;
  fx.X.resize(1, static_cast<Eigen::Index>(kFixture1d.size()));
  for (std::size_t i = 0; i < kFixture1d.size(); ++i) {
    fx.X(0, static_cast<Eigen::Index>(i)) = kFixture1d[i];
    Eigen::VectorXd x(1);
    x << kFixture1d[i];
    fx.records.push_back(p.evaluate(x));
  }
  return fx;
}

std::string beta_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

int demo_fig1(const fs::path& dir, std::ostream& out) {
  const Problem p = make_builtin_problem("illustrative1d");
  const Fixture1d fx = evaluate_fixture_1d(p);

  GpTrainingSet obj;
  obj.X = fx.X;
  obj.y.resize(fx.X.cols());
  obj.noise_variances = Eigen::VectorXd::Zero(fx.X.cols());
  for (Eigen::Index i = 0; i < fx.X.cols(); ++i)
    obj.y(i) = *fx.records[static_cast<std::size_t>(i)].objective;

  SurrogateBundle bundle;
  bundle.objective = gp_fit(obj, 5, derive_seed(0, "demo:fig1:obj"));
  std::vector<ConstraintObservation> cons;
  for (const EvaluationRecord& r : fx.records)
    cons.push_back(r.constraints[0]);
  bundle.constraints.push_back(
      {fit_hlgp_auto(fx.X, cons, {}, 5, derive_seed(0, "demo:fig1:con"))});
  for (const EvaluationRecord& r : fx.records)
    if (r.feasible && r.objective &&
        (!bundle.best_feasible || *r.objective < *bundle.best_feasible))
      bundle.best_feasible = *r.objective;

  const std::vector<double> betas = {0.0, 0.5, 1.0, 1.96};
  std::vector<AcquisitionSpec> specs;
  for (std::size_t b = 0; b < betas.size(); ++b) {
    AcquisitionSpec spec;
    spec.exploration = ExplorationKind::Emub;
    spec.beta = betas[b];
    spec.gamma = adapt_gamma(bundle, spec, p.lower, p.upper, 2048,
                             derive_seed(0, "demo:fig1:gamma", b));
    specs.push_back(spec);
  }

  std::ostringstream s;
  s << "x,obj_mean,obj_std,con_mean,con_std,ei,pof";
  for (double b : betas) s << ",dpof_b" << beta_tag(b);
  s << ",eicb_b1.96\n";
  for (int j = 0; j <= 2500; ++j) {
    Eigen::VectorXd x(1);
    x << 2.5 + 1e-3 * j;
    const GpPrediction po = gp_predict(*bundle.objective, x);
    const LatentState pc = bundle.constraints[0].state(x);
    s << format_double(x(0)) << ',' << format_double(po.mean) << ','
      << format_double(std::sqrt(po.variance)) << ','
      << format_double(pc.mean) << ',' << format_double(pc.std_dev) << ','
      << format_double(expected_improvement(*bundle.best_feasible, po.mean,
                                            std::sqrt(po.variance)))
      << ',' << format_double(pof(bundle, specs.back(), x));
    for (const AcquisitionSpec& spec : specs)
      s << ',' << format_double(dpof(bundle, spec, x));
    s << ',' << format_double(eicb(bundle, specs.back(), x)) << "\n";
  }
  write_text_file(dir / "fig1_curves.csv", s.str());

  std::ostringstream o;
  o << "x,f,g,feasible\n";
  for (const EvaluationRecord& r : fx.records)
    o << format_double(r.x(0)) << ',' << format_double(*r.objective) << ','
      << format_double(r.constraints[0].value) << ',' << (r.feasible ? 1 : 0)
      << "\n";
  write_text_file(dir / "fig1_observations.csv", o.str());
  out << "wrote fig1_curves.csv and fig1_observations.csv\n";
  return 0;
}

int demo_fig2(const fs::path& dir, std::ostream& out) {
  const Problem p = make_builtin_problem("illustrative1d-po");
  const Fixture1d fx = evaluate_fixture_1d(p);

  std::vector<ConstraintObservation> cons;
  for (const EvaluationRecord& r : fx.records)
    cons.push_back(r.constraints[0]);
  const HlgpModel hlgp =
      fit_hlgp_auto(fx.X, cons, {}, 5, derive_seed(0, "demo:fig2:con"));

  // Contrast model: a plain GP that can only use the measured values.
  std::vector<Eigen::Index> valued;
  for (Eigen::Index i = 0; i < fx.X.cols(); ++i)
    if (cons[static_cast<std::size_t>(i)].kind == ObsKind::Value)
      valued.push_back(i);
  GpTrainingSet vt;
  vt.X.resize(1, static_cast<Eigen::Index>(valued.size()));
  vt.y.resize(static_cast<Eigen::Index>(valued.size()));
  vt.noise_variances =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(valued.size()));
  for (std::size_t j = 0; j < valued.size(); ++j) {
    vt.X(0, static_cast<Eigen::Index>(j)) = fx.X(0, valued[j]);
    vt.y(static_cast<Eigen::Index>(j)) =
        cons[static_cast<std::size_t>(valued[j])].value;
  }
  const GpModel value_only =
      gp_fit(vt, 5, derive_seed(0, "demo:fig2:valueonly"));

  std::ostringstream s;
  s << "x,hlgp_mean,hlgp_std,valueonly_mean,valueonly_std,true_g\n";
  for (int j = 0; j <= 10000; ++j) {
    Eigen::VectorXd x(1);
    x << 1e-3 * j;
    const GpPrediction ph = hlgp_predict(hlgp, x);
    const GpPrediction pv = gp_predict(value_only, x);
    s << format_double(x(0)) << ',' << format_double(ph.mean) << ','
      << format_double(std::sqrt(ph.variance)) << ','
      << format_double(pv.mean) << ',' << format_double(std::sqrt(pv.variance))
      << ',' << format_double(p.constraint_values(x)(0)) << "\n";
  }
  write_text_file(dir / "fig2_curves.csv", s.str());

  std::ostringstream o;
  o << "x,kind,g,feasible\n";
  for (const EvaluationRecord& r : fx.records) {
    const ConstraintObservation& c = r.constraints[0];
    o << format_double(r.x(0)) << ','
      << (c.kind == ObsKind::Value ? "value" : "flag") << ','
      << (c.kind == ObsKind::Value ? format_double(c.value) : std::string())
      << ',' << (r.feasible ? 1 : 0) << "\n";
  }
  write_text_file(dir / "fig2_observations.csv", o.str());
  out << "wrote fig2_curves.csv and fig2_observations.csv\n";
  return 0;
}

int demo_fig3(const fs::path& dir, std::ostream& out) {
  const Problem p = make_builtin_problem("hlgp-demo-2d");
  Eigen::MatrixXd X(2, 36);
  std::vector<EvaluationRecord> records;
  int col = 0;
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      Eigen::VectorXd x(2);
      x << a / 5.0, b / 5.0;
      X.col(col++) = x;
      records.push_back(p.evaluate(x));
    }

  std::vector<ConstraintObservation> cons;
  std::vector<int> labels;
  for (const EvaluationRecord& r : records) {
    cons.push_back(r.constraints[0]);
    labels.push_back(r.feasible ? -1 : 1);
  }
  const HlgpModel hlgp =
      fit_hlgp_auto(X, cons, {}, 5, derive_seed(0, "demo:fig3:hlgp"));
  const GpcModel gpc =
      fit_gpc_auto(X, labels, {}, 5, derive_seed(0, "demo:fig3:gpc"));

  std::ostringstream s;
  s << "x_1,x_2,hlgp_mean,hlgp_std,gpc_prob,true_g,true_feasible\n";
  for (int a = 0; a < 200; ++a)
    for (int b = 0; b < 200; ++b) {
      Eigen::VectorXd x(2);
      x << a / 199.0, b / 199.0;
      const GpPrediction ph = hlgp_predict(hlgp, x);
      const double prob = gpc_class_probability(gpc, x);
      const double g = p.constraint_values(x)(0);
      s << format_double(x(0)) << ',' << format_double(x(1)) << ','
        << format_double(ph.mean) << ',' << format_double(std::sqrt(ph.variance))
        << ',' << format_double(prob) << ',' << format_double(g) << ','
        << (g <= 0 ? 1 : 0) << "\n";
    }
  write_text_file(dir / "fig3_grid.csv", s.str());

  std::ostringstream o;
  o << "x_1,x_2,kind,g,feasible\n";
  for (const EvaluationRecord& r : records) {
    const ConstraintObservation& c = r.constraints[0];
    o << format_double(r.x(0)) << ',' << format_double(r.x(1)) << ','
      << (c.kind == ObsKind::Value ? "value" : "flag") << ','
      << (c.kind == ObsKind::Value ? format_double(c.value) : std::string())
      << ',' << (r.feasible ? 1 : 0) << "\n";
  }
  write_text_file(dir / "fig3_observations.csv", o.str());
  out << "wrote fig3_grid.csv and fig3_observations.csv\n";
  return 0;
}

int demo_figB1(const fs::path& dir, std::ostream& out) {
  const Problem p = make_builtin_problem("illustrative1d");
  const Fixture1d fx = evaluate_fixture_1d(p);
  SurrogateBundle bundle;
  std::vector<ConstraintObservation> cons;
  for (const EvaluationRecord& r : fx.records)
    cons.push_back(r.constraints[0]);
  bundle.constraints.push_back(
      {fit_hlgp_auto(fx.X, cons, {}, 5, derive_seed(0, "demo:figB1:con"))});

  const std::vector<double> betas = {0.5, 1.96, 3.0};
  const std::vector<double> gammas = {0.5, 1.0, 2.0};
  struct Column {
    std::string name;
    AcquisitionSpec spec;
  };
  std::vector<Column> columns;
  for (std::size_t b = 0; b < betas.size(); ++b) {
    for (double g : gammas) {
      AcquisitionSpec spec;
      spec.exploration = ExplorationKind::Emub;
      spec.beta = betas[b];
      spec.gamma = Eigen::VectorXd::Constant(1, g);
      columns.push_back(
          {"dpof_b" + beta_tag(betas[b]) + "_g" + beta_tag(g), spec});
    }
    AcquisitionSpec spec;
    spec.exploration = ExplorationKind::Emub;
    spec.beta = betas[b];
    spec.gamma = adapt_gamma(bundle, spec, p.lower, p.upper, 2048,
                             derive_seed(0, "demo:figB1:gamma", b));
    columns.push_back({"dpof_b" + beta_tag(betas[b]) + "_adapt", spec});
  }

  std::ostringstream s;
  s << "x";
  for (const Column& c : columns) s << ',' << c.name;
  s << "\n";
  for (int j = 0; j <= 2500; ++j) {
    Eigen::VectorXd x(1);
    x << 2.5 + 1e-3 * j;
    s << format_double(x(0));
    for (const Column& c : columns)
      s << ',' << format_double(dpof(bundle, c.spec, x));
    s << "\n";
  }
  write_text_file(dir / "figB1_curves.csv", s.str());
  out << "wrote figB1_curves.csv\n";
  return 0;
}

}  // namespace

int cmd_demo(const std::string& figure_id, const std::string& out_dir,
             bool force, std::ostream& out, std::ostream& err) {
  if (figure_id != "fig1" && figure_id != "fig2" && figure_id != "fig3" &&
      figure_id != "figB1") {
    err << "error: unknown figure id '" << figure_id
        << "' (expected fig1, fig2, fig3, or figB1)\n";
    return 1;
  }
  if (const int rc = ensure_output_dir(out_dir, force, err)) return rc;
  const fs::path dir(out_dir);
  if (figure_id == "fig1") return demo_fig1(dir, out);
  if (figure_id == "fig2") return demo_fig2(dir, out);
  if (figure_id == "fig3") return demo_fig3(dir, out);
  return demo_figB1(dir, out);
}

int cmd_list_problems(std::ostream& out) {
  for (const std::string& name : builtin_problem_names()) {
    const Problem p = make_builtin_problem(name);
    out << name << "  dim=" << p.dim()
        << "  constraints=" << p.constraint_count()
        << "  scenario=" << to_string(p.scenario) << "  box=[";
    const bool uniform = (p.lower.array() == p.lower(0)).all() &&
                         (p.upper.array() == p.upper(0)).all();
    if (uniform) {
      out << format_double(p.lower(0)) << ", " << format_double(p.upper(0))
          << "]^" << p.dim();
    } else {
      for (Eigen::Index i = 0; i < p.dim(); ++i)
        out << (i ? " x [" : "[") << format_double(p.lower(i)) << ", "
            << format_double(p.upper(i)) << "]";
      out << "]";
    }
    out << "\n";
  }
  return 0;
}

}  // namespace cbob
