#include "deepteam/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "deepteam/bounds.hpp"
#include "deepteam/dss.hpp"
#include "deepteam/error.hpp"
#include "deepteam/io.hpp"
#include "deepteam/model_io.hpp"
#include "deepteam/pdss.hpp"
#include "deepteam/service.hpp"
#include "deepteam/sim.hpp"

namespace deepteam {

namespace {

struct Flags {
  std::string model;
  std::string out;
  std::uint64_t cap = kDefaultCap;
  int workers = 1;
  bool force = false;
  std::uint64_t seed = 1;
  int levels = 0;
  std::string observed;
  std::string quantize;
  double beta = 0.0;
  double tol = 1e-6;
  int reps = 1000;
  std::string ns;
  int probes = 64;
  // simulate / gap
  std::string strategy = "dss", strategy_b = "dss";
  int trajectories = 1;
  // bounds
  double H3 = -1.0, H4 = -1.0, C = -1.0;
  int pairs = 2000, r_probe = 4;
  bool hypercube = false;
  // example
  std::string r_rule = "n";
  int users = 200;
  bool model_only = false;
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<bool> parse_mask(const TeamModel& model, const std::string& list, const char* flag) {
  std::vector<bool> mask(model.K(), false);
  if (list == "none") return mask;
  for (const auto& item : split(list)) {
    std::size_t k = model.K();
    for (std::size_t j = 0; j < model.K(); ++j)
      if (model.subpops[j].name == item) k = j;
    if (k == model.K()) {
      char* end = nullptr;
      const long v = std::strtol(item.c_str(), &end, 10);
      if (*end != '\0' || v < 0 || static_cast<std::size_t>(v) >= model.K())
        throw ValidationError(std::string(flag) + ": unknown sub-population '" + item + "'");
      k = static_cast<std::size_t>(v);
    }
    mask[k] = true;
  }
  return mask;
}

std::vector<int> parse_ns(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split(s)) {
    char* end = nullptr;
    const long v = std::strtol(item.c_str(), &end, 10);
    if (*end != '\0' || v < 1) throw ValidationError("--ns: expected positive integers, got '" + item + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

TeamModel load(const Flags& f) {
  TeamModel model = load_model_file(f.model);
  if (f.beta > 0.0) {
    if (!(f.beta < 1.0)) throw ValidationError("--beta: must lie in (0,1)");
    if (!model.time_homogeneous) throw ValidationError("--beta: the model is time-dependent");
    model.horizon.beta = f.beta;
  }
  const auto report = validate_model(model, f.probes, f.seed);
  if (!report.valid()) throw ValidationError("model: " + report.violations.front() + " (" +
                                             std::to_string(report.violations.size()) + " violations)");
  return model;
}

SolveOptions solve_opts(const Flags& f) {
  SolveOptions o;
  o.cap = f.cap;
  o.workers = f.workers;
  return o;
}

std::string path_in(const Flags& f, const std::string& name) { return f.out + "/" + name; }

void write_solution(const Flags& f, const TeamModel& model, const DpSolution& sol, const char* key_name) {
  CsvBuilder values, policy, laws, summary;
  values.header({"t", key_name, "value"});
  policy.header({"t", key_name, "gamma_index"});
  std::set<std::uint32_t> used;
  for (std::size_t i = 0; i < sol.values.size(); ++i) {
    const std::string t = sol.stationary ? "-1" : std::to_string(i + 1);
    for (std::size_t s = 0; s < sol.values[i].size(); ++s) {
      values.row({t, std::to_string(s), fmt(sol.values[i][s])});
      policy.row({t, std::to_string(s), std::to_string(sol.policy[i][s])});
      used.insert(sol.policy[i][s]);
    }
  }
  laws.header({"gamma_index", "subpop", "state", "action"});
  for (auto a : used) {
    const LocalLaw g = sol.laws.law(a);
    for (std::size_t k = 0; k < model.K(); ++k)
      for (std::size_t x = 0; x < g.action[k].size(); ++x)
        laws.row({std::to_string(a), model.subpops[k].name, model.subpops[k].states[x],
                  model.subpops[k].actions[static_cast<std::size_t>(g.action[k][x])]});
  }
  summary.header({"quantity", "value"});
  summary.row({"optimal_cost", fmt(sol.optimal_cost)});
  summary.row({"states", std::to_string(sol.space.size())});
  summary.row({"laws", std::to_string(sol.laws.size())});
  summary.row({"iterations", std::to_string(sol.iterations)});
  summary.row({"levels", std::to_string(sol.r)});
  write_file_atomic(path_in(f, "values.csv"), values.str(), f.force);
  write_file_atomic(path_in(f, "policy.csv"), policy.str(), f.force);
  write_file_atomic(path_in(f, "laws.csv"), laws.str(), f.force);
  write_file_atomic(path_in(f, "summary.csv"), summary.str(), f.force);
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

void write_tree(const Flags& f, const TreeSolution& sol) {
  CsvBuilder values, policy, summary;
  values.header({"t", "tree_key", "value"});
  policy.header({"t", "tree_key", "gamma_index"});
  for (const auto& [key, v] : sol.values) {
    const std::string t = key.substr(0, key.find('|'));
    values.row({t, quoted(key), fmt(v)});
    policy.row({t, quoted(key), std::to_string(sol.policy.at(key))});
  }
  summary.header({"quantity", "value"});
  summary.row({"optimal_cost", fmt(sol.expected_value)});
  summary.row({"nodes", std::to_string(sol.nodes)});
  summary.row({"laws", std::to_string(sol.laws.size())});
  write_file_atomic(path_in(f, "values.csv"), values.str(), f.force);
  write_file_atomic(path_in(f, "policy.csv"), policy.str(), f.force);
  write_file_atomic(path_in(f, "summary.csv"), summary.str(), f.force);
}

void require_levels(const Flags& f) {
  if (f.levels < 1) throw ValidationError("--levels: a positive number of quantization levels is required");
}

std::unique_ptr<Strategy> make_strategy(const std::string& spec, const TeamModel& model, const Flags& f) {
  const SolveOptions o = solve_opts(f);
  const bool disc = model.horizon.discounted();
  if (spec == "dss") {
    auto sol = std::make_shared<DpSolution>(disc ? value_iteration_dss(model, f.tol, o) : solve_dss_finite(model, o));
    return std::make_unique<TableStrategy>(sol, spec);
  }
  if (spec == "dss-quantized") {
    require_levels(f);
    const auto R = parse_mask(model, f.quantize, "--quantize-subpops");
    auto sol = std::make_shared<DpSolution>(disc ? value_iteration_dss_quantized(model, f.levels, R, f.tol, o)
                                                 : solve_dss_quantized(model, f.levels, R, o));
    return std::make_unique<TableStrategy>(sol, spec);
  }
  if (spec == "pdss-quantized") {
    require_levels(f);
    const auto S = parse_mask(model, f.observed, "--observed");
    auto sol = std::make_shared<DpSolution>(disc ? value_iteration_pdss_quantized(model, S, f.levels, f.tol, o)
                                                 : solve_pdss_quantized_finite(model, S, f.levels, o));
    return std::make_unique<TableStrategy>(sol, spec);
  }
  if (spec == "pdss-exact") {
    const auto S = parse_mask(model, f.observed, "--observed");
    auto sol = std::make_shared<TreeSolution>(solve_pdss_exact_small(model, S, o));
    return std::make_unique<TreeStrategy>(sol, model, spec);
  }
  if (spec.rfind("open-loop:", 0) == 0) {
    std::vector<std::uint64_t> seq;
    for (const auto& item : split(spec.substr(10))) seq.push_back(std::stoull(item));
    return std::make_unique<OpenLoopStrategy>(model, seq, spec);
  }
  throw ValidationError("--strategy: expected dss, dss-quantized, pdss-quantized, pdss-exact or open-loop:i,j,..");
}

SimOptions sim_opts(const Flags& f) {
  SimOptions s;
  s.reps = f.reps;
  s.seed = f.seed;
  s.workers = f.workers;
  s.cap = f.cap;
  return s;
}

int cmd_validate(const Flags& f) {
  TeamModel model = load_model_file(f.model);
  const auto report = validate_model(model, f.probes, f.seed);
  for (const auto& v : report.violations) std::cout << v << "\n";
  if (!f.out.empty()) {
    CsvBuilder csv;
    csv.header({"violation"});
    for (const auto& v : report.violations) csv.row({quoted(v)});
    write_file_atomic(path_in(f, "validation.csv"), csv.str(), f.force);
  }
  if (!report.valid()) {
    std::cerr << "error: validation: " << report.violations.size() << " violations\n";
    return 2;
  }
  std::cout << "valid\n";
  return 0;
}

int cmd_solve(const std::string& which, const Flags& f) {
  const TeamModel model = load(f);
  const SolveOptions o = solve_opts(f);
  if (which == "dss") {
    write_solution(f, model, solve_dss_finite(model, o), "state_rank");
  } else if (which == "dss-quantized") {
    require_levels(f);
    const auto R = parse_mask(model, f.quantize, "--quantize-subpops");
    write_solution(f, model,
                   model.horizon.discounted() ? value_iteration_dss_quantized(model, f.levels, R, f.tol, o)
                                              : solve_dss_quantized(model, f.levels, R, o),
                   "grid_key");
  } else if (which == "pdss-exact") {
    write_tree(f, solve_pdss_exact_small(model, parse_mask(model, f.observed, "--observed"), o));
  } else if (which == "pdss-quantized") {
    require_levels(f);
    const auto S = parse_mask(model, f.observed, "--observed");
    write_solution(f, model,
                   model.horizon.discounted() ? value_iteration_pdss_quantized(model, S, f.levels, f.tol, o)
                                              : solve_pdss_quantized_finite(model, S, f.levels, o),
                   "grid_key");
  } else {
    write_solution(f, model, value_iteration_dss(model, f.tol, o), "state_rank");
  }
  return 0;
}

int cmd_simulate(const Flags& f) {
  const TeamModel model = load(f);
  auto strategy = make_strategy(f.strategy, model, f);
  const SimOptions so = sim_opts(f);
  const Evaluation e = evaluate_strategy(model, *strategy, so);
  int steps = e.steps;
  if (steps == 0) steps = model.horizon.T;
  CsvBuilder traj, costs, summary;
  traj.header({"rep", "t", "subpop", "state_symbol", "count"});
  costs.header({"rep", "t", "cost"});
  for (int rep = 0; rep < f.trajectories; ++rep) {
    const Trajectory tr = simulate_rollout(model, *strategy, steps, f.seed, static_cast<std::uint64_t>(rep));
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      for (std::size_t k = 0; k < model.K(); ++k)
        for (std::size_t x = 0; x < tr.states[t][k].size(); ++x)
          traj.row({std::to_string(rep), std::to_string(t + 1), model.subpops[k].name, model.subpops[k].states[x],
                    std::to_string(tr.states[t][k][x])});
      costs.row({std::to_string(rep), std::to_string(t + 1), fmt(tr.costs[t])});
    }
  }
  summary.comment(e.exact ? "exact outcome enumeration" : "Monte Carlo, " + std::to_string(e.steps) +
                                                               " steps, truncation remainder " + fmt(e.truncation_remainder));
  summary.header({"strategy", "J_mean", "CI_half", "reps", "seed"});
  summary.row({strategy->name(), fmt(e.mean), fmt(e.ci_half), std::to_string(e.reps), std::to_string(f.seed)});
  write_file_atomic(path_in(f, "trajectories.csv"), traj.str(), f.force);
  write_file_atomic(path_in(f, "trajectory_costs.csv"), costs.str(), f.force);
  write_file_atomic(path_in(f, "summary.csv"), summary.str(), f.force);
  return 0;
}

int cmd_gap(const Flags& f) {
  const TeamModel model = load(f);
  auto a = make_strategy(f.strategy, model, f);
  auto b = make_strategy(f.strategy_b, model, f);
  const GapEstimate g = empirical_gap(model, *a, *b, sim_opts(f));
  CsvBuilder csv;
  csv.comment(g.exact ? "exact outcome enumeration" : "Monte Carlo with common random numbers");
  csv.header({"strategy_a", "strategy_b", "gap", "diff", "CI_half", "reps", "seed"});
  csv.row({a->name(), b->name(), fmt(g.gap), fmt(g.diff), fmt(g.ci_half), std::to_string(g.reps), std::to_string(f.seed)});
  write_file_atomic(path_in(f, "gap.csv"), csv.str(), f.force);
  return 0;
}

int cmd_bounds(const Flags& f) {
  const TeamModel model = load(f);
  LipschitzProfile prof;
  const bool supplied = f.H3 >= 0.0 && f.H4 >= 0.0;
  if (supplied) {
    prof = supplied_profile(f.H3, f.H4, f.C >= 0.0 ? f.C : default_population_constant(model));
  } else {
    if (f.H3 >= 0.0 || f.H4 >= 0.0) throw ValidationError("--H3 and --H4 must be supplied together");
    LipschitzOptions lo;
    lo.pairs = f.pairs;
    lo.r_probe = f.r_probe;
    lo.seed = f.seed;
    lo.workers = f.workers;
    lo.hypercube = f.hypercube;
    prof = estimate_lipschitz(model, lo);
    if (f.C >= 0.0) prof.C = f.C;
  }
  const bool disc = model.horizon.discounted();
  h_recursions(prof, disc ? 1 : model.horizon.T);
  std::vector<int> ns = parse_ns(f.ns);
  if (ns.empty()) {
    int n = std::numeric_limits<int>::max();
    for (const auto& sp : model.subpops)
      if (!sp.major) n = std::min(n, sp.size);
    if (n == std::numeric_limits<int>::max()) n = 1;
    ns.push_back(n);
  }
  const double r = f.levels >= 1 ? f.levels : kInfiniteLevels;
  const std::string rs = f.levels >= 1 ? std::to_string(f.levels) : "inf";
  const std::string src = prof.supplied ? "supplied" : "estimated";
  CsvBuilder csv;
  if (!prof.supplied)
    csv.comment("estimated constants are probabilistic: " + std::to_string(prof.pairs) + " probe pairs, r_probe " +
                std::to_string(prof.r_probe) + ", max ratio " + fmt(prof.max_ratio));
  csv.header({"quantity", "value", "mode", "n", "r", "beta", "H5_1", "H6_1", "C", "estimated_or_supplied"});
  const std::string beta = disc ? fmt(model.horizon.beta) : "";
  for (int n : ns) {
    auto row = [&](const std::string& q, double v, const std::string& mode, const std::string& rr) {
      csv.row({q, fmt(v), mode, std::to_string(n), rr, beta, fmt(prof.H5_1()), fmt(prof.H6_1()), fmt(prof.C), src});
    };
    if (disc) {
      row("epsilon_discounted", epsilon_discounted(prof, n, model.horizon.beta, r), f.levels >= 1 ? "both" : "poi", rs);
    } else {
      row("epsilon", epsilon_finite(prof, n, kInfiniteLevels, BoundMode::PoI), "poi", "inf");
      if (f.levels >= 1) {
        row("epsilon", epsilon_finite(prof, n, r, BoundMode::PoC), "poc", rs);
        row("epsilon", epsilon_finite(prof, n, r, BoundMode::Both), "both", rs);
      }
    }
  }
  write_file_atomic(path_in(f, "bounds.csv"), csv.str(), f.force);
  return 0;
}

int cmd_example(const Flags& f) {
  ServiceParams p;
  p.n = f.users;
  if (f.model_only) {
    write_file_atomic(path_in(f, "service.json"), service_model_json(p).dump(2) + "\n", f.force);
    return 0;
  }
  FigureOptions o;
  if (!f.ns.empty()) o.ns = parse_ns(f.ns);
  o.r_rule = f.r_rule;
  o.tol = f.tol;
  o.reps = f.reps;
  o.seed = f.seed;
  o.workers = f.workers;
  o.cap = f.cap;
  o.force = f.force;
  for (int n : o.ns) levels_for(o.r_rule, n);
  for (const auto& path : reproduce_figures(p, f.out, o)) std::cout << path << "\n";
  return 0;
}

std::uint64_t env_cap() {
  if (const char* v = std::getenv("DEEPTEAM_CAP")) {
    char* end = nullptr;
    const unsigned long long c = std::strtoull(v, &end, 10);
    if (*end != '\0' || c == 0) throw ValidationError("DEEPTEAM_CAP: expected a positive integer");
    return c;
  }
  return kDefaultCap;
}

}  // namespace

int run_cli(int argc, char** argv) {
  Flags f;
  try {
    f.cap = env_cap();
  } catch (const ValidationError& e) {
    std::cerr << "error: validation: " << e.what() << "\n";
    return 2;
  }
  CLI::App app{"Solver and simulator for deep structured teams"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  auto common = [&](CLI::App* c, bool out_required) {
    c->add_option("model", f.model, "Model JSON file")->required()->check(CLI::ExistingFile);
    auto* o = c->add_option("--out", f.out, "Output directory");
    if (out_required) o->required();
    c->add_option("--cap", f.cap, "Enumeration cap (also DEEPTEAM_CAP)");
    c->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
    c->add_flag("--force", f.force, "Overwrite existing output files");
    c->add_option("--beta", f.beta, "Override the model with a discounted horizon");
    c->add_option("--probes", f.probes, "Validation probe count")->check(CLI::PositiveNumber);
  };
  auto solver = [&](CLI::App* c) {
    c->add_option("--levels", f.levels, "Quantization levels r");
    c->add_option("--observed", f.observed, "Observed sub-populations (names or indices, comma separated, or none)");
    c->add_option("--quantize-subpops", f.quantize, "Sub-populations whose deep states are quantized");
    c->add_option("--tol", f.tol, "Value-iteration tolerance")->check(CLI::PositiveNumber);
  };
  auto stochastic = [&](CLI::App* c) {
    c->add_option("--seed", f.seed, "Master seed")->required();
    c->add_option("--reps", f.reps, "Monte Carlo replications")->check(CLI::Range(2, 100000000));
  };

  auto* validate = app.add_subcommand("validate", "Check a model file");
  validate->add_option("model", f.model, "Model JSON file")->required()->check(CLI::ExistingFile);
  validate->add_option("--out", f.out, "Directory for validation.csv");
  validate->add_option("--probes", f.probes, "Pseudo-random probe points")->check(CLI::PositiveNumber);
  validate->add_option("--seed", f.seed, "Probe seed");
  validate->add_flag("--force", f.force, "Overwrite existing output files");

  auto* solve = app.add_subcommand("solve", "Run a dynamic program");
  solve->require_subcommand(1);
  std::string which;
  for (const char* name : {"dss", "dss-quantized", "pdss-exact", "pdss-quantized", "stationary"}) {
    auto* s = solve->add_subcommand(name, std::string("Solver: ") + name);
    common(s, true);
    solver(s);
    s->callback([&which, name] { which = name; });
  }

  auto* simulate = app.add_subcommand("simulate", "Evaluate a strategy by rollouts or exact enumeration");
  common(simulate, true);
  solver(simulate);
  stochastic(simulate);
  simulate->add_option("--strategy", f.strategy, "dss | dss-quantized | pdss-quantized | pdss-exact | open-loop:i,j,..");
  simulate->add_option("--trajectories", f.trajectories, "Replications written to trajectories.csv")->check(CLI::NonNegativeNumber);

  auto* gap = app.add_subcommand("gap", "Paired cost difference of two strategies");
  common(gap, true);
  solver(gap);
  stochastic(gap);
  gap->add_option("--a", f.strategy, "First strategy");
  gap->add_option("--b", f.strategy_b, "Second strategy");

  auto* bounds = app.add_subcommand("bounds", "Lipschitz constants and error bounds");
  common(bounds, true);
  bounds->add_option("--levels", f.levels, "Quantization levels r (omit for r = infinity)");
  bounds->add_option("--ns", f.ns, "Population sizes, comma separated (default: smallest sub-population)");
  bounds->add_option("--seed", f.seed, "Probe seed");
  bounds->add_option("--H3", f.H3, "Supplied dynamics propagation constant");
  bounds->add_option("--H4", f.H4, "Supplied cost propagation constant");
  bounds->add_option("--C", f.C, "Population constant (default max |X||W|)");
  bounds->add_option("--pairs", f.pairs, "Probe pairs per time step")->check(CLI::PositiveNumber);
  bounds->add_option("--r-probe", f.r_probe, "Grid used for probe pairs")->check(CLI::PositiveNumber);
  bounds->add_flag("--hypercube", f.hypercube, "Probe the full hypercube instead of products of simplices");

  auto* example = app.add_subcommand("example", "Built-in examples");
  example->require_subcommand(1);
  auto* service = example->add_subcommand("service", "Service-management team: figure data");
  service->add_option("--out", f.out, "Output directory")->required();
  service->add_option("--ns", f.ns, "User counts for the PDSS sweep (default 10,20,50,100,200)");
  service->add_option("--levels", f.r_rule, "Levels per n: n, sqrt or an integer");
  service->add_option("--n", f.users, "User count for the policy and trajectory figures")->check(CLI::PositiveNumber);
  service->add_option("--seed", f.seed, "Master seed")->required();
  service->add_option("--reps", f.reps, "Replications per gap estimate")->check(CLI::Range(2, 100000000));
  service->add_option("--tol", f.tol, "Value-iteration tolerance")->check(CLI::PositiveNumber);
  service->add_option("--cap", f.cap, "Enumeration cap (also DEEPTEAM_CAP)");
  service->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
  service->add_flag("--force", f.force, "Overwrite existing output files");
  service->add_flag("--model-only", f.model_only, "Only write service.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*validate) return cmd_validate(f);
    if (*solve) return cmd_solve(which, f);
    if (*simulate) return cmd_simulate(f);
    if (*gap) return cmd_gap(f);
    if (*bounds) return cmd_bounds(f);
    if (*service) return cmd_example(f);
  } catch (const ValidationError& e) {
    std::cerr << "error: validation: " << e.what() << "\n";
    return 2;
  } catch (const CapExceeded& e) {
    std::cerr << "error: cap: " << e.what() << "\n";
    return 3;
  } catch (const AssumptionViolation& e) {
    std::cerr << "error: assumption: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace deepteam
