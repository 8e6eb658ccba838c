#include "deepteam/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>

#include "deepteam/bounds.hpp"
#include "deepteam/dss.hpp"
#include "deepteam/error.hpp"
#include "deepteam/io.hpp"
#include "deepteam/parallel.hpp"
#include "deepteam/pdss.hpp"
#include "deepteam/sim.hpp"

namespace deepteam {

namespace {

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt_short(v[i]);
  return s;
}

bool probability(double p) { return p >= 0.0 && p <= 1.0; }

std::string symbol(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void ServiceParams::check() const {
  const std::size_t h = alpha.size();
  if (n < 1) throw ValidationError("service: n must be positive");
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("service: beta must lie in (0,1)");
  if (!probability(mu)) throw ValidationError("service: mu must lie in [0,1]");
  if (h == 0 || q.size() != h || base_const.size() != h || base_slope.size() != h || service_const.size() != h ||
      service_slope.size() != h)
    throw ValidationError("service: option vectors must share one non-empty length");
  for (std::size_t u = 0; u < h; ++u) {
    if (!probability(alpha[u]) || !probability(q[u])) throw ValidationError("service: alpha and q must lie in [0,1]");
    if (base_const[u] < 0 || base_const[u] + base_slope[u] < 0 || service_const[u] < 0 || service_const[u] + service_slope[u] < 0)
      throw ValidationError("service: prices must be nonnegative on [0,1]");
  }
  if (capacities.empty() || capacity_price.size() != capacities.size())
    throw ValidationError("service: capacities and capacity prices must share one non-empty length");
  for (std::size_t i = 0; i < capacities.size(); ++i)
    if (!probability(capacities[i]) || capacity_price[i] < 0) throw ValidationError("service: capacities in [0,1], prices >= 0");
  if (lambda < 0 || patch_price < 0) throw ValidationError("service: lambda and patch price must be nonnegative");
  if (!probability(fault_prob)) throw ValidationError("service: fault probability must lie in [0,1]");
  if (user_init.size() != 2 || !probability(user_init[0]) || std::fabs(user_init[0] + user_init[1] - 1.0) > 1e-12)
    throw ValidationError("service: user_init must be a pmf over two states");
  if (server_init < 0 || static_cast<std::size_t>(server_init) >= capacities.size())
    throw ValidationError("service: server_init out of range");
}

std::string ServiceParams::describe() const {
  return "n=" + std::to_string(n) + " beta=" + fmt_short(beta) + " mu=" + fmt_short(mu) + " alpha=" + join(alpha) + " q=" + join(q) +
         " base_const=" + join(base_const) + " base_slope=" + join(base_slope) + " service_const=" + join(service_const) +
         " service_slope=" + join(service_slope) + " lambda=" + fmt_short(lambda) + " capacities=" + join(capacities) +
         " capacity_price=" + join(capacity_price) + " patch_price=" + fmt_short(patch_price) + " fault_prob=" + fmt_short(fault_prob) +
         " user_init=" + join(user_init) + " server_init=" + fmt_short(capacities[static_cast<std::size_t>(server_init)]);
}

void functionalize(SubPopSpec& sp) {
  if (sp.kernel_depends_on_D) throw std::invalid_argument("functionalize needs a kernel that ignores D");
  const int m = sp.num_states(), nu = sp.num_actions();
  StateActionDist D;
  std::vector<std::vector<double>> cdf(static_cast<std::size_t>(m * nu), std::vector<double>(static_cast<std::size_t>(m)));
  std::vector<double> row(static_cast<std::size_t>(m));
  std::vector<double> cuts{1.0};
  for (int x = 0; x < m; ++x)
    for (int u = 0; u < nu; ++u) {
      sp.kernel(1, x, u, D, row);
      auto& c = cdf[static_cast<std::size_t>(x * nu + u)];
      double s = 0.0;
      for (int y = 0; y < m; ++y) {
        c[static_cast<std::size_t>(y)] = (s += row[static_cast<std::size_t>(y)]);
        if (y + 1 < m && s > 0.0 && s < 1.0) cuts.push_back(s);
      }
    }
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> b;
  for (double v : cuts)
    if (b.empty() || v - b.back() > 1e-12) b.push_back(v);
  if (b.back() < 1.0) b.back() = 1.0;
  const int nw = static_cast<int>(b.size());
  auto next = std::make_shared<std::vector<int>>(static_cast<std::size_t>(m * nu * nw));
  sp.noises.clear();
  std::vector<double> pmf;
  for (int w = 0; w < nw; ++w) {
    sp.noises.push_back("w" + std::to_string(w + 1));
    pmf.push_back(b[static_cast<std::size_t>(w)] - (w ? b[static_cast<std::size_t>(w - 1)] : 0.0));
    for (int x = 0; x < m; ++x)
      for (int u = 0; u < nu; ++u) {
        const auto& c = cdf[static_cast<std::size_t>(x * nu + u)];
        int y = 0;
        while (y + 1 < m && c[static_cast<std::size_t>(y)] < b[static_cast<std::size_t>(w)] - 1e-12) ++y;
        (*next)[static_cast<std::size_t>((x * nu + u) * nw + w)] = y;
      }
  }
  sp.noise_pmf = {pmf};
  sp.dynamics = [next, nu, nw](int, int x, int u, const StateActionDist&, int w) {
    return (*next)[static_cast<std::size_t>((x * nu + u) * nw + w)];
  };
}

TeamModel build_service_model(const ServiceParams& p) {
  p.check();
  TeamModel model;
  const int h = static_cast<int>(p.alpha.size());

  SubPopSpec users;
  users.name = "users";
  users.size = p.n;
  users.states = {"0", "1"};
  for (int u = 1; u <= h; ++u) users.actions.push_back(std::to_string(u));
  users.init_pmf = p.user_init;
  users.kernel_depends_on_D = false;
  const auto alpha = p.alpha, q = p.q;
  const double mu = p.mu;
  users.kernel = [alpha, q, mu](int, int x, int u, const StateActionDist&, std::span<double> row) {
    const auto i = static_cast<std::size_t>(u);
    if (x == 0) {
      row[1] = (1.0 - alpha[i]) * mu;
      row[0] = 1.0 - row[1];
    } else {
      row[0] = q[i];
      row[1] = 1.0 - q[i];
    }
  };
  functionalize(users);

  SubPopSpec server;
  server.name = "server";
  server.size = 1;
  server.major = true;
  for (double c : p.capacities) server.states.push_back(symbol(c));
  server.actions = server.states;
  server.noises = {"ok", "fault"};
  server.noise_pmf = {{1.0 - p.fault_prob, p.fault_prob}};
  server.init_pmf.assign(p.capacities.size(), 0.0);
  server.init_pmf[static_cast<std::size_t>(p.server_init)] = 1.0;
  server.kernel_depends_on_D = false;
  server.dynamics = [](int, int x, int u, const StateActionDist&, int w) { return w == 1 ? x : u; };

  model.subpops = {users, server};
  const auto bc = p.base_const, bs = p.base_slope, sc = p.service_const, ss = p.service_slope;
  model.cost.per_agent = {
      [bc, bs, sc, ss](int, int x, int u, const StateActionDist& D) {
        const double d = D.state_mass(0, 1);
        const auto i = static_cast<std::size_t>(u);
        return x == 0 ? bc[i] + bs[i] * (1.0 - d) : sc[i] + ss[i] * d;
      },
      [caps = p.capacities, price = p.capacity_price, patch = p.patch_price](int, int x, int u, const StateActionDist&) {
        return price[static_cast<std::size_t>(x)] + patch * std::fabs(caps[static_cast<std::size_t>(u)] - caps[static_cast<std::size_t>(x)]);
      }};
  model.cost.joint = [caps = p.capacities, lambda = p.lambda](int, const StateActionDist& D) {
    double x0 = 0.0;
    for (std::size_t x = 0; x < caps.size(); ++x) x0 += caps[x] * D.state_mass(1, static_cast<int>(x));
    const double e = D.state_mass(0, 1) - x0;
    return lambda * e * e;
  };
  model.horizon.beta = p.beta;
  model.time_homogeneous = true;
  finalize_model(model);
  return model;
}

nlohmann::json service_model_json(const ServiceParams& p) {
  using nlohmann::json;
  TeamModel m = build_service_model(p);
  const auto& users = m.subpops[0];
  const auto& server = m.subpops[1];
  StateActionDist D;
  json unext = json::array();
  for (int x = 0; x < users.num_states(); ++x) {
    json byu = json::array();
    for (int u = 0; u < users.num_actions(); ++u) {
      json byw = json::array();
      for (int w = 0; w < users.num_noises(); ++w) byw.push_back(users.states[static_cast<std::size_t>(users.dynamics(1, x, u, D, w))]);
      byu.push_back(byw);
    }
    unext.push_back(byu);
  }
  json snext = json::array();
  for (int x = 0; x < server.num_states(); ++x) {
    json byu = json::array();
    for (int u = 0; u < server.num_actions(); ++u) byu.push_back(json::array({server.states[static_cast<std::size_t>(u)], server.states[static_cast<std::size_t>(x)]}));
    snext.push_back(byu);
  }
  json ucost = json::array();
  for (int x = 0; x < 2; ++x) {
    json row = json::array();
    for (std::size_t u = 0; u < p.alpha.size(); ++u)
      row.push_back(x == 0 ? fmt_short(p.base_const[u]) + "+" + fmt_short(p.base_slope[u]) + "*(1-d[0,1])"
                           : fmt_short(p.service_const[u]) + "+" + fmt_short(p.service_slope[u]) + "*d[0,1]");
    ucost.push_back(row);
  }
  json scost = json::array();
  for (std::size_t x = 0; x < p.capacities.size(); ++x) {
    json row = json::array();
    for (std::size_t u = 0; u < p.capacities.size(); ++u)
      row.push_back(fmt_short(p.capacity_price[x] + p.patch_price * std::fabs(p.capacities[u] - p.capacities[x])));
    scost.push_back(row);
  }
  std::string x0;
  for (std::size_t x = 0; x < p.capacities.size(); ++x) x0 += (x ? "+" : "") + fmt_short(p.capacities[x]) + "*d[1," + std::to_string(x) + "]";
  const std::string err = "(d[0,1]-(" + x0 + "))";
  return json{
      {"subpops",
       json::array({json{{"name", users.name},
                         {"size", users.size},
                         {"states", users.states},
                         {"actions", users.actions},
                         {"noises", users.noises},
                         {"noise_pmf", users.noise_pmf[0]},
                         {"init_pmf", users.init_pmf},
                         {"kernel", json{{"mode", "function"}, {"next", unext}}}},
                    json{{"name", server.name},
                         {"size", 1},
                         {"major", true},
                         {"states", server.states},
                         {"actions", server.actions},
                         {"noises", server.noises},
                         {"noise_pmf", server.noise_pmf[0]},
                         {"init_pmf", server.init_pmf},
                         {"kernel", json{{"mode", "function"}, {"next", snext}}}}})},
      {"cost",
       json{{"mode", "per_agent"},
            {"per_agent", json{{"users", ucost}, {"server", scost}}},
            {"joint", fmt_short(p.lambda) + "*" + err + "*" + err}}},
      {"horizon", json{{"beta", p.beta}}}};
}

RawAgentModel service_users_raw(const ServiceParams& p, int T) {
  TeamModel m = build_service_model(p);
  auto users = std::make_shared<SubPopSpec>(m.subpops[0]);
  RawAgentModel raw;
  raw.subpop_of.assign(static_cast<std::size_t>(p.n), 0);
  raw.num_states = {users->num_states()};
  raw.num_actions = {users->num_actions()};
  raw.num_noises = {users->num_noises()};
  raw.T = T;
  raw.dynamics = [users](int t, const RawAgentModel::Joint& x, const RawAgentModel::Joint& u, const RawAgentModel::Joint& w) {
    StateActionDist D;
    RawAgentModel::Joint next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = users->dynamics(t, x[i], u[i], D, w[i]);
    return next;
  };
  const auto bc = p.base_const, bs = p.base_slope, sc = p.service_const, ss = p.service_slope;
  raw.cost = [bc, bs, sc, ss](int, const RawAgentModel::Joint& x, const RawAgentModel::Joint& u) {
    double ones = 0.0;
    for (int v : x) ones += v;
    const double n = static_cast<double>(x.size()), d = ones / n;
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto a = static_cast<std::size_t>(u[i]);
      total += x[i] == 0 ? bc[a] + bs[a] * (1.0 - d) : sc[a] + ss[a] * d;
    }
    return total / n;
  };
  return raw;
}

int levels_for(const std::string& r_rule, int n) {
  if (r_rule == "n") return n;
  if (r_rule == "sqrt") return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  try {
    std::size_t used = 0;
    const int r = std::stoi(r_rule, &used);
    if (used == r_rule.size() && r >= 1) return r;
  } catch (const std::exception&) {
  }
  throw ValidationError("r rule must be 'n', 'sqrt' or a positive integer, got '" + r_rule + "'");
}

namespace {

struct Fig3Row {
  int n = 0, r = 0;
  double j_dss = 0.0, diff = 0.0, ci = 0.0, remainder = 0.0, bound = 0.0;
  int reps = 0, steps = 0;
};

}  // namespace

std::vector<std::string> reproduce_figures(const ServiceParams& params, const std::string& outdir,
                                           const FigureOptions& opts) {
  params.check();
  const std::string echo = "params " + params.describe();
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    const std::string path = outdir + "/" + name;
    write_file_atomic(path, text, opts.force);
    written.push_back(path);
  };
  SolveOptions so;
  so.cap = opts.cap;
  so.workers = opts.workers;

  // Stationary DSS policy at the nominal population size.
  const TeamModel model = build_service_model(params);
  auto sol = std::make_shared<DpSolution>(value_iteration_dss(model, opts.tol, so));
  const auto& space = sol->space;
  const auto& users = space.comps[0].lattice;
  CsvBuilder a, b, c;
  for (auto* f : {&a, &b, &c}) f->comment(echo).comment("stationary DSS policy, value-iteration tol " + fmt(opts.tol));
  a.header({"d", "x0", "option"});
  b.header({"d", "x0", "option"});
  c.header({"d", "x0", "u0"});
  for (int ones = 0; ones <= params.n; ++ones) {
    DeepState d{Counts{params.n - ones, ones}, Counts(params.capacities.size(), 0)};
    for (std::size_t x0 = 0; x0 < params.capacities.size(); ++x0) {
      std::fill(d[1].begin(), d[1].end(), 0);
      d[1][x0] = 1;
      const std::uint64_t s = space.strides[0] * users.rank(d[0]) + space.strides[1] * space.comps[1].lattice.rank(d[1]);
      const LocalLaw g = sol->laws.law(sol->policy[0][s]);
      const std::string dv = fmt(ones / static_cast<double>(params.n)), xv = fmt(params.capacities[x0]);
      a.row({dv, xv, model.subpops[0].actions[static_cast<std::size_t>(g.action[0][0])]});
      b.row({dv, xv, model.subpops[0].actions[static_cast<std::size_t>(g.action[0][1])]});
      c.row({dv, xv, fmt(params.capacities[static_cast<std::size_t>(g.action[1][x0])])});
    }
  }
  emit("fig1a.csv", a.str());
  emit("fig1b.csv", b.str());
  emit("fig1c.csv", c.str());

  TableStrategy dss_strategy(sol, "dss");
  const Trajectory tr = simulate_rollout(model, dss_strategy, opts.trajectory_steps, opts.seed, 0);
  CsvBuilder f2;
  f2.comment(echo).comment("seed " + std::to_string(opts.seed) + ", stationary DSS policy");
  f2.header({"t", "d_t", "x0_t"});
  for (std::size_t t = 0; t < tr.states.size(); ++t) {
    const auto& d = tr.states[t];
    std::size_t x0 = 0;
    while (d[1][x0] == 0) ++x0;
    f2.row({std::to_string(t + 1), fmt(d[0][1] / static_cast<double>(params.n)), fmt(params.capacities[x0])});
  }
  emit("fig2.csv", f2.str());

  // PDSS with only the server observed; the user mean-field is quantized with r levels.
  std::vector<Fig3Row> rows(opts.ns.size());
  parallel_for(opts.ns.size(), opts.workers, [&](std::uint64_t lo, std::uint64_t hi) {
    for (std::uint64_t i = lo; i < hi; ++i) {
      ServiceParams pn = params;
      pn.n = opts.ns[i];
      const TeamModel mn = build_service_model(pn);
      SolveOptions one = so;
      one.workers = 1;
      auto dss = std::make_shared<DpSolution>(value_iteration_dss(mn, opts.tol, one));
      const int r = levels_for(opts.r_rule, pn.n);
      LipschitzOptions lo_opts;
      LipschitzProfile prof = estimate_lipschitz(mn, lo_opts);
      auto pdss = std::make_shared<DpSolution>(value_iteration_pdss_quantized(mn, {false, true}, r, opts.tol, one, &prof));
      SimOptions sim;
      sim.reps = opts.reps;
      sim.seed = opts.seed;
      sim.cap = opts.cap;
      const GapEstimate gap = empirical_gap(mn, TableStrategy(pdss, "pdss-quantized"), TableStrategy(dss, "dss"), sim);
      double rem = 0.0;
      const double cbar = estimate_cost_bound(mn);
      std::tie(rows[i].steps, rem) = truncation_horizon(pn.beta, cbar, sim.target_ci);
      h_recursions(prof, 1);
      rows[i] = Fig3Row{pn.n, r, dss->optimal_cost, gap.diff, gap.ci_half, rem,
                        epsilon_discounted(prof, pn.n, pn.beta, r), gap.reps, rows[i].steps};
    }
  });
  CsvBuilder f3, ci;
  f3.comment(echo).comment("observed={server}, r rule " + opts.r_rule + ", reps " + std::to_string(opts.reps) + ", seed " +
                           std::to_string(opts.seed));
  ci.comment(echo).comment("95% half-widths of the paired gap estimate and the discounted bound with estimated constants");
  f3.header({"n", "J_dss", "J_pdss_quantized", "gap"});
  ci.header({"n", "r", "gap_ci_half", "reps", "steps", "truncation_remainder", "epsilon_bound"});
  for (const auto& r : rows) {
    f3.row({std::to_string(r.n), fmt(r.j_dss), fmt(r.j_dss + r.diff), fmt(r.diff)});
    ci.row({std::to_string(r.n), std::to_string(r.r), fmt(r.ci), std::to_string(r.reps), std::to_string(r.steps),
            fmt(r.remainder), fmt(r.bound)});
  }
  emit("fig3.csv", f3.str());
  emit("fig3_ci.csv", ci.str());
  return written;
}

}  // namespace deepteam
