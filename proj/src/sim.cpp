#include "deepteam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

#include "deepteam/parallel.hpp"
#include "deepteam/random.hpp"

namespace deepteam {

TableStrategy::TableStrategy(std::shared_ptr<const DpSolution> sol, std::string name)
    : sol_(std::move(sol)), name_(std::move(name)) {
  for (const auto& c : sol_->space.comps) tracks_mean_ = tracks_mean_ || c.kind == ComponentKind::QuantizedMean;
}

void TableStrategy::reset() {
  mean_.clear();
  last_t_ = 0;
}

std::uint64_t TableStrategy::choose(const TeamModel& model, int t, const DeepState& d) {
  const auto& space = sol_->space;
  if (!sol_->stationary && (t < 1 || t > sol_->T))
    throw Error("uncovered state: time " + std::to_string(t) + " outside the policy horizon");
  if (tracks_mean_) {
    if (last_t_ == 0) {
      mean_.assign(model.K(), {});
      for (std::size_t k = 0; k < model.K(); ++k) {
        const auto& sp = model.subpops[k];
        if (space.comps[k].kind == ComponentKind::QuantizedMean)
          mean_[k] = sp.init_states.empty() ? sp.init_pmf : empirical(sp.init_states, sp.num_states());
      }
    } else {
      mean_ = hat_f(model, last_t_, mean_, last_);
    }
    for (std::size_t k = 0; k < model.K(); ++k) {
      if (space.comps[k].kind == ComponentKind::QuantizedMean) continue;
      mean_[k].resize(d[k].size());
      for (std::size_t x = 0; x < d[k].size(); ++x) mean_[k][x] = d[k][x] / static_cast<double>(model.subpops[k].size);
    }
  }
  const std::uint64_t s = space.locate(d, tracks_mean_ ? &mean_ : nullptr);
  const std::uint64_t a = sol_->policy_at(t)[s];
  if (tracks_mean_) {
    last_ = sol_->laws.law(a);
    last_t_ = t;
  }
  return a;
}

TreeStrategy::TreeStrategy(std::shared_ptr<const TreeSolution> sol, const TeamModel& model, std::string name)
    : sol_(std::move(sol)), name_(std::move(name)) {
  for (std::size_t k = 0; k < model.K(); ++k)
    if (sol_->observed[k]) {
      obs_.push_back(k);
      lattices_.emplace_back(model.subpops[k].size, model.subpops[k].num_states());
    }
  strides_.assign(obs_.size(), 1);
  for (std::size_t j = obs_.size(); j-- > 1;) strides_[j - 1] = strides_[j] * lattices_[j].size();
}

void TreeStrategy::reset() {
  ranks_.clear();
  laws_.clear();
}

std::uint64_t TreeStrategy::choose(const TeamModel&, int t, const DeepState& d) {
  std::uint64_t joint = 0;
  for (std::size_t j = 0; j < obs_.size(); ++j) joint += lattices_[j].rank(d[obs_[j]]) * strides_[j];
  ranks_.push_back(joint);
  const std::string key = tree_key(t, ranks_, laws_);
  auto it = sol_->policy.find(key);
  if (it == sol_->policy.end()) throw Error("uncovered state: t=" + std::to_string(t) + " key " + key);
  laws_.push_back(it->second);
  return it->second;
}

OpenLoopStrategy::OpenLoopStrategy(const TeamModel& model, std::vector<std::uint64_t> laws_by_t, std::string name)
    : laws_(model), seq_(std::move(laws_by_t)), name_(std::move(name)) {
  if (seq_.empty()) throw std::invalid_argument("open-loop strategy needs at least one law");
  for (auto a : seq_)
    if (a >= laws_.size()) throw std::invalid_argument("law index out of range");
}

std::uint64_t OpenLoopStrategy::choose(const TeamModel&, int t, const DeepState&) {
  return seq_[std::min<std::size_t>(static_cast<std::size_t>(t - 1), seq_.size() - 1)];
}

FunctionStrategy::FunctionStrategy(const TeamModel& model, Fn fn, std::string name)
    : laws_(model), fn_(std::move(fn)), name_(std::move(name)) {}

std::uint64_t FunctionStrategy::choose(const TeamModel&, int t, const DeepState& d) {
  history_.push_back(d);
  return fn_(t, history_);
}

namespace {

int inverse_cdf(const std::vector<double>& cdf, double u) {
  for (std::size_t j = 0; j < cdf.size(); ++j)
    if (u < cdf[j]) return static_cast<int>(j);
  // Rounding left u above the last partial sum: take the last atom with positive mass.
  for (std::size_t j = cdf.size(); j-- > 0;)
    if (j == 0 || cdf[j] > cdf[j - 1]) return static_cast<int>(j);
  return 0;
}

std::vector<double> cumulative(const std::vector<double>& p) {
  std::vector<double> c(p.size());
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) c[j] = (s += p[j]);
  return c;
}

DeepState count_agents(const TeamModel& model, const std::vector<std::vector<int>>& agents) {
  DeepState d(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) d[k] = count_symbols(agents[k], model.subpops[k].num_states());
  return d;
}

}  // namespace

std::vector<std::vector<int>> sample_initial_agents(const TeamModel& model, std::mt19937_64& g) {
  std::vector<std::vector<int>> agents(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    if (!sp.init_states.empty()) {
      agents[k] = sp.init_states;
      continue;
    }
    const auto cdf = cumulative(sp.init_pmf);
    agents[k].resize(static_cast<std::size_t>(sp.size));
    for (auto& x : agents[k]) x = inverse_cdf(cdf, uniform01(g));
  }
  return agents;
}

Trajectory rollout_with_draws(const TeamModel& model, Strategy& strategy, int steps,
                              const std::vector<std::vector<int>>& initial, const DrawFn& draw) {
  Trajectory tr;
  std::vector<std::vector<int>> agents = initial;
  const LawSpace& laws = strategy.laws();
  const double beta = model.horizon.discounted() ? model.horizon.beta : 1.0;
  double disc = 1.0;
  strategy.reset();
  for (int t = 1; t <= steps; ++t) {
    DeepState d = count_agents(model, agents);
    const std::uint64_t a = strategy.choose(model, t, d);
    const LocalLaw g = laws.law(a);
    const StateActionDist D = phi(model, deep_state_value(model, d), g);
    const double c = cost_eval(model, t, D);
    tr.states.push_back(std::move(d));
    tr.laws.push_back(a);
    tr.costs.push_back(c);
    tr.total += disc * c;
    disc *= beta;
    if (t == steps) break;
    for (std::size_t k = 0; k < model.K(); ++k) {
      const auto& sp = model.subpops[k];
      const int nx = sp.num_states();
      // Per source state: next-state table over noise symbols, or the kernel row CDF.
      std::vector<std::vector<int>> next(static_cast<std::size_t>(nx));
      std::vector<std::vector<double>> cdf(static_cast<std::size_t>(nx));
      std::vector<double> noise_cdf;
      if (sp.dynamics) noise_cdf = cumulative(sp.noise_at(t));
      std::vector<double> row(static_cast<std::size_t>(nx));
      for (int x = 0; x < nx; ++x) {
        const int u = g.action[k][static_cast<std::size_t>(x)];
        if (sp.dynamics) {
          for (int w = 0; w < sp.num_noises(); ++w) next[static_cast<std::size_t>(x)].push_back(sp.dynamics(t, x, u, D, w));
        } else {
          kernel_row(model, k, t, x, u, D, row);
          cdf[static_cast<std::size_t>(x)] = cumulative(row);
        }
      }
      for (std::size_t i = 0; i < agents[k].size(); ++i) {
        const double uu = draw(t, k, static_cast<int>(i));
        const auto x = static_cast<std::size_t>(agents[k][i]);
        agents[k][i] = sp.dynamics ? next[x][static_cast<std::size_t>(inverse_cdf(noise_cdf, uu))] : inverse_cdf(cdf[x], uu);
      }
    }
  }
  return tr;
}

Trajectory simulate_rollout(const TeamModel& model, const Strategy& strategy, int steps, std::uint64_t seed,
                            std::uint64_t rep) {
  auto g = make_stream(seed, rep);
  const auto initial = sample_initial_agents(model, g);
  auto s = strategy.clone();
  return rollout_with_draws(model, *s, steps, initial, [&](int, std::size_t, int) { return uniform01(g); });
}

std::pair<int, double> truncation_horizon(double beta, double cost_bound, double target_ci) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("truncation needs beta in (0,1)");
  if (cost_bound <= 0.0) return {1, 0.0};
  const double goal = 0.1 * target_ci;
  int T = 1;
  double rem = beta * cost_bound / (1.0 - beta);
  while (rem > goal && T < 100000) {
    rem *= beta;
    ++T;
  }
  return {T, rem};
}

double estimate_cost_bound(const TeamModel& model, std::uint64_t seed) {
  LawSpace laws(model);
  auto g = make_stream(seed, 0);
  std::vector<std::uint64_t> law_ids;
  if (laws.size() <= 64) {
    for (std::uint64_t a = 0; a < laws.size(); ++a) law_ids.push_back(a);
  } else {
    for (int i = 0; i < 64; ++i) law_ids.push_back(g() % laws.size());
  }
  double best = 0.0;
  for (int probe = 0; probe < 256; ++probe) {
    StateDist z(model.K());
    for (std::size_t k = 0; k < model.K(); ++k) {
      const int m = model.subpops[k].num_states();
      z[k].assign(static_cast<std::size_t>(m), 0.0);
      if (probe < m) {
        z[k][static_cast<std::size_t>(probe % m)] = 1.0;
        continue;
      }
      double s = 0.0;
      for (auto& v : z[k]) s += (v = -std::log(1.0 - uniform01(g)));
      for (auto& v : z[k]) v /= s;
    }
    for (auto a : law_ids)
      for (int t : model_times(model)) best = std::max(best, ell(model, t, z, laws.law(a)));
  }
  return best;
}

namespace {

std::vector<std::pair<DeepState, double>> initial_deep_states(const TeamModel& model, std::uint64_t cap) {
  std::vector<std::pair<DeepState, double>> init{{DeepState(model.K()), 1.0}};
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    std::vector<WeightedCounts> w;
    if (!sp.init_states.empty())
      w.push_back({count_symbols(sp.init_states, sp.num_states()), 1.0});
    else
      w = enumerate_noise_empiricals(sp.size, sp.init_pmf, cap);
    std::vector<std::pair<DeepState, double>> next;
    for (const auto& [d, p] : init)
      for (const auto& wc : w) {
        DeepState e = d;
        e[k] = wc.counts;
        next.emplace_back(std::move(e), p * wc.weight);
      }
    init = std::move(next);
  }
  return init;
}

struct ExactWalker {
  const TeamModel& model;
  std::uint64_t cap;
  JointLattice lattice;
  std::map<std::tuple<int, std::uint64_t, std::uint64_t>, TransitionRow> cache;

  double walk(int t, const DeepState& d, Strategy& s) {
    const std::uint64_t a = s.choose(model, t, d);
    const LocalLaw g = s.laws().law(a);
    double v = cost_eval(model, t, phi(model, deep_state_value(model, d), g));
    if (t == model.horizon.T) return v;
    const auto key = std::make_tuple(model.time_homogeneous ? 1 : t, lattice.rank(d), a);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, joint_transition(model, t, d, g, cap)).first;
    const auto entries = it->second.entries;  // copy: the cache may rehash during recursion
    for (const auto& [r, p] : entries) {
      auto child = s.clone();
      v += p * walk(t + 1, lattice.unrank(r), *child);
    }
    return v;
  }
};

}  // namespace

double exact_strategy_cost(const TeamModel& model, const Strategy& strategy, std::uint64_t cap) {
  if (model.horizon.discounted()) throw std::invalid_argument("exact enumeration needs a finite horizon");
  ExactWalker w{model, cap, JointLattice(model, cap), {}};
  double j = 0.0;
  for (const auto& [d, p] : initial_deep_states(model, cap)) {
    auto s = strategy.clone();
    s->reset();
    j += p * w.walk(1, d, *s);
  }
  return j;
}

double outcome_path_bound(const TeamModel& model, std::uint64_t cap) {
  if (model.horizon.discounted()) return std::numeric_limits<double>::infinity();
  double init = 1.0, lat = 1.0;
  for (const auto& sp : model.subpops) {
    const double size = static_cast<double>(count_compositions(sp.size, sp.num_states()));
    lat *= size;
    if (sp.init_states.empty()) {
      int support = 0;
      for (double p : sp.init_pmf) support += p > 0.0;
      init *= static_cast<double>(count_compositions(sp.size, support));
    }
  }
  (void)cap;
  return init * std::pow(lat, model.horizon.T - 1);
}

namespace {

int rollout_steps(const TeamModel& model, const SimOptions& opts, double* remainder) {
  *remainder = 0.0;
  if (!model.horizon.discounted()) return model.horizon.T;
  const double cbar = opts.cost_bound > 0.0 ? opts.cost_bound : estimate_cost_bound(model);
  auto [T, rem] = truncation_horizon(model.horizon.beta, cbar, opts.target_ci);
  *remainder = rem;
  return T;
}

void summarize(const std::vector<double>& x, double* mean, double* ci) {
  const double M = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += v;
  *mean = s / M;
  // Deviations from the first sample, so identical samples give exactly zero spread.
  double d1 = 0.0, d2 = 0.0;
  for (double v : x) {
    d1 += v - x.front();
    d2 += (v - x.front()) * (v - x.front());
  }
  const double ss = std::max(0.0, d2 - d1 * d1 / M);
  *ci = x.size() > 1 ? 1.96 * std::sqrt(ss / (M - 1.0) / M) : 0.0;
}

bool use_exact(const TeamModel& model, const SimOptions& opts) {
  return opts.allow_exact && !model.horizon.discounted() && outcome_path_bound(model, opts.cap) <= opts.exact_path_limit;
}

}  // namespace

Evaluation evaluate_strategy(const TeamModel& model, const Strategy& strategy, const SimOptions& opts) {
  Evaluation e;
  if (use_exact(model, opts)) {
    e.mean = exact_strategy_cost(model, strategy, opts.cap);
    e.exact = true;
    e.steps = model.horizon.T;
    return e;
  }
  if (opts.reps < 2) throw std::invalid_argument("Monte Carlo evaluation needs at least 2 replications");
  e.steps = rollout_steps(model, opts, &e.truncation_remainder);
  std::vector<double> totals(static_cast<std::size_t>(opts.reps));
  parallel_for(totals.size(), opts.workers, [&](std::uint64_t b, std::uint64_t end) {
    for (std::uint64_t j = b; j < end; ++j) totals[j] = simulate_rollout(model, strategy, e.steps, opts.seed, j).total;
  });
  summarize(totals, &e.mean, &e.ci_half);
  e.reps = opts.reps;
  return e;
}

GapEstimate empirical_gap(const TeamModel& model, const Strategy& a, const Strategy& b, const SimOptions& opts) {
  GapEstimate g;
  if (use_exact(model, opts)) {
    g.diff = exact_strategy_cost(model, a, opts.cap) - exact_strategy_cost(model, b, opts.cap);
    g.gap = std::fabs(g.diff);
    g.exact = true;
    return g;
  }
  if (opts.reps < 2) throw std::invalid_argument("Monte Carlo gap needs at least 2 replications");
  double rem = 0.0;
  const int steps = rollout_steps(model, opts, &rem);
  std::vector<double> diffs(static_cast<std::size_t>(opts.reps));
  parallel_for(diffs.size(), opts.workers, [&](std::uint64_t lo, std::uint64_t hi) {
    for (std::uint64_t j = lo; j < hi; ++j)
      diffs[j] = simulate_rollout(model, a, steps, opts.seed, j).total - simulate_rollout(model, b, steps, opts.seed, j).total;
  });
  summarize(diffs, &g.diff, &g.ci_half);
  g.gap = std::fabs(g.diff);
  g.reps = opts.reps;
  return g;
}

}  // namespace deepteam
