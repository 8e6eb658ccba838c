#include "deepteam/pdss.hpp"

#include <cstdio>
#include <limits>
#include <stdexcept>

namespace deepteam {

std::vector<bool> observation_mask(const TeamModel& model, const std::vector<std::size_t>& observed) {
  std::vector<bool> mask(model.K(), false);
  for (std::size_t k : observed) {
    if (k >= model.K()) throw std::invalid_argument("observed sub-population index out of range");
    mask[k] = true;
  }
  return mask;
}

MixedState initial_mixed_state(const TeamModel& model, const std::vector<bool>& observed, const DeepState& d1) {
  MixedState p;
  p.observed = observed;
  p.z.resize(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    if (observed[k]) {
      p.z[k].resize(d1[k].size());
      for (std::size_t x = 0; x < d1[k].size(); ++x) p.z[k][x] = d1[k][x] / static_cast<double>(sp.size);
    } else {
      p.z[k] = sp.init_states.empty() ? sp.init_pmf : empirical(sp.init_states, sp.num_states());
    }
  }
  return p;
}

std::vector<MixedState> mixed_trajectory(const TeamModel& model, const std::vector<bool>& observed,
                                         const std::function<std::uint64_t(int, const MixedState&)>& chooser,
                                         const std::vector<DeepState>& observations) {
  if (observations.empty()) throw std::invalid_argument("observation sequence is empty");
  for (const auto& d : observations)
    if (d.size() != model.K()) throw std::invalid_argument("observation has wrong number of sub-populations");
  check_observation_decoupling(model, observed);
  LawSpace laws(model);
  std::vector<MixedState> out{initial_mixed_state(model, observed, observations[0])};
  for (std::size_t i = 1; i < observations.size(); ++i) {
    const int t = static_cast<int>(i);
    const LocalLaw g = laws.law(chooser(t, out.back()));
    MixedState next;
    next.observed = observed;
    next.z = hat_f(model, t, out.back().z, g);
    for (std::size_t k = 0; k < model.K(); ++k) {
      if (!observed[k]) continue;
      const auto& c = observations[i][k];
      for (std::size_t x = 0; x < c.size(); ++x) next.z[k][x] = c[x] / static_cast<double>(model.subpops[k].size);
    }
    out.push_back(std::move(next));
  }
  return out;
}

std::string tree_key(int t, const std::vector<std::uint64_t>& ranks, const std::vector<std::uint64_t>& laws) {
  std::string s = std::to_string(t) + "|";
  for (std::size_t i = 0; i < ranks.size(); ++i) s += (i ? "," : "") + std::to_string(ranks[i]);
  s += "|";
  for (std::size_t i = 0; i < laws.size(); ++i) s += (i ? "," : "") + std::to_string(laws[i]);
  return s;
}

namespace {

struct TreeBuilder {
  const TeamModel& model;
  const std::vector<bool>& observed;
  const SolveOptions& opts;
  TreeSolution& sol;
  std::vector<std::size_t> obs;  // observed sub-population indices
  std::vector<CompositionLattice> lattices;
  std::vector<std::uint64_t> strides;  // joint rank over observed components
  std::vector<LocalLaw> law_list;

  // p: mixed state; counts: observed count vectors; ranks/laws: history.
  double value(int t, const StateDist& z, const DeepState& counts, std::vector<std::uint64_t>& ranks,
               std::vector<std::uint64_t>& laws) {
    if (++sol.nodes > opts.cap)
      throw CapExceeded("reachable mixed-state tree exceeds cap " + std::to_string(opts.cap) + " nodes");
    const std::string key = tree_key(t, ranks, laws);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::uint64_t a = 0; a < law_list.size(); ++a) {
      const LocalLaw& g = law_list[a];
      const StateActionDist D = phi(model, z, g);
      double q = cost_eval(model, t, D);
      if (t < sol.T) {
        StateDist zn = hat_f(model, t, z, g);
        std::vector<LocalRow> rows(obs.size());
        for (std::size_t j = 0; j < obs.size(); ++j) {
          const std::size_t k = obs[j];
          auto dist = next_count_distribution(model, t, k, counts[k], g.action[k], D, lattices[j]);
          rows[j].next.assign(dist.index.begin(), dist.index.end());
          rows[j].prob = dist.prob;
        }
        laws.push_back(a);
        DeepState nc = counts;
        q += expect(t + 1, 0, 0, rows, zn, nc, ranks, laws);
        laws.pop_back();
      }
      if (improves(q, best)) {
        best = q;
        arg = static_cast<std::uint32_t>(a);
      }
    }
    sol.values[key] = best;
    sol.policy[key] = arg;
    return best;
  }

  // Nested expectation over observed components in the same order as the lattice DP.
  double expect(int t, std::size_t j, std::uint64_t joint, const std::vector<LocalRow>& rows, StateDist& z,
                DeepState& counts, std::vector<std::uint64_t>& ranks, std::vector<std::uint64_t>& laws) {
    if (rows.empty() || j == rows.size()) {
      ranks.push_back(joint);
      double v = value(t, z, counts, ranks, laws);
      ranks.pop_back();
      return v;
    }
    const std::size_t k = obs[j];
    double s = 0.0;
    for (std::size_t i = 0; i < rows[j].next.size(); ++i) {
      counts[k] = lattices[j].unrank(rows[j].next[i]);
      for (std::size_t x = 0; x < counts[k].size(); ++x)
        z[k][x] = counts[k][x] / static_cast<double>(model.subpops[k].size);
      s += rows[j].prob[i] * expect(t, j + 1, joint + rows[j].next[i] * strides[j], rows, z, counts, ranks, laws);
    }
    return s;
  }
};

}  // namespace

TreeSolution solve_pdss_exact_small(const TeamModel& model, const std::vector<bool>& observed, const SolveOptions& opts) {
  if (model.horizon.discounted()) throw std::invalid_argument("exact mixed-state DP needs a finite horizon");
  if (observed.size() != model.K()) throw std::invalid_argument("observation mask has wrong length");
  check_observation_decoupling(model, observed);
  TreeSolution sol;
  sol.observed = observed;
  sol.T = model.horizon.T;
  sol.laws = LawSpace(model, opts.cap);
  TreeBuilder b{model, observed, opts, sol, {}, {}, {}, {}};
  for (std::size_t k = 0; k < model.K(); ++k)
    if (observed[k]) {
      b.obs.push_back(k);
      b.lattices.emplace_back(model.subpops[k].size, model.subpops[k].num_states(), opts.cap);
    }
  b.strides.assign(b.obs.size(), 1);
  for (std::size_t j = b.obs.size(); j-- > 1;) b.strides[j - 1] = b.strides[j] * b.lattices[j].size();
  for (std::uint64_t a = 0; a < sol.laws.size(); ++a) b.law_list.push_back(sol.laws.law(a));

  // Initial observed deep states, product over observed components.
  std::vector<std::pair<DeepState, double>> init{{DeepState(model.K()), 1.0}};
  for (std::size_t k : b.obs) {
    const auto& sp = model.subpops[k];
    std::vector<WeightedCounts> w;
    if (!sp.init_states.empty())
      w.push_back({count_symbols(sp.init_states, sp.num_states()), 1.0});
    else
      w = enumerate_noise_empiricals(sp.size, sp.init_pmf, opts.cap);
    std::vector<std::pair<DeepState, double>> next;
    for (const auto& [d, p] : init)
      for (const auto& wc : w) {
        DeepState e = d;
        e[k] = wc.counts;
        next.emplace_back(std::move(e), p * wc.weight);
      }
    init = std::move(next);
  }
  for (auto& [d, p] : init) {
    std::uint64_t joint = 0;
    for (std::size_t j = 0; j < b.obs.size(); ++j) joint += b.lattices[j].rank(d[b.obs[j]]) * b.strides[j];
    MixedState m = initial_mixed_state(model, observed, d);
    std::vector<std::uint64_t> ranks{joint}, laws;
    double v = b.value(1, m.z, d, ranks, laws);
    sol.roots.emplace_back(tree_key(1, ranks, laws), p);
    sol.expected_value += p * v;
  }
  return sol;
}

namespace {

std::vector<ComponentKind> mixed_kinds(const TeamModel& model, const std::vector<bool>& observed) {
  if (observed.size() != model.K()) throw std::invalid_argument("observation mask has wrong length");
  check_observation_decoupling(model, observed);
  std::vector<ComponentKind> kinds(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) kinds[k] = observed[k] ? ComponentKind::Exact : ComponentKind::QuantizedMean;
  return kinds;
}

}  // namespace

DpSolution solve_pdss_quantized_finite(const TeamModel& model, const std::vector<bool>& observed, int r,
                                       const SolveOptions& opts) {
  auto sol = run_finite_dp(model, make_space(model, mixed_kinds(model, observed), r, opts.cap), opts);
  sol.observed = observed;
  sol.r = r;
  return sol;
}

DpSolution value_iteration_pdss_quantized(const TeamModel& model, const std::vector<bool>& observed, int r, double tol,
                                          const SolveOptions& opts, const LipschitzProfile* profile) {
  if (!model.horizon.discounted()) throw std::invalid_argument("value iteration requires a discounted model");
  auto kinds = mixed_kinds(model, observed);
  bool any_hidden = false;
  for (bool o : observed) any_hidden = any_hidden || !o;
  if (any_hidden) {
    LipschitzProfile est;
    if (!profile) {
      LipschitzOptions lo;
      lo.workers = opts.workers;
      est = estimate_lipschitz(model, lo);
      profile = &est;
    }
    const double bh = model.horizon.beta * profile->H3.at(0);
    if (bh >= 1.0) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "contraction condition fails: beta*H3 = %.6g >= 1 (H3 = %.6g, %s)", bh,
                    profile->H3.at(0), profile->supplied ? "supplied" : "estimated");
      throw AssumptionViolation(buf);
    }
  }
  auto sol = run_value_iteration(model, make_space(model, kinds, r, opts.cap), tol, opts);
  sol.observed = observed;
  sol.r = r;
  return sol;
}

}  // namespace deepteam
