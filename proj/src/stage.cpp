#include "deepteam/stage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "deepteam/parallel.hpp"

namespace deepteam {

std::uint64_t ComponentDomain::size() const {
  return kind == ComponentKind::Exact ? lattice.size() : points.size();
}

std::vector<double> ComponentDomain::values(std::uint64_t local) const {
  std::vector<double> z(static_cast<std::size_t>(m));
  if (kind == ComponentKind::Exact) {
    Counts c = lattice.unrank(local);
    for (int x = 0; x < m; ++x) z[static_cast<std::size_t>(x)] = c[static_cast<std::size_t>(x)] / static_cast<double>(n);
  } else {
    const auto& q = points[local];
    for (int x = 0; x < m; ++x) z[static_cast<std::size_t>(x)] = q[static_cast<std::size_t>(x)] / static_cast<double>(r);
  }
  return z;
}

std::uint64_t ComponentDomain::encode(const std::vector<int>& q) const {
  std::uint64_t key = 0;
  for (int v : q) key = key * static_cast<std::uint64_t>(r + 1) + static_cast<std::uint64_t>(v);
  return key;
}

long long ComponentDomain::find(const std::vector<int>& q) const {
  auto it = index.find(encode(q));
  return it == index.end() ? -1 : static_cast<long long>(it->second);
}

void ComponentDomain::rebuild_index() {
  if (std::pow(static_cast<double>(r + 1), m) > 1.8e19) throw CapExceeded("grid key encoding (r+1)^m overflows 64 bits");
  index.clear();
  for (std::size_t i = 0; i < points.size(); ++i) index.emplace(encode(points[i]), static_cast<std::uint32_t>(i));
}

void StateSpace::finalize(std::uint64_t cap) {
  strides.assign(comps.size(), 0);
  total = 1;
  for (std::size_t k = comps.size(); k-- > 0;) {
    strides[k] = total;
    const std::uint64_t sz = comps[k].size();
    if (sz == 0 || total > cap / sz)
      throw CapExceeded("DP state space (product of deep-state lattices and grids) exceeds cap " + std::to_string(cap));
    total *= sz;
  }
  if (total > std::numeric_limits<std::uint32_t>::max())
    throw CapExceeded("DP state space exceeds 32-bit successor indexing");
}

StateDist StateSpace::point(std::uint64_t s) const {
  StateDist z(comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) z[k] = comps[k].values(local(s, k));
  return z;
}

StateDist StateSpace::kernel_point(const TeamModel& model, std::uint64_t s) const {
  (void)model;
  StateDist z(comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    const std::uint64_t l = local(s, k);
    if (c.kind == ComponentKind::QuantizedDeep) {
      Counts cnt = c.lattice.unrank(c.representative[l]);
      z[k].resize(cnt.size());
      for (std::size_t x = 0; x < cnt.size(); ++x) z[k][x] = cnt[x] / static_cast<double>(c.n);
    } else if (c.kind == ComponentKind::QuantizedMean) {
      // Mean-fields live on the simplex; successors of the projection stay inside the near-simplex band.
      z[k] = project_to_simplex(c.values(l));
    } else {
      z[k] = c.values(l);
    }
  }
  return z;
}

bool StateSpace::any_quantized() const {
  for (const auto& c : comps)
    if (c.kind != ComponentKind::Exact) return true;
  return false;
}

std::uint64_t StateSpace::locate(const DeepState& d, const StateDist* mean) const {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    std::uint64_t l = 0;
    switch (c.kind) {
      case ComponentKind::Exact:
        l = c.lattice.rank(d[k]);
        break;
      case ComponentKind::QuantizedDeep:
        l = c.lattice_to_local[c.lattice.rank(d[k])];
        break;
      case ComponentKind::QuantizedMean: {
        if (!mean) throw Error("mean-field component requested without a tracked mean-field");
        auto q = quantize((*mean)[k], c.r);
        long long f = c.find(q);
        if (f < 0) {
          std::string key;
          for (int v : q) key += (key.empty() ? "" : ",") + std::to_string(v);
          throw Error("uncovered state: grid point (" + key + ")/" + std::to_string(c.r) + " of sub-population " +
                      std::to_string(k));
        }
        l = static_cast<std::uint64_t>(f);
        break;
      }
    }
    s += l * strides[k];
  }
  return s;
}

StateSpace make_space(const TeamModel& model, const std::vector<ComponentKind>& kinds, int r, std::uint64_t cap) {
  StateSpace space;
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    ComponentDomain c;
    c.kind = kinds[k];
    c.n = sp.size;
    c.m = sp.num_states();
    c.r = r;
    if (c.kind != ComponentKind::Exact && r < 1) throw std::invalid_argument("quantization levels r must be >= 1");
    if (c.kind == ComponentKind::Exact || c.kind == ComponentKind::QuantizedDeep) c.lattice = CompositionLattice(c.n, c.m, cap);
    if (c.kind == ComponentKind::QuantizedDeep) {
      std::map<std::vector<int>, std::pair<long long, std::uint64_t>> best;  // point -> (distance, rank)
      std::vector<std::vector<int>> qs(c.lattice.size());
      for (std::uint64_t rk = 0; rk < c.lattice.size(); ++rk) {
        Counts cnt = c.lattice.unrank(rk);
        std::vector<int> q(cnt.size());
        long long dist = 0;
        for (std::size_t x = 0; x < cnt.size(); ++x) {
          q[x] = quantize_count(cnt[x], c.n, r);
          dist = std::max(dist, std::llabs(static_cast<long long>(cnt[x]) * r - static_cast<long long>(q[x]) * c.n));
        }
        auto it = best.find(q);
        if (it == best.end() || dist < it->second.first) best[q] = {dist, rk};
        qs[rk] = std::move(q);
      }
      for (auto& [q, v] : best) {
        c.points.push_back(q);
        c.representative.push_back(v.second);
      }
      c.rebuild_index();
      c.lattice_to_local.resize(qs.size());
      for (std::size_t rk = 0; rk < qs.size(); ++rk) c.lattice_to_local[rk] = static_cast<std::uint32_t>(c.find(qs[rk]));
    } else if (c.kind == ComponentKind::QuantizedMean) {
      c.points = enumerate_grid(c.m, r, true, cap);
      c.rebuild_index();
    }
    space.comps.push_back(std::move(c));
  }
  space.finalize(cap);
  return space;
}

double expect_product(const std::vector<const LocalRow*>& rows, const std::vector<std::uint64_t>& strides,
                      const std::vector<double>& V) {
  const std::size_t K = rows.size();
  if (K == 1) {
    const auto& r0 = *rows[0];
    double s = 0.0;
    for (std::size_t i = 0; i < r0.next.size(); ++i) s += r0.prob[i] * V[r0.next[i] * strides[0]];
    return s;
  }
  if (K == 2) {
    const auto& r0 = *rows[0];
    const auto& r1 = *rows[1];
    double s = 0.0;
    for (std::size_t i = 0; i < r0.next.size(); ++i) {
      const std::uint64_t base = r0.next[i] * strides[0];
      double inner = 0.0;
      for (std::size_t j = 0; j < r1.next.size(); ++j) inner += r1.prob[j] * V[base + r1.next[j] * strides[1]];
      s += r0.prob[i] * inner;
    }
    return s;
  }
  auto rec = [&](auto&& self, std::size_t k, std::uint64_t base) -> double {
    const auto& rk = *rows[k];
    double s = 0.0;
    for (std::size_t i = 0; i < rk.next.size(); ++i) {
      const std::uint64_t idx = base + rk.next[i] * strides[k];
      s += rk.prob[i] * (k + 1 == K ? V[idx] : self(self, k + 1, idx));
    }
    return s;
  };
  return rec(rec, 0, 0);
}

namespace {

LocalRow to_local_row(const SparseDist& dist, const ComponentDomain& c) {
  LocalRow row;
  if (c.kind == ComponentKind::Exact) {
    row.next.assign(dist.index.begin(), dist.index.end());
    row.prob = dist.prob;
    return row;
  }
  std::map<std::uint32_t, double> merged;
  for (std::size_t i = 0; i < dist.index.size(); ++i) merged[c.lattice_to_local[dist.index[i]]] += dist.prob[i];
  for (const auto& [l, p] : merged) {
    row.next.push_back(l);
    row.prob.push_back(p);
  }
  return row;
}

Counts transition_counts(const ComponentDomain& c, std::uint64_t l) {
  return c.kind == ComponentKind::QuantizedDeep ? c.lattice.unrank(c.representative[l]) : c.lattice.unrank(l);
}

std::vector<double> hat_component(const TeamModel& model, int t, std::size_t k, const std::vector<double>& zk,
                                  const std::vector<int>& actions, const StateActionDist& D) {
  const auto& sp = model.subpops[k];
  const auto m = static_cast<std::size_t>(sp.num_states());
  std::vector<double> out(m, 0.0), row(m);
  for (std::size_t x = 0; x < m; ++x) {
    if (zk[x] == 0.0) continue;
    kernel_row(model, k, t, static_cast<int>(x), actions[x], D, row);
    for (std::size_t y = 0; y < m; ++y) out[y] += zk[x] * row[y];
  }
  return out;
}

struct Compiled {
  std::uint64_t S = 0;
  std::uint64_t A = 0;
  std::size_t K = 0;
  std::vector<double> cost;
  std::vector<std::uint32_t> ref;
  std::vector<LocalRow> rows;
};

Compiled compile(const TeamModel& model, const StateSpace& space, const LawSpace& laws,
                 const std::vector<LocalLaw>& law_list, int t, const SolveOptions& opts) {
  Compiled c;
  c.S = space.size();
  c.A = laws.size();
  c.K = model.K();
  if (c.A != 0 && c.S > opts.cap / c.A)
    throw CapExceeded("DP table states x laws = " + std::to_string(c.S) + " x " + std::to_string(c.A) +
                      " exceeds cap " + std::to_string(opts.cap));
  const std::uint64_t SA = c.S * c.A;
  // Row pool layout per component: a shared block for D-independent or delta rows, or one row per (s, a).
  std::vector<std::uint64_t> offset(c.K);
  std::vector<int> mode(c.K);  // 0 shared by (local, law component), 1 delta by successor, 2 per (s, a)
  std::uint64_t pool = 0;
  for (std::size_t k = 0; k < c.K; ++k) {
    const auto& dom = space.comps[k];
    offset[k] = pool;
    if (dom.kind == ComponentKind::QuantizedMean) {
      mode[k] = 1;
      pool += dom.size();
    } else if (!model.subpops[k].kernel_depends_on_D) {
      mode[k] = 0;
      pool += dom.size() * laws.component_count(k);
    } else {
      mode[k] = 2;
      pool += SA;
    }
  }
  if (pool > opts.cap) throw CapExceeded("transition row pool exceeds cap " + std::to_string(opts.cap));
  c.rows.resize(pool);
  const StateActionDist zeroD = zero_state_action(model);
  for (std::size_t k = 0; k < c.K; ++k) {
    const auto& dom = space.comps[k];
    if (mode[k] == 1) {
      for (std::uint64_t l = 0; l < dom.size(); ++l) c.rows[offset[k] + l] = LocalRow{{static_cast<std::uint32_t>(l)}, {1.0}};
    } else if (mode[k] == 0) {
      const std::uint64_t lc = laws.component_count(k);
      parallel_for(dom.size() * lc, opts.workers, [&](std::uint64_t b, std::uint64_t e) {
        for (std::uint64_t i = b; i < e; ++i) {
          const std::uint64_t l = i / lc, g = i % lc;
          auto dist = next_count_distribution(model, t, k, transition_counts(dom, l), laws.component_actions(k, g),
                                              zeroD, dom.lattice);
          c.rows[offset[k] + i] = to_local_row(dist, dom);
        }
      });
    }
  }
  c.cost.assign(SA, 0.0);
  c.ref.assign(SA * c.K, 0);
  parallel_for(c.S, opts.workers, [&](std::uint64_t b, std::uint64_t e) {
    for (std::uint64_t s = b; s < e; ++s) {
      const StateDist z = space.point(s);
      const StateDist zk = space.kernel_point(model, s);
      std::vector<std::uint64_t> loc(c.K);
      for (std::size_t k = 0; k < c.K; ++k) loc[k] = space.local(s, k);
      for (std::uint64_t a = 0; a < c.A; ++a) {
        const LocalLaw& g = law_list[a];
        const std::uint64_t sa = s * c.A + a;
        c.cost[sa] = cost_eval(model, t, phi(model, z, g));
        const StateActionDist Dk = phi(model, zk, g);
        for (std::size_t k = 0; k < c.K; ++k) {
          const auto& dom = space.comps[k];
          std::uint64_t ref = 0;
          if (mode[k] == 0) {
            ref = offset[k] + loc[k] * laws.component_count(k) + laws.component(a, k);
          } else if (mode[k] == 1) {
            auto q = quantize(hat_component(model, t, k, zk[k], g.action[k], Dk), dom.r);
            long long f = dom.find(q);
            if (f < 0) throw Error("mean-field successor outside the closed grid domain");
            ref = offset[k] + static_cast<std::uint64_t>(f);
          } else {
            ref = offset[k] + sa;
            auto dist = next_count_distribution(model, t, k, transition_counts(dom, loc[k]), g.action[k], Dk, dom.lattice);
            c.rows[ref] = to_local_row(dist, dom);
          }
          c.ref[sa * c.K + k] = static_cast<std::uint32_t>(ref);
        }
      }
    }
  });
  return c;
}

void rows_for(const Compiled& c, std::uint64_t s, std::uint64_t a, std::vector<const LocalRow*>& rows) {
  rows.resize(c.K);
  const std::uint64_t sa = s * c.A + a;
  for (std::size_t k = 0; k < c.K; ++k) rows[k] = &c.rows[c.ref[sa * c.K + k]];
}

// One Bellman sweep: out[s] = min_a cost + beta E[V], policy by strict improvement (smallest index on ties).
double bellman(const Compiled& c, const StateSpace& space, const std::vector<double>& V, double beta,
               std::vector<double>& out, std::vector<std::uint32_t>& policy, int workers) {
  out.assign(c.S, 0.0);
  policy.assign(c.S, 0);
  parallel_for(c.S, workers, [&](std::uint64_t b, std::uint64_t e) {
    std::vector<const LocalRow*> rows;
    for (std::uint64_t s = b; s < e; ++s) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::uint64_t a = 0; a < c.A; ++a) {
        rows_for(c, s, a, rows);
        double q = c.cost[s * c.A + a] + beta * expect_product(rows, space.strides, V);
        if (improves(q, best)) {
          best = q;
          arg = static_cast<std::uint32_t>(a);
        }
      }
      out[s] = best;
      policy[s] = arg;
    }
  });
  double delta = 0.0;
  for (std::uint64_t s = 0; s < c.S; ++s) delta = std::max(delta, std::abs(out[s] - V[s]));
  return delta;
}

std::vector<LocalLaw> all_laws(const LawSpace& laws) {
  std::vector<LocalLaw> out;
  out.reserve(laws.size());
  for (std::uint64_t a = 0; a < laws.size(); ++a) out.push_back(laws.law(a));
  return out;
}

double expected_initial(const TeamModel& model, const StateSpace& space, const std::vector<double>& V,
                        std::uint64_t cap) {
  double j = 0.0;
  for (const auto& [s, p] : initial_distribution(model, space, cap)) j += p * V[s];
  return j;
}

}  // namespace

void close_mean_field_domains(const TeamModel& model, StateSpace& space, const LawSpace& laws,
                              const SolveOptions& opts) {
  bool any = false;
  for (const auto& c : space.comps) any = any || c.kind == ComponentKind::QuantizedMean;
  if (!any) return;
  const auto law_list = all_laws(laws);
  for (int round = 0;; ++round) {
    std::vector<std::set<std::vector<int>>> pending(space.comps.size());
    for (int t : model_times(model)) {
      for (std::uint64_t s = 0; s < space.size(); ++s) {
        const StateDist zk = space.kernel_point(model, s);
        for (const auto& g : law_list) {
          const StateActionDist D = phi(model, zk, g);
          for (std::size_t k = 0; k < space.comps.size(); ++k) {
            auto& dom = space.comps[k];
            if (dom.kind != ComponentKind::QuantizedMean) continue;
            auto q = quantize(hat_component(model, t, k, zk[k], g.action[k], D), dom.r);
            if (dom.find(q) < 0) pending[k].insert(std::move(q));
          }
        }
      }
    }
    bool grew = false;
    for (std::size_t k = 0; k < space.comps.size(); ++k) {
      if (pending[k].empty()) continue;
      grew = true;
      auto& pts = space.comps[k].points;
      pts.insert(pts.end(), pending[k].begin(), pending[k].end());
      std::sort(pts.begin(), pts.end());
      space.comps[k].rebuild_index();
    }
    if (!grew) break;
    space.finalize(opts.cap);
  }
}

std::vector<std::pair<std::uint64_t, double>> initial_distribution(const TeamModel& model, const StateSpace& space,
                                                                   std::uint64_t cap) {
  std::vector<std::pair<std::uint64_t, double>> acc{{0, 1.0}};
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    const auto& dom = space.comps[k];
    std::map<std::uint64_t, double> local;
    if (dom.kind == ComponentKind::QuantizedMean) {
      std::vector<double> mean = sp.init_pmf;
      if (!sp.init_states.empty()) mean = empirical(sp.init_states, sp.num_states());
      long long f = dom.find(quantize(mean, dom.r));
      if (f < 0) throw Error("initial mean-field outside the grid domain");
      local[static_cast<std::uint64_t>(f)] = 1.0;
    } else {
      std::vector<WeightedCounts> init;
      if (!sp.init_states.empty())
        init.push_back({count_symbols(sp.init_states, sp.num_states()), 1.0});
      else
        init = enumerate_noise_empiricals(sp.size, sp.init_pmf, cap);
      for (const auto& wc : init) {
        std::uint64_t rk = dom.lattice.rank(wc.counts);
        std::uint64_t l = dom.kind == ComponentKind::QuantizedDeep ? dom.lattice_to_local[rk] : rk;
        local[l] += wc.weight;
      }
    }
    std::vector<std::pair<std::uint64_t, double>> next;
    for (const auto& [s, p] : acc)
      for (const auto& [l, q] : local) next.emplace_back(s + l * space.strides[k], p * q);
    acc = std::move(next);
  }
  std::sort(acc.begin(), acc.end());
  return acc;
}

DpSolution run_finite_dp(const TeamModel& model, StateSpace space, const SolveOptions& opts) {
  if (model.horizon.discounted()) throw std::invalid_argument("finite-horizon solver called on a discounted model");
  DpSolution sol;
  sol.laws = LawSpace(model, opts.cap);
  const auto law_list = all_laws(sol.laws);
  close_mean_field_domains(model, space, sol.laws, opts);
  sol.space = std::move(space);
  sol.T = model.horizon.T;
  sol.values.resize(static_cast<std::size_t>(sol.T));
  sol.policy.resize(static_cast<std::size_t>(sol.T));
  std::vector<double> next(sol.space.size(), 0.0);
  Compiled stage;
  int compiled_for = -1;
  for (int t = sol.T; t >= 1; --t) {
    const int tt = model.time_homogeneous ? 1 : t;
    if (tt != compiled_for) {
      stage = compile(model, sol.space, sol.laws, law_list, tt, opts);
      compiled_for = tt;
    }
    auto& V = sol.values[static_cast<std::size_t>(t - 1)];
    bellman(stage, sol.space, next, 1.0, V, sol.policy[static_cast<std::size_t>(t - 1)], opts.workers);
    next = V;
  }
  sol.optimal_cost = expected_initial(model, sol.space, sol.values[0], opts.cap);
  return sol;
}

DpSolution run_value_iteration(const TeamModel& model, StateSpace space, double tol, const SolveOptions& opts) {
  if (!model.horizon.discounted()) throw std::invalid_argument("value iteration requires a discounted model");
  if (!model.time_homogeneous) throw std::invalid_argument("value iteration requires a time-homogeneous model");
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const double beta = model.horizon.beta;
  DpSolution sol;
  sol.stationary = true;
  sol.beta = beta;
  sol.laws = LawSpace(model, opts.cap);
  const auto law_list = all_laws(sol.laws);
  close_mean_field_domains(model, space, sol.laws, opts);
  sol.space = std::move(space);
  Compiled stage = compile(model, sol.space, sol.laws, law_list, 1, opts);
  std::vector<double> V(sol.space.size(), 0.0), Vn;
  std::vector<std::uint32_t> pol;
  const double threshold = tol * (1.0 - beta) / (2.0 * beta);
  constexpr int kMaxSweeps = 1'000'000;
  while (true) {
    double delta = bellman(stage, sol.space, V, beta, Vn, pol, opts.workers);
    V.swap(Vn);
    sol.deltas.push_back(delta);
    ++sol.iterations;
    if (delta < threshold) break;
    if (sol.iterations >= kMaxSweeps) throw Error("value iteration did not converge");
  }
  // Greedy policy with respect to the final table.
  bellman(stage, sol.space, V, beta, Vn, pol, opts.workers);
  sol.values = {V};
  sol.policy = {pol};
  sol.optimal_cost = expected_initial(model, sol.space, V, opts.cap);
  return sol;
}

}  // namespace deepteam
