#include "deepteam/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "deepteam/random.hpp"

namespace deepteam {

namespace {

constexpr double kPrune = 1e-15;

// Neumaier-compensated accumulator.
struct Acc {
  double s = 0.0;
  double c = 0.0;
  void add(double v) {
    double t = s + v;
    if (std::abs(s) >= std::abs(v))
      c += (s - t) + v;
    else
      c += (v - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

std::vector<double> binomial_pmf(int c, double p) {
  std::vector<double> out(static_cast<std::size_t>(c) + 1, 0.0);
  if (p <= 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (p >= 1.0) {
    out[static_cast<std::size_t>(c)] = 1.0;
    return out;
  }
  const double lp = std::log(p), lq = std::log1p(-p);
  const double lc = std::lgamma(c + 1.0);
  for (int j = 0; j <= c; ++j)
    out[static_cast<std::size_t>(j)] = std::exp(lc - std::lgamma(j + 1.0) - std::lgamma(c - j + 1.0) + j * lp + (c - j) * lq);
  return out;
}

std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<Acc> acc(a.size() + b.size() - 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    for (std::size_t j = 0; j < b.size(); ++j)
      if (b[j] != 0.0) acc[i + j].add(a[i] * b[j]);
  }
  std::vector<double> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = acc[i].value();
  return out;
}

// Multinomial law of c agents over the states with positive probability, keyed by encoded count vector.
void source_multinomial(int c, const std::vector<double>& row, std::uint64_t base,
                        std::vector<std::pair<std::uint64_t, double>>& out) {
  const int m = static_cast<int>(row.size());
  std::vector<int> support;
  for (int y = 0; y < m; ++y)
    if (row[static_cast<std::size_t>(y)] > 0.0) support.push_back(y);
  std::vector<std::uint64_t> weight(static_cast<std::size_t>(m), 1);
  for (int y = 1; y < m; ++y) weight[static_cast<std::size_t>(y)] = weight[static_cast<std::size_t>(y - 1)] * base;
  std::vector<double> logp(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) logp[i] = std::log(row[static_cast<std::size_t>(support[i])]);
  const double lc = std::lgamma(c + 1.0);
  std::vector<int> cur(support.size(), 0);
  // Depth-first over compositions of c into |support| parts.
  auto rec = [&](auto&& self, std::size_t i, int left, double lw, std::uint64_t key) -> void {
    if (i + 1 == support.size()) {
      double l = lw - std::lgamma(left + 1.0) + left * logp[i];
      double p = std::exp(lc + l);
      if (p > 0.0) out.emplace_back(key + static_cast<std::uint64_t>(left) * weight[static_cast<std::size_t>(support[i])], p);
      return;
    }
    for (int v = 0; v <= left; ++v)
      self(self, i + 1, left - v, lw - std::lgamma(v + 1.0) + v * logp[i],
           key + static_cast<std::uint64_t>(v) * weight[static_cast<std::size_t>(support[i])]);
  };
  rec(rec, 0, c, 0.0, 0);
}

}  // namespace

JointLattice::JointLattice(const TeamModel& model, std::uint64_t cap) {
  const std::size_t K = model.K();
  strides_.resize(K);
  for (const auto& sp : model.subpops) parts_.emplace_back(sp.size, sp.num_states(), cap);
  size_ = 1;
  for (std::size_t k = K; k-- > 0;) {
    strides_[k] = size_;
    if (parts_[k].size() != 0 && size_ > cap / parts_[k].size())
      throw CapExceeded("joint deep-state space prod_k C(n_k+m_k-1,m_k-1) exceeds cap " + std::to_string(cap));
    size_ *= parts_[k].size();
  }
  if (size_ > cap) throw CapExceeded("joint deep-state space prod_k C(n_k+m_k-1,m_k-1) = " + std::to_string(size_) +
                                     " exceeds cap " + std::to_string(cap));
}

std::uint64_t JointLattice::rank(const DeepState& d) const {
  std::uint64_t r = 0;
  for (std::size_t k = 0; k < K(); ++k) r += parts_[k].rank(d[k]) * strides_[k];
  return r;
}

DeepState JointLattice::unrank(std::uint64_t r) const {
  if (r >= size_) throw std::out_of_range("joint deep-state rank out of range");
  DeepState d(K());
  for (std::size_t k = 0; k < K(); ++k) d[k] = parts_[k].unrank((r / strides_[k]) % parts_[k].size());
  return d;
}

StateDist deep_state_value(const TeamModel& model, const DeepState& d) {
  StateDist z(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double n = model.subpops[k].size;
    z[k].resize(d[k].size());
    for (std::size_t x = 0; x < d[k].size(); ++x) z[k][x] = d[k][x] / n;
  }
  return z;
}

StateActionDist phi(const TeamModel& model, const StateDist& z, const LocalLaw& gamma) {
  StateActionDist D = zero_state_action(model);
  for (std::size_t k = 0; k < model.K(); ++k)
    for (int x = 0; x < model.subpops[k].num_states(); ++x)
      D.at(k, x, gamma.action[k][static_cast<std::size_t>(x)]) = z[k][static_cast<std::size_t>(x)];
  return D;
}

namespace {

void require_dynamics(const TeamModel& model) {
  if (!model.has_dynamics())
    throw Error("model lacks functional-form dynamics; use joint_transition for the exact deep-state law");
}

}  // namespace

namespace {

StateDist bar_f_masked(const TeamModel& model, int t, const StateDist& z, const LocalLaw& gamma,
                       const std::vector<Counts>& noise_counts, const std::vector<bool>& mask) {
  StateActionDist D = phi(model, z, gamma);
  StateDist out(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) {
    if (!mask[k]) continue;
    const auto& sp = model.subpops[k];
    if (!sp.dynamics)
      throw Error("sub-population '" + sp.name +
                  "' lacks functional-form dynamics; use joint_transition for the exact deep-state law");
    if (noise_counts[k].size() != sp.noises.size()) throw std::invalid_argument("noise counts have wrong length");
    int total = 0;
    for (int c : noise_counts[k]) total += c;
    if (total != sp.size) throw std::invalid_argument("noise counts must sum to the sub-population size");
    out[k].assign(static_cast<std::size_t>(sp.num_states()), 0.0);
    for (int w = 0; w < sp.num_noises(); ++w) {
      const int cw = noise_counts[k][static_cast<std::size_t>(w)];
      if (cw == 0) continue;
      for (int x = 0; x < sp.num_states(); ++x) {
        double zx = z[k][static_cast<std::size_t>(x)];
        if (zx == 0.0) continue;
        int y = sp.dynamics(t, x, gamma.action[k][static_cast<std::size_t>(x)], D, w);
        out[k][static_cast<std::size_t>(y)] += zx * cw / static_cast<double>(sp.size);
      }
    }
  }
  return out;
}

}  // namespace

StateDist bar_f(const TeamModel& model, int t, const StateDist& z, const LocalLaw& gamma,
                const std::vector<Counts>& noise_counts) {
  require_dynamics(model);
  return bar_f_masked(model, t, z, gamma, noise_counts, std::vector<bool>(model.K(), true));
}

std::vector<std::vector<long long>> bar_f_numerators(const TeamModel& model, int t, const DeepState& d,
                                                     const LocalLaw& gamma, const std::vector<Counts>& noise_counts) {
  require_dynamics(model);
  StateActionDist D = phi(model, deep_state_value(model, d), gamma);
  std::vector<std::vector<long long>> out(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    out[k].assign(static_cast<std::size_t>(sp.num_states()), 0);
    for (int w = 0; w < sp.num_noises(); ++w) {
      const int cw = noise_counts[k][static_cast<std::size_t>(w)];
      if (cw == 0) continue;
      for (int x = 0; x < sp.num_states(); ++x) {
        const int cx = d[k][static_cast<std::size_t>(x)];
        if (cx == 0) continue;
        int y = sp.dynamics(t, x, gamma.action[k][static_cast<std::size_t>(x)], D, w);
        out[k][static_cast<std::size_t>(y)] += static_cast<long long>(cx) * cw;
      }
    }
  }
  return out;
}

StateDist hat_f(const TeamModel& model, int t, const StateDist& z, const LocalLaw& gamma) {
  StateActionDist D = phi(model, z, gamma);
  StateDist out(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    const auto m = static_cast<std::size_t>(sp.num_states());
    out[k].assign(m, 0.0);
    std::vector<double> row(m);
    for (int x = 0; x < sp.num_states(); ++x) {
      double zx = z[k][static_cast<std::size_t>(x)];
      if (zx == 0.0) continue;
      kernel_row(model, k, t, x, gamma.action[k][static_cast<std::size_t>(x)], D, row);
      for (std::size_t y = 0; y < m; ++y) out[k][y] += zx * row[y];
    }
  }
  return out;
}

double ell(const TeamModel& model, int t, const StateDist& z, const LocalLaw& gamma) {
  return cost_eval(model, t, phi(model, z, gamma));
}

std::vector<double> dck_marginal(const TeamModel& model, int t, std::size_t k, int y, const DeepState& d,
                                 const LocalLaw& gamma) {
  StateActionDist D = phi(model, deep_state_value(model, d), gamma);
  const auto& sp = model.subpops[k];
  std::vector<double> acc{1.0};
  std::vector<double> row(static_cast<std::size_t>(sp.num_states()));
  for (int x = 0; x < sp.num_states(); ++x) {
    const int c = d[k][static_cast<std::size_t>(x)];
    if (c == 0) continue;  // contributes delta_0
    kernel_row(model, k, t, x, gamma.action[k][static_cast<std::size_t>(x)], D, row);
    acc = convolve(acc, binomial_pmf(c, row[static_cast<std::size_t>(y)]));
  }
  acc.resize(static_cast<std::size_t>(sp.size) + 1, 0.0);
  return acc;
}

SparseDist next_count_distribution(const TeamModel& model, int t, std::size_t k, const Counts& counts,
                                   const std::vector<int>& actions, const StateActionDist& D,
                                   const CompositionLattice& lattice) {
  const auto& sp = model.subpops[k];
  const int m = sp.num_states();
  const std::uint64_t base = static_cast<std::uint64_t>(sp.size) + 1;
  {
    double lim = std::pow(static_cast<double>(base), m);
    if (lim > 1.8e19) throw CapExceeded("count-vector encoding (n_k+1)^|X^k| overflows 64 bits");
  }
  std::vector<std::pair<std::uint64_t, double>> acc{{0, 1.0}};
  std::vector<std::pair<std::uint64_t, double>> src;
  std::vector<double> row(static_cast<std::size_t>(m));
  for (int x = 0; x < m; ++x) {
    const int c = counts[static_cast<std::size_t>(x)];
    if (c == 0) continue;
    kernel_row(model, k, t, x, actions[static_cast<std::size_t>(x)], D, row);
    src.clear();
    source_multinomial(c, row, base, src);
    std::map<std::uint64_t, Acc> next;
    for (const auto& [ka, pa] : acc)
      for (const auto& [kb, pb] : src) next[ka + kb].add(pa * pb);
    acc.clear();
    acc.reserve(next.size());
    for (const auto& [key, a] : next) {
      double v = a.value();
      if (v > 0.0) acc.emplace_back(key, v);
    }
  }
  std::vector<std::pair<std::uint64_t, double>> ranked;
  ranked.reserve(acc.size());
  Counts c(static_cast<std::size_t>(m));
  for (const auto& [key, p] : acc) {
    if (p < kPrune) continue;
    std::uint64_t rem = key;
    for (int y = 0; y < m; ++y) {
      c[static_cast<std::size_t>(y)] = static_cast<int>(rem % base);
      rem /= base;
    }
    ranked.emplace_back(lattice.rank(c), p);
  }
  std::sort(ranked.begin(), ranked.end());
  SparseDist out;
  out.index.reserve(ranked.size());
  out.prob.reserve(ranked.size());
  for (const auto& [r, p] : ranked) {
    out.index.push_back(r);
    out.prob.push_back(p);
  }
  return out;
}

TransitionRow joint_transition(const TeamModel& model, int t, const DeepState& d, const LocalLaw& gamma,
                               std::uint64_t cap) {
  JointLattice lat(model, cap);
  StateActionDist D = phi(model, deep_state_value(model, d), gamma);
  std::vector<SparseDist> parts;
  for (std::size_t k = 0; k < model.K(); ++k)
    parts.push_back(next_count_distribution(model, t, k, d[k], gamma.action[k], D, lat.part(k)));
  TransitionRow row;
  row.entries.push_back({0, 1.0});
  for (std::size_t k = 0; k < model.K(); ++k) {
    std::vector<std::pair<std::uint64_t, double>> next;
    next.reserve(row.entries.size() * parts[k].index.size());
    for (const auto& [r, p] : row.entries)
      for (std::size_t i = 0; i < parts[k].index.size(); ++i) {
        double q = p * parts[k].prob[i];
        if (q >= kPrune) next.emplace_back(r + parts[k].index[i] * lat.stride(k), q);
      }
    if (next.size() > cap) throw CapExceeded("transition row support exceeds cap " + std::to_string(cap));
    row.entries = std::move(next);
  }
  std::sort(row.entries.begin(), row.entries.end());
  return row;
}

NoiseRouteRow joint_transition_noise_route(const TeamModel& model, int t, const DeepState& d, const LocalLaw& gamma,
                                           std::uint64_t cap) {
  require_dynamics(model);
  JointLattice lat(model, cap);
  std::vector<std::vector<WeightedCounts>> emp;
  std::uint64_t combos = 1;
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    emp.push_back(enumerate_noise_empiricals(sp.size, sp.noise_at(t), cap));
    combos *= emp.back().size();
    if (combos > cap) throw CapExceeded("noise-empirical product exceeds cap " + std::to_string(cap));
  }
  std::map<std::uint64_t, Acc> acc;
  Acc off;
  std::vector<std::size_t> idx(model.K(), 0);
  std::vector<Counts> noise(model.K());
  for (std::uint64_t it = 0; it < combos; ++it) {
    double w = 1.0;
    for (std::size_t k = 0; k < model.K(); ++k) {
      noise[k] = emp[k][idx[k]].counts;
      w *= emp[k][idx[k]].weight;
    }
    auto num = bar_f_numerators(model, t, d, gamma, noise);
    DeepState next(model.K());
    bool on_lattice = true;
    for (std::size_t k = 0; k < model.K() && on_lattice; ++k) {
      const long long n = model.subpops[k].size;
      next[k].resize(num[k].size());
      for (std::size_t y = 0; y < num[k].size(); ++y) {
        if (num[k][y] % n != 0) {
          on_lattice = false;
          break;
        }
        next[k][y] = static_cast<int>(num[k][y] / n);
      }
    }
    if (on_lattice)
      acc[lat.rank(next)].add(w);
    else
      off.add(w);
    for (std::size_t k = model.K(); k-- > 0;) {
      if (++idx[k] < emp[k].size()) break;
      idx[k] = 0;
    }
  }
  NoiseRouteRow out;
  for (const auto& [r, a] : acc)
    if (a.value() >= kPrune) out.row.entries.emplace_back(r, a.value());
  out.off_lattice_mass = off.value();
  return out;
}

MixedState mixed_step(const TeamModel& model, int t, const MixedState& p, const LocalLaw& gamma,
                      const std::vector<Counts>& noise_counts) {
  check_observation_decoupling(model, p.observed);
  MixedState next;
  next.observed = p.observed;
  next.z = hat_f(model, t, p.z, gamma);
  bool any = false;
  for (bool o : p.observed) any = any || o;
  if (any) {
    StateDist b = bar_f_masked(model, t, p.z, gamma, noise_counts, p.observed);
    for (std::size_t k = 0; k < model.K(); ++k)
      if (p.observed[k]) next.z[k] = b[k];
  }
  return next;
}

void check_observation_decoupling(const TeamModel& model, const std::vector<bool>& observed, std::uint64_t seed) {
  if (observed.size() != model.K()) throw std::invalid_argument("observation mask has wrong length");
  bool any_hidden = false;
  for (bool o : observed) any_hidden = any_hidden || !o;
  if (!any_hidden) return;
  auto gen = make_stream(seed, 0xA3);
  StateActionDist base = zero_state_action(model);
  for (int t : model_times(model)) {
    for (std::size_t k = 0; k < model.K(); ++k) {
      if (!observed[k]) continue;
      const auto& sp = model.subpops[k];
      if (!sp.kernel_depends_on_D) continue;
      std::vector<double> r0(static_cast<std::size_t>(sp.num_states())), r1(r0.size());
      for (int x = 0; x < sp.num_states(); ++x)
        for (int u = 0; u < sp.num_actions(); ++u) {
          StateActionDist D = base;
          for (auto& b : D.mass)
            for (auto& v : b) v = uniform01(gen);
          kernel_row(model, k, t, x, u, D, r0);
          for (int i = 0; i < 16; ++i) {
            StateActionDist E = D;
            for (std::size_t j = 0; j < model.K(); ++j)
              if (!observed[j])
                for (auto& v : E.mass[j]) v = uniform01(gen);
            kernel_row(model, k, t, x, u, E, r1);
            bool same = true;
            for (std::size_t y = 0; y < r0.size(); ++y) same = same && std::abs(r0[y] - r1[y]) <= 1e-12;
            if (sp.dynamics)
              for (int w = 0; w < sp.num_noises() && same; ++w)
                same = sp.dynamics(t, x, u, D, w) == sp.dynamics(t, x, u, E, w);
            if (!same)
              throw AssumptionViolation("observed sub-population '" + sp.name + "' (k=" + std::to_string(k) +
                                        ", x=" + sp.states[static_cast<std::size_t>(x)] +
                                        ", u=" + sp.actions[static_cast<std::size_t>(u)] + ", t=" + std::to_string(t) +
                                        ") depends on unobserved deep states (perturbation " + std::to_string(i) + ")");
          }
        }
    }
  }
}

}  // namespace deepteam
