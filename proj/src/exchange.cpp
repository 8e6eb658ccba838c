#include "deepteam/exchange.hpp"

#include <cmath>
#include <memory>

#include "deepteam/error.hpp"
#include "deepteam/random.hpp"

namespace deepteam {

namespace {

using Joint = RawAgentModel::Joint;

Joint swapped(Joint v, int i, int j) {
  std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
  return v;
}

std::vector<std::pair<int, int>> transpositions(const RawAgentModel& raw) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < raw.agents(); ++i)
    for (std::size_t j = i + 1; j < raw.agents(); ++j)
      if (raw.subpop_of[i] == raw.subpop_of[j]) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return out;
}

bool check_one(const RawAgentModel& raw, int t, const Joint& x, const Joint& u, const Joint& w, int i, int j,
               ExchangeReport& rep) {
  ++rep.checked;
  const Joint sx = swapped(x, i, j), su = swapped(u, i, j), sw = swapped(w, i, j);
  const char* what = nullptr;
  if (raw.dynamics && swapped(raw.dynamics(t, x, u, w), i, j) != raw.dynamics(t, sx, su, sw)) what = "dynamics";
  if (!what && raw.cost && std::fabs(raw.cost(t, x, u) - raw.cost(t, sx, su)) > 1e-12) what = "cost";
  if (!what) return true;
  rep.pass = false;
  rep.counterexample = ExchangeCounterexample{t, x, u, w, i, j, what};
  return false;
}

// Advances a mixed-radix joint vector; returns false after the last one.
bool next_joint(Joint& v, const std::vector<int>& radix) {
  for (std::size_t i = v.size(); i-- > 0;) {
    if (++v[i] < radix[i]) return true;
    v[i] = 0;
  }
  return false;
}

}  // namespace

ExchangeReport check_partial_exchangeability(const RawAgentModel& raw, std::uint64_t trials, std::uint64_t seed) {
  const std::size_t N = raw.agents();
  std::vector<int> rx(N), ru(N), rw(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto k = static_cast<std::size_t>(raw.subpop_of[i]);
    rx[i] = raw.num_states[k];
    ru[i] = raw.num_actions[k];
    rw[i] = raw.num_noises[k];
  }
  const auto pairs = transpositions(raw);
  ExchangeReport rep;
  if (pairs.empty()) return rep;
  if (trials > 0) {
    if (trials * 2 > kExchangeGuard)
      throw CapExceeded("exchangeability check: " + std::to_string(trials * 2) + " joint evaluations exceed guard " +
                        std::to_string(kExchangeGuard));
    auto g = make_stream(seed, 0);
    Joint x(N), u(N), w(N);
    for (std::uint64_t n = 0; n < trials; ++n) {
      for (std::size_t i = 0; i < N; ++i) {
        x[i] = uniform_int(g, rx[i]);
        u[i] = uniform_int(g, ru[i]);
        w[i] = uniform_int(g, rw[i]);
      }
      const int t = 1 + uniform_int(g, raw.T);
      const auto& [i, j] = pairs[static_cast<std::size_t>(uniform_int(g, static_cast<int>(pairs.size())))];
      if (!check_one(raw, t, x, u, w, i, j, rep)) return rep;
    }
    return rep;
  }
  double tuples = static_cast<double>(raw.T);
  for (std::size_t i = 0; i < N; ++i) tuples *= static_cast<double>(rx[i]) * ru[i] * rw[i];
  const double evals = tuples * static_cast<double>(pairs.size()) * 2.0;
  if (evals > static_cast<double>(kExchangeGuard))
    throw CapExceeded("exchangeability check: " + std::to_string(evals) +
                      " joint evaluations exceed guard " + std::to_string(kExchangeGuard));
  for (int t = 1; t <= raw.T; ++t) {
    Joint x(N, 0);
    do {
      Joint u(N, 0);
      do {
        Joint w(N, 0);
        do {
          for (const auto& [i, j] : pairs)
            if (!check_one(raw, t, x, u, w, i, j, rep)) return rep;
        } while (next_joint(w, rw));
      } while (next_joint(u, ru));
    } while (next_joint(x, rx));
  }
  return rep;
}

namespace {

// Canonical joint (x, u) whose per-sub-population (state, action) counts match D; agent `self` (if >= 0)
// is given (sx, su) and the remaining agents are filled in ascending (x, u) order.
void canonical_joint(const RawAgentModel& raw, const StateActionDist& D, int self, int sx, int su, Joint& x, Joint& u) {
  const std::size_t N = raw.agents();
  x.assign(N, 0);
  u.assign(N, 0);
  const std::size_t K = raw.num_states.size();
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<int> members;
    for (std::size_t i = 0; i < N; ++i)
      if (raw.subpop_of[i] == static_cast<int>(k)) members.push_back(static_cast<int>(i));
    const int n = static_cast<int>(members.size());
    const int nx = raw.num_states[k], nu = raw.num_actions[k];
    std::vector<int> counts(static_cast<std::size_t>(nx * nu));
    for (int a = 0; a < nx; ++a)
      for (int b = 0; b < nu; ++b) counts[static_cast<std::size_t>(a * nu + b)] = static_cast<int>(std::lround(D(k, a, b) * n));
    std::size_t slot = 0;
    if (self >= 0 && raw.subpop_of[static_cast<std::size_t>(self)] == static_cast<int>(k)) {
      auto& c = counts[static_cast<std::size_t>(sx * nu + su)];
      if (c > 0) --c;
      x[static_cast<std::size_t>(self)] = sx;
      u[static_cast<std::size_t>(self)] = su;
    }
    for (int i : members) {
      if (i == self) continue;
      while (slot < counts.size() && counts[slot] == 0) ++slot;
      if (slot == counts.size()) break;
      x[static_cast<std::size_t>(i)] = static_cast<int>(slot) / nu;
      u[static_cast<std::size_t>(i)] = static_cast<int>(slot) % nu;
      --counts[slot];
    }
  }
}

}  // namespace

TeamModel reduce_to_team_model(const RawAgentModel& raw, const std::vector<std::vector<double>>& noise_pmf,
                               const std::vector<std::vector<double>>& init_pmf) {
  TeamModel model;
  const std::size_t K = raw.num_states.size();
  auto shared = std::make_shared<RawAgentModel>(raw);
  for (std::size_t k = 0; k < K; ++k) {
    SubPopSpec sp;
    sp.name = "k" + std::to_string(k);
    int first = -1;
    sp.size = 0;
    for (std::size_t i = 0; i < raw.agents(); ++i)
      if (raw.subpop_of[i] == static_cast<int>(k)) {
        if (first < 0) first = static_cast<int>(i);
        ++sp.size;
      }
    for (int x = 0; x < raw.num_states[k]; ++x) sp.states.push_back(std::to_string(x));
    for (int u = 0; u < raw.num_actions[k]; ++u) sp.actions.push_back(std::to_string(u));
    for (int w = 0; w < raw.num_noises[k]; ++w) sp.noises.push_back(std::to_string(w));
    sp.noise_pmf = {noise_pmf[k]};
    sp.init_pmf = init_pmf[k];
    sp.dynamics = [shared, first](int t, int x, int u, const StateActionDist& D, int w) {
      Joint jx, ju;
      canonical_joint(*shared, D, first, x, u, jx, ju);
      Joint jw(shared->agents(), 0);
      jw[static_cast<std::size_t>(first)] = w;
      return shared->dynamics(t, jx, ju, jw)[static_cast<std::size_t>(first)];
    };
    model.subpops.push_back(std::move(sp));
  }
  model.cost.joint = [shared](int t, const StateActionDist& D) {
    Joint jx, ju;
    canonical_joint(*shared, D, -1, 0, 0, jx, ju);
    return shared->cost(t, jx, ju);
  };
  model.horizon.T = raw.T;
  model.time_homogeneous = false;
  finalize_model(model);
  return model;
}

}  // namespace deepteam
