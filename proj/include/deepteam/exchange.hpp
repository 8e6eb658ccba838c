#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "deepteam/model.hpp"

namespace deepteam {

// Agent-indexed model over joint spaces, used to check exchangeability within sub-populations.
struct RawAgentModel {
  using Joint = std::vector<int>;
  std::vector<int> subpop_of;  // sub-population of every agent
  std::vector<int> num_states, num_actions, num_noises;  // per sub-population
  int T = 1;
  // Next joint state from (t, x, u, w); agent i's next state may read the whole joint (x, u) but only w[i].
  std::function<Joint(int t, const Joint& x, const Joint& u, const Joint& w)> dynamics;
  std::function<double(int t, const Joint& x, const Joint& u)> cost;

  std::size_t agents() const { return subpop_of.size(); }
};

struct ExchangeCounterexample {
  int t = 0;
  RawAgentModel::Joint x, u, w;
  int i = 0, j = 0;
  std::string what;  // "dynamics" or "cost"
};

struct ExchangeReport {
  bool pass = true;
  std::uint64_t checked = 0;
  std::optional<ExchangeCounterexample> counterexample;
};

inline constexpr std::uint64_t kExchangeGuard = 10'000'000ULL;

// trials > 0: sampled tuples and sampled within-sub-population transpositions.
// trials == 0: every tuple at every t against every transposition.
// Refuses with CapExceeded when the number of joint evaluations would exceed kExchangeGuard.
ExchangeReport check_partial_exchangeability(const RawAgentModel& raw, std::uint64_t trials, std::uint64_t seed);

// Team model with per-agent dynamics f^k(x, u, D, w) and joint cost read off the raw model at a canonical
// agent ordering consistent with D's counts. Valid on the lattice; D is rounded to counts.
TeamModel reduce_to_team_model(const RawAgentModel& raw, const std::vector<std::vector<double>>& noise_pmf,
                               const std::vector<std::vector<double>>& init_pmf);

}  // namespace deepteam
