#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "deepteam/types.hpp"

namespace deepteam {

// Fills row[y] = P^k_t(y | x, u, D) for every next state y. Must be total on the hypercube.
using KernelFn = std::function<void(int t, int x, int u, const StateActionDist& D, std::span<double> row)>;
// Functional form x' = f^k_t(x, u, D, w); returns the next state index.
using DynamicsFn = std::function<int(int t, int x, int u, const StateActionDist& D, int w)>;
using AgentCostFn = std::function<double(int t, int x, int u, const StateActionDist& D)>;
using JointCostFn = std::function<double(int t, const StateActionDist& D)>;

struct SubPopSpec {
  std::string name;
  int size = 1;
  std::vector<std::string> states;
  std::vector<std::string> actions;
  std::vector<std::string> noises;
  // One pmf per time step (index t-1), or a single pmf for all t.
  std::vector<std::vector<double>> noise_pmf;
  std::vector<double> init_pmf;
  // Explicit initial state of each agent; when non-empty it replaces init_pmf.
  std::vector<int> init_states;
  KernelFn kernel;
  DynamicsFn dynamics;
  // false when the kernel (and dynamics) ignore D; enables row caching by local state only.
  bool kernel_depends_on_D = true;
  // Major agent (size 1): its local law reduces to one action, so only constant maps are enumerated.
  bool major = false;

  int num_states() const { return static_cast<int>(states.size()); }
  int num_actions() const { return static_cast<int>(actions.size()); }
  int num_noises() const { return static_cast<int>(noises.size()); }
  const std::vector<double>& noise_at(int t) const;
};

struct CostSpec {
  // Optional per-agent costs, one per sub-population (empty function = zero).
  std::vector<AgentCostFn> per_agent;
  // Optional term evaluated on the whole distribution.
  JointCostFn joint;
};

struct Horizon {
  int T = 0;          // finite horizon length when beta == 0
  double beta = 0.0;  // discount factor in (0,1) for infinite horizon

  bool discounted() const { return beta > 0.0; }
};

struct TeamModel {
  std::vector<SubPopSpec> subpops;
  CostSpec cost;
  Horizon horizon;
  bool time_homogeneous = true;

  std::size_t K() const { return subpops.size(); }
  std::size_t index_of(const std::string& name) const;
  bool has_dynamics() const;
};

// Completes a programmatically built model: derives kernels from functional dynamics where no kernel
// was given and checks shapes. Throws ValidationError on malformed alphabets or missing maps.
void finalize_model(TeamModel& model);

StateActionDist zero_state_action(const TeamModel& model);

void kernel_row(const TeamModel& model, std::size_t k, int t, int x, int u, const StateActionDist& D,
                std::span<double> row);
double kernel_eval(const TeamModel& model, std::size_t k, int t, int y, int x, int u, const StateActionDist& D);
// Symbol-level form; throws std::invalid_argument for unknown symbols or D outside [0,1].
double kernel_eval(const TeamModel& model, std::size_t k, int t, const std::string& y, const std::string& x,
                   const std::string& u, const StateActionDist& D);

// c_t(D); throws Error naming t when the value is negative or not finite.
double cost_eval(const TeamModel& model, int t, const StateActionDist& D);

struct ValidationReport {
  std::vector<std::string> violations;
  bool valid() const { return violations.empty(); }
};

// Probes pmfs, kernel rows and costs. Alphabet defects throw ValidationError instead of being listed.
ValidationReport validate_model(const TeamModel& model, int probe_count = 64, std::uint64_t seed = 1);

// Times t at which the model must be evaluated: 1..T, or just 1 when time-homogeneous or discounted.
std::vector<int> model_times(const TeamModel& model);

}  // namespace deepteam
