#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "deepteam/pdss.hpp"
#include "deepteam/stage.hpp"

namespace deepteam {

// A fair strategy: every agent of sub-population k applies action[k][x] of the law chosen from shared
// information. Strategies may keep history, so rollouts clone them.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual std::unique_ptr<Strategy> clone() const = 0;
  virtual void reset() = 0;
  // Law index (canonical enumeration) used at time t given the realized deep state d_t.
  virtual std::uint64_t choose(const TeamModel& model, int t, const DeepState& d) = 0;
  virtual std::string name() const = 0;
  virtual const LawSpace& laws() const = 0;
};

// Policy tables from any lattice/grid DP. Quantized deep states are looked up at Q(d_t); unobserved
// mean-fields are tracked with hat_f and looked up at their quantization.
class TableStrategy final : public Strategy {
 public:
  explicit TableStrategy(std::shared_ptr<const DpSolution> sol, std::string name = "table");
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<TableStrategy>(*this); }
  void reset() override;
  std::uint64_t choose(const TeamModel& model, int t, const DeepState& d) override;
  std::string name() const override { return name_; }
  const LawSpace& laws() const override { return sol_->laws; }

 private:
  std::shared_ptr<const DpSolution> sol_;
  std::string name_;
  bool tracks_mean_ = false;
  StateDist mean_;
  LocalLaw last_;
  int last_t_ = 0;
};

// Policy of the exact mixed-state DP, looked up by observation history.
class TreeStrategy final : public Strategy {
 public:
  TreeStrategy(std::shared_ptr<const TreeSolution> sol, const TeamModel& model, std::string name = "pdss-exact");
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<TreeStrategy>(*this); }
  void reset() override;
  std::uint64_t choose(const TeamModel& model, int t, const DeepState& d) override;
  std::string name() const override { return name_; }
  const LawSpace& laws() const override { return sol_->laws; }

 private:
  std::shared_ptr<const TreeSolution> sol_;
  std::string name_;
  std::vector<CompositionLattice> lattices_;
  std::vector<std::size_t> obs_;
  std::vector<std::uint64_t> strides_;
  std::vector<std::uint64_t> ranks_, laws_;
};

// Same law at every step; laws_by_t overrides per time (index t-1, last entry repeats).
class OpenLoopStrategy final : public Strategy {
 public:
  OpenLoopStrategy(const TeamModel& model, std::vector<std::uint64_t> laws_by_t, std::string name = "open-loop");
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<OpenLoopStrategy>(*this); }
  void reset() override {}
  std::uint64_t choose(const TeamModel&, int t, const DeepState&) override;
  std::string name() const override { return name_; }
  const LawSpace& laws() const override { return laws_; }

 private:
  LawSpace laws_;
  std::vector<std::uint64_t> seq_;
  std::string name_;
};

// Arbitrary callback, for tests and oracles.
class FunctionStrategy final : public Strategy {
 public:
  using Fn = std::function<std::uint64_t(int t, const std::vector<DeepState>& history)>;
  FunctionStrategy(const TeamModel& model, Fn fn, std::string name = "function");
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<FunctionStrategy>(*this); }
  void reset() override { history_.clear(); }
  std::uint64_t choose(const TeamModel&, int t, const DeepState& d) override;
  std::string name() const override { return name_; }
  const LawSpace& laws() const override { return laws_; }

 private:
  LawSpace laws_;
  Fn fn_;
  std::string name_;
  std::vector<DeepState> history_;
};

struct Trajectory {
  std::vector<DeepState> states;     // d_1 .. d_T
  std::vector<std::uint64_t> laws;   // law index per step
  std::vector<double> costs;         // c_t(D_t) per step (undiscounted)
  double total = 0.0;                // sum of (discounted) step costs
};

// Uniform draw for agent i of sub-population k at step t (0-based agent index).
using DrawFn = std::function<double(int t, std::size_t k, int i)>;

// Agent-level rollout. `initial` gives every agent's state; `draw` supplies the per-step uniforms that
// are mapped to noise symbols (functional dynamics) or next states (kernel sampling) by inverse CDF.
Trajectory rollout_with_draws(const TeamModel& model, Strategy& strategy, int steps,
                              const std::vector<std::vector<int>>& initial, const DrawFn& draw);

// Initial agent states for replication stream g: explicit lists, or inverse-CDF draws from init pmfs.
std::vector<std::vector<int>> sample_initial_agents(const TeamModel& model, std::mt19937_64& g);

// One replication with stream (seed, rep); `steps` is T for finite horizons or the truncation length.
Trajectory simulate_rollout(const TeamModel& model, const Strategy& strategy, int steps, std::uint64_t seed,
                            std::uint64_t rep = 0);

struct SimOptions {
  int reps = 1000;
  std::uint64_t seed = 1;
  int workers = 1;
  // Exact enumeration is used when the outcome-path bound is at most this (finite horizon only).
  double exact_path_limit = 1e6;
  bool allow_exact = true;
  // Discounted truncation: remainder bound <= 0.1 * target_ci.
  double target_ci = 1e-3;
  // Per-step cost bound; estimated from probes when <= 0.
  double cost_bound = 0.0;
  std::uint64_t cap = kDefaultCap;
};

struct Evaluation {
  double mean = 0.0;
  double ci_half = 0.0;  // 95% normal approximation; 0 in exact mode
  int reps = 0;
  bool exact = false;
  int steps = 0;
  double truncation_remainder = 0.0;
};

// Number of simulated steps for a discounted model, and the remainder bound beta^T cbar/(1-beta).
std::pair<int, double> truncation_horizon(double beta, double cost_bound, double target_ci);

// Upper bound on the per-step cost from simplex probes under every law (used only when none is given).
double estimate_cost_bound(const TeamModel& model, std::uint64_t seed = 5);

// Exact outcome enumeration of a fair strategy over the joint deep-state process (finite horizon).
double exact_strategy_cost(const TeamModel& model, const Strategy& strategy, std::uint64_t cap = kDefaultCap);

// Upper bound on the number of outcome paths (initial support times lattice size^(T-1)).
double outcome_path_bound(const TeamModel& model, std::uint64_t cap = kDefaultCap);

Evaluation evaluate_strategy(const TeamModel& model, const Strategy& strategy, const SimOptions& opts);

struct GapEstimate {
  double gap = 0.0;      // |J_A - J_B|
  double diff = 0.0;     // J_A - J_B
  double ci_half = 0.0;
  int reps = 0;
  bool exact = false;
};

// Common random numbers: replication j drives both strategies with the same stream.
GapEstimate empirical_gap(const TeamModel& model, const Strategy& a, const Strategy& b, const SimOptions& opts);

}  // namespace deepteam
