#pragma once

// Shared machinery of the deep-state and mixed-state dynamic programs: product state domains whose
// components are exact lattices or quantized grids, per-time compiled stages, backward induction and
// value iteration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "deepteam/kernel.hpp"
#include "deepteam/model.hpp"
#include "deepteam/statespace.hpp"

namespace deepteam {

enum class ComponentKind {
  Exact,          // count vector on the lattice of n_k agents
  QuantizedDeep,  // quantized deep state; transitions taken from a representative lattice point
  QuantizedMean,  // quantized mean-field advanced deterministically by hat_f
};

struct ComponentDomain {
  ComponentKind kind = ComponentKind::Exact;
  int n = 0;
  int m = 0;
  int r = 0;
  CompositionLattice lattice;                  // Exact and QuantizedDeep
  std::vector<std::vector<int>> points;        // grid numerators, lexicographic
  std::vector<std::uint32_t> lattice_to_local;  // QuantizedDeep: lattice rank -> grid key
  std::vector<std::uint64_t> representative;    // QuantizedDeep: grid key -> nearest lattice rank

  std::uint64_t size() const;
  std::vector<double> values(std::uint64_t local) const;
  std::uint64_t encode(const std::vector<int>& q) const;
  // Grid key of a numerator vector, or -1 when absent.
  long long find(const std::vector<int>& q) const;
  void rebuild_index();

  std::unordered_map<std::uint64_t, std::uint32_t> index;
};

class StateSpace {
 public:
  std::vector<ComponentDomain> comps;
  std::vector<std::uint64_t> strides;
  std::uint64_t total = 0;

  void finalize(std::uint64_t cap);
  std::uint64_t size() const { return total; }
  std::uint64_t local(std::uint64_t s, std::size_t k) const { return (s / strides[k]) % comps[k].size(); }
  // Values used for cost evaluation.
  StateDist point(std::uint64_t s) const;
  // Values used for kernel evaluation (representatives for quantized deep states).
  StateDist kernel_point(const TeamModel& model, std::uint64_t s) const;
  bool any_quantized() const;
  // Domain index of a realized deep state; QuantizedMean components are read from `mean`.
  std::uint64_t locate(const DeepState& d, const StateDist* mean) const;
};

StateSpace make_space(const TeamModel& model, const std::vector<ComponentKind>& kinds, int r, std::uint64_t cap);

// Relative band inside which two Q-values count as tied, so summation-order noise cannot override the
// smallest-index rule.
inline constexpr double kTieTolerance = 1e-12;
inline bool improves(double q, double best) {
  if (!std::isfinite(best)) return q < best;
  return q < best - kTieTolerance * std::max(1.0, std::abs(best));
}

struct SolveOptions {
  std::uint64_t cap = kDefaultCap;
  int workers = 1;
};

struct DpSolution {
  StateSpace space;
  LawSpace laws;
  bool stationary = false;
  int T = 0;
  double beta = 0.0;
  int r = 0;
  std::vector<bool> observed;  // sub-populations whose deep states the policy reads
  std::vector<std::vector<double>> values;          // [t-1][s], or [0] when stationary
  std::vector<std::vector<std::uint32_t>> policy;  // same layout
  double optimal_cost = 0.0;                        // E[V_1] under the initial distribution
  int iterations = 0;
  std::vector<double> deltas;  // sup-norm change per value-iteration sweep

  const std::vector<std::uint32_t>& policy_at(int t) const { return stationary ? policy[0] : policy[static_cast<std::size_t>(t - 1)]; }
  const std::vector<double>& values_at(int t) const { return stationary ? values[0] : values[static_cast<std::size_t>(t - 1)]; }
};

// Grows QuantizedMean components until every successor Q(hat_f) is present.
void close_mean_field_domains(const TeamModel& model, StateSpace& space, const LawSpace& laws,
                              const SolveOptions& opts);

DpSolution run_finite_dp(const TeamModel& model, StateSpace space, const SolveOptions& opts);
DpSolution run_value_iteration(const TeamModel& model, StateSpace space, double tol, const SolveOptions& opts);

// Law of the initial domain state under the model's initial distribution.
std::vector<std::pair<std::uint64_t, double>> initial_distribution(const TeamModel& model, const StateSpace& space,
                                                                   std::uint64_t cap);

// Per-component successor law in local indices, used by the tree solver as well.
struct LocalRow {
  std::vector<std::uint32_t> next;
  std::vector<double> prob;
};

// E[V(next)] for a product of per-component rows, summed with component 0 outermost.
double expect_product(const std::vector<const LocalRow*>& rows, const std::vector<std::uint64_t>& strides,
                      const std::vector<double>& V);

}  // namespace deepteam
