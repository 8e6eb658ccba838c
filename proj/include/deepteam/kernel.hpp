#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "deepteam/error.hpp"
#include "deepteam/model.hpp"
#include "deepteam/statespace.hpp"
#include "deepteam/types.hpp"

namespace deepteam {

// Product of per-sub-population composition lattices; sub-population 0 is the most significant digit.
class JointLattice {
 public:
  JointLattice() = default;
  explicit JointLattice(const TeamModel& model, std::uint64_t cap = kDefaultCap);

  std::size_t K() const { return parts_.size(); }
  const CompositionLattice& part(std::size_t k) const { return parts_[k]; }
  std::uint64_t stride(std::size_t k) const { return strides_[k]; }
  std::uint64_t size() const { return size_; }
  std::uint64_t rank(const DeepState& d) const;
  DeepState unrank(std::uint64_t r) const;

 private:
  std::vector<CompositionLattice> parts_;
  std::vector<std::uint64_t> strides_;
  std::uint64_t size_ = 0;
};

StateDist deep_state_value(const TeamModel& model, const DeepState& d);

StateActionDist phi(const TeamModel& model, const StateDist& z, const LocalLaw& gamma);

// Noise-empirical update of every sub-population: sum_w sum_x z(x) 1{f(x,gamma(x),phi,w)=y} c(w)/n_k.
// Requires functional dynamics.
StateDist bar_f(const TeamModel& model, int t, const StateDist& z, const LocalLaw& gamma,
                const std::vector<Counts>& noise_counts);
// n_k^2 * bar_f at a deep state, as exact integers.
std::vector<std::vector<long long>> bar_f_numerators(const TeamModel& model, int t, const DeepState& d,
                                                     const LocalLaw& gamma, const std::vector<Counts>& noise_counts);

// Mean-field update sum_x z(x) P(y | x, gamma(x), phi(z, gamma)).
StateDist hat_f(const TeamModel& model, int t, const StateDist& z, const LocalLaw& gamma);

double ell(const TeamModel& model, int t, const StateDist& z, const LocalLaw& gamma);

// Law of the next count of state y in sub-population k: convolution over x of Binomial(c(x), P(y|x,...)).
std::vector<double> dck_marginal(const TeamModel& model, int t, std::size_t k, int y, const DeepState& d,
                                 const LocalLaw& gamma);

// Sparse law over next count vectors of one sub-population, by lattice rank (ascending).
struct SparseDist {
  std::vector<std::uint64_t> index;
  std::vector<double> prob;
};

// Exact law of the next counts of sub-population k given its current counts, its action map and D:
// convolution over source states of multinomial(c(x), P(.|x, actions[x], D)).
SparseDist next_count_distribution(const TeamModel& model, int t, std::size_t k, const Counts& counts,
                                   const std::vector<int>& actions, const StateActionDist& D,
                                   const CompositionLattice& lattice);

struct TransitionRow {
  std::vector<std::pair<std::uint64_t, double>> entries;  // (joint rank, probability), ascending rank
};

TransitionRow joint_transition(const TeamModel& model, int t, const DeepState& d, const LocalLaw& gamma,
                               std::uint64_t cap = kDefaultCap);

// Noise route: sum over noise empiricals of 1{d' = bar_f(d, gamma, w)} P(w). Mass landing off the
// lattice (bar_f not a count vector) is reported separately.
struct NoiseRouteRow {
  TransitionRow row;
  double off_lattice_mass = 0.0;
};
NoiseRouteRow joint_transition_noise_route(const TeamModel& model, int t, const DeepState& d, const LocalLaw& gamma,
                                           std::uint64_t cap = kDefaultCap);

struct MixedState {
  std::vector<bool> observed;  // k in S
  StateDist z;                 // deep-state values for observed k, mean-fields otherwise
};

// Observed components advance by bar_f with the given noise counts, the others by hat_f.
MixedState mixed_step(const TeamModel& model, int t, const MixedState& p, const LocalLaw& gamma,
                      const std::vector<Counts>& noise_counts);

// Probe that the kernels (and dynamics) of observed sub-populations ignore the D blocks of unobserved ones:
// 16 random perturbations per (k, x, u, t). Throws AssumptionViolation naming the first failure.
void check_observation_decoupling(const TeamModel& model, const std::vector<bool>& observed,
                                  std::uint64_t seed = 3);

}  // namespace deepteam
