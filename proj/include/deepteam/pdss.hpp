#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "deepteam/bounds.hpp"
#include "deepteam/kernel.hpp"
#include "deepteam/stage.hpp"

namespace deepteam {

// Mask over sub-populations from a list of observed indices.
std::vector<bool> observation_mask(const TeamModel& model, const std::vector<std::size_t>& observed);

// Initial mixed state: observed components from d1, the others from the initial pmfs.
MixedState initial_mixed_state(const TeamModel& model, const std::vector<bool>& observed, const DeepState& d1);

// Online mixed-state tracking. chooser(t, p_t) returns the law index applied at t; observed components
// are copied from the observations, the others follow hat_f.
std::vector<MixedState> mixed_trajectory(const TeamModel& model, const std::vector<bool>& observed,
                                         const std::function<std::uint64_t(int, const MixedState&)>& chooser,
                                         const std::vector<DeepState>& observations);

// Canonical key of a node in the reachable mixed-state tree: "t|r1,..,rt|g1,..,g(t-1)" where r are joint
// ranks of the observed deep states and g law indices.
std::string tree_key(int t, const std::vector<std::uint64_t>& ranks, const std::vector<std::uint64_t>& laws);

struct TreeSolution {
  std::vector<bool> observed;
  int T = 0;
  LawSpace laws;
  std::map<std::string, double> values;
  std::map<std::string, std::uint32_t> policy;
  std::vector<std::pair<std::string, double>> roots;  // initial keys and probabilities
  double expected_value = 0.0;                       // E[V^p_1(p_1)]
  std::uint64_t nodes = 0;
};

// Exact mixed-state DP over the tree of histories reachable from every initial observed deep state.
TreeSolution solve_pdss_exact_small(const TeamModel& model, const std::vector<bool>& observed,
                                    const SolveOptions& opts = {});

// Finite-horizon DP with observed deep states exact and unobserved mean-fields on the r-level grid.
DpSolution solve_pdss_quantized_finite(const TeamModel& model, const std::vector<bool>& observed, int r,
                                       const SolveOptions& opts = {});

// Discounted counterpart. Requires beta*H3 < 1, using `profile` when given, otherwise an estimate.
DpSolution value_iteration_pdss_quantized(const TeamModel& model, const std::vector<bool>& observed, int r, double tol,
                                          const SolveOptions& opts = {}, const LipschitzProfile* profile = nullptr);

}  // namespace deepteam
