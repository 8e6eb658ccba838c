#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace deepteam {

// Count vector of one sub-population over its local states.
using Counts = std::vector<int>;

// One count vector per sub-population.
using DeepState = std::vector<Counts>;

// One real vector per sub-population over its local states: a deep-state value, a
// mean-field, or an arbitrary hypercube point.
using StateDist = std::vector<std::vector<double>>;

// Joint state-action distribution, one |X^k| x |U^k| block per sub-population (row-major by state).
struct StateActionDist {
  std::vector<std::vector<double>> mass;
  std::vector<int> num_actions;

  double operator()(std::size_t k, int x, int u) const {
    return mass[k][static_cast<std::size_t>(x * num_actions[k] + u)];
  }
  double& at(std::size_t k, int x, int u) {
    return mass[k][static_cast<std::size_t>(x * num_actions[k] + u)];
  }
  // Marginal mass of state x in sub-population k.
  double state_mass(std::size_t k, int x) const {
    double s = 0.0;
    for (int u = 0; u < num_actions[k]; ++u) s += (*this)(k, x, u);
    return s;
  }
};

// Per sub-population total map from local state index to action index.
struct LocalLaw {
  std::vector<std::vector<int>> action;  // action[k][x]
  bool operator==(const LocalLaw&) const = default;
};

}  // namespace deepteam
