#pragma once

#include <vector>

#include "deepteam/stage.hpp"

namespace deepteam {

// Finite-horizon DP over the joint deep-state lattice with the exact multinomial-convolution law.
DpSolution solve_dss_finite(const TeamModel& model, const SolveOptions& opts = {});

// Same recursion with the deep states of the sub-populations in R replaced by their r-level quantization.
// Transitions from a grid point start at the nearest lattice point mapping to it; costs are evaluated at
// the grid point itself.
DpSolution solve_dss_quantized(const TeamModel& model, int r, const std::vector<bool>& R, const SolveOptions& opts = {});

// Discounted Bellman fixed point from V = 0; stops when the sweep change drops below tol(1-beta)/(2 beta).
DpSolution value_iteration_dss(const TeamModel& model, double tol, const SolveOptions& opts = {});
DpSolution value_iteration_dss_quantized(const TeamModel& model, int r, const std::vector<bool>& R, double tol,
                                         const SolveOptions& opts = {});

}  // namespace deepteam
