#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "deepteam/model.hpp"

namespace deepteam {

// Lipschitz constants indexed by t-1 (one entry for time-homogeneous or discounted models).
// H5 and H6 carry T+1 entries, the last being the terminal zero.
struct LipschitzProfile {
  std::vector<double> H1, H2, H3, H4, H5, H6;
  double C = 0.0;
  bool supplied = false;  // analytical constants given by the caller rather than estimated
  int pairs = 0;
  int r_probe = 0;
  double max_ratio = 0.0;

  double h3(int t) const { return H3[std::min<std::size_t>(static_cast<std::size_t>(t - 1), H3.size() - 1)]; }
  double h4(int t) const { return H4[std::min<std::size_t>(static_cast<std::size_t>(t - 1), H4.size() - 1)]; }
  double H5_1() const { return H5.empty() ? 0.0 : H5[0]; }
  double H6_1() const { return H6.empty() ? 0.0 : H6[0]; }
};

struct LipschitzOptions {
  int r_probe = 4;
  int pairs = 2000;
  std::uint64_t seed = 11;
  int workers = 1;
  // Probe pairs on products of simplices (where deep states and mean-fields live) or on the full hypercube.
  bool hypercube = false;
};

// max_k |X^k| |W^k|
double default_population_constant(const TeamModel& model);

// Running-max estimates of H1..H4 over deterministic probe pairs; pair i depends only on (seed, i), so more
// pairs never lowers an estimate.
LipschitzProfile estimate_lipschitz(const TeamModel& model, const LipschitzOptions& opts = {});

// Caller-supplied constants, constant in t.
LipschitzProfile supplied_profile(double H3, double H4, double C);

// H5_t = H4_t + H5_{t+1} H3_t, H6_t = H5_{t+1} + H6_{t+1}, H5_{T+1} = H6_{T+1} = 0.
void h_recursions(LipschitzProfile& profile, int T);

enum class BoundMode { PoI, PoC, Both };

inline constexpr double kInfiniteLevels = std::numeric_limits<double>::infinity();

// (H5_1+H6_1) C/sqrt(n), (H5_1+H6_1)/r, or their sum.
double epsilon_finite(const LipschitzProfile& profile, double n, double r, BoundMode mode);

// H4/((1-beta)(1-beta H3)) (C/sqrt(n) + 1/r); throws AssumptionViolation when beta H3 >= 1.
double epsilon_discounted(const LipschitzProfile& profile, double n, double beta, double r = kInfiniteLevels);

}  // namespace deepteam
