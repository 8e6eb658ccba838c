#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepteam/exchange.hpp"
#include "deepteam/model.hpp"
#include "json.hpp"

namespace deepteam {

// Service-management team: n users with binary request state choosing among service options, plus one
// server choosing its next nominal capacity.
struct ServiceParams {
  int n = 200;
  double beta = 0.8;
  double mu = 0.8;                          // request probability
  std::vector<double> alpha{0.0, 0.85, 0.0};  // participation rate per option
  std::vector<double> q{0.1, 0.05, 0.2};      // service rate per option
  // Base price c_B(u, s) = base_const[u] + base_slope[u] * s with s = 1 - d;
  // service price c_S(u, d) = service_const[u] + service_slope[u] * d.
  std::vector<double> base_const{0.59, 0.708, 0.3};
  std::vector<double> base_slope{0.0, 0.0, 0.3};
  std::vector<double> service_const{0.65, 0.78, 0.5};
  std::vector<double> service_slope{0.0, 0.0, 0.5};
  double lambda = 15.0;
  std::vector<double> capacities{0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<double> capacity_price{0.02, 0.04, 0.07, 0.12, 0.15, 0.2};
  double patch_price = 0.5;
  double fault_prob = 0.05;
  std::vector<double> user_init{0.2, 0.8};  // pmf over {no request, request}
  int server_init = 0;                      // index into capacities

  // Throws ValidationError on out-of-range values or inconsistent lengths.
  void check() const;
  // One-line parameter echo for CSV header comments.
  std::string describe() const;
};

// Replaces a time-homogeneous, D-independent table kernel by functional dynamics driven by one noise
// symbol per interval between consecutive CDF breakpoints of all rows.
void functionalize(SubPopSpec& sp);

TeamModel build_service_model(const ServiceParams& params);

// The same model in the JSON model format.
nlohmann::json service_model_json(const ServiceParams& params);

// Agent-indexed form of the user sub-population (n agents), for exchangeability checks.
RawAgentModel service_users_raw(const ServiceParams& params, int T = 1);

struct FigureOptions {
  std::vector<int> ns{10, 20, 50, 100, 200};
  std::string r_rule = "n";  // "n", "sqrt" or a fixed integer
  double tol = 1e-6;
  int reps = 2000;
  std::uint64_t seed = 2024;
  int trajectory_steps = 100;
  int workers = 1;
  std::uint64_t cap = 50'000'000ULL;
  bool force = false;
};

int levels_for(const std::string& r_rule, int n);

// Writes fig1a.csv, fig1b.csv, fig1c.csv, fig2.csv, fig3.csv and fig3_ci.csv into outdir; returns paths.
std::vector<std::string> reproduce_figures(const ServiceParams& params, const std::string& outdir,
                                           const FigureOptions& opts);

}  // namespace deepteam
