#include "deepteam/dss.hpp"

#include <stdexcept>

namespace deepteam {

namespace {

std::vector<ComponentKind> quantized_kinds(const TeamModel& model, const std::vector<bool>& R) {
  if (R.size() != model.K()) throw std::invalid_argument("quantization mask has wrong length");
  std::vector<ComponentKind> kinds(model.K(), ComponentKind::Exact);
  std::vector<bool> observed(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) {
    if (R[k]) kinds[k] = ComponentKind::QuantizedDeep;
    observed[k] = !R[k];
  }
  // Quantized sub-populations must not drive the others.
  check_observation_decoupling(model, observed);
  return kinds;
}

DpSolution tag(DpSolution sol, const TeamModel& model, int r) {
  sol.observed.assign(model.K(), true);
  sol.r = r;
  return sol;
}

}  // namespace

DpSolution solve_dss_finite(const TeamModel& model, const SolveOptions& opts) {
  auto kinds = std::vector<ComponentKind>(model.K(), ComponentKind::Exact);
  return tag(run_finite_dp(model, make_space(model, kinds, 0, opts.cap), opts), model, 0);
}

DpSolution solve_dss_quantized(const TeamModel& model, int r, const std::vector<bool>& R, const SolveOptions& opts) {
  auto kinds = quantized_kinds(model, R);
  return tag(run_finite_dp(model, make_space(model, kinds, r, opts.cap), opts), model, r);
}

DpSolution value_iteration_dss(const TeamModel& model, double tol, const SolveOptions& opts) {
  auto kinds = std::vector<ComponentKind>(model.K(), ComponentKind::Exact);
  return tag(run_value_iteration(model, make_space(model, kinds, 0, opts.cap), tol, opts), model, 0);
}

DpSolution value_iteration_dss_quantized(const TeamModel& model, int r, const std::vector<bool>& R, double tol,
                                         const SolveOptions& opts) {
  auto kinds = quantized_kinds(model, R);
  return tag(run_value_iteration(model, make_space(model, kinds, r, opts.cap), tol, opts), model, r);
}

}  // namespace deepteam
