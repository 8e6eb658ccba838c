#include <memory>
#include <optional>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deepteam/bounds.hpp"
#include "deepteam/dss.hpp"
#include "deepteam/error.hpp"
#include "deepteam/model_io.hpp"
#include "deepteam/pdss.hpp"
#include "deepteam/service.hpp"
#include "deepteam/sim.hpp"

namespace py = pybind11;
using namespace deepteam;

namespace {

using SolutionPtr = std::shared_ptr<DpSolution>;

SolutionPtr share(DpSolution s) { return std::make_shared<DpSolution>(std::move(s)); }

SolveOptions solve_options(std::uint64_t cap, int workers) {
  SolveOptions o;
  o.cap = cap;
  o.workers = workers;
  return o;
}

SimOptions sim_options(int reps, std::uint64_t seed, int workers, double target_ci) {
  SimOptions o;
  o.reps = reps;
  o.seed = seed;
  o.workers = workers;
  o.target_ci = target_ci;
  return o;
}

std::vector<bool> mask(const TeamModel& m, const std::vector<std::size_t>& observed) {
  return observation_mask(m, observed);
}

}  // namespace

PYBIND11_MODULE(_deepteam, mod) {
  mod.doc() = "Deep-state dynamic programming for large teams of exchangeable agents";

  auto base = py::register_exception<Error>(mod, "Error");
  py::register_exception<ValidationError>(mod, "ValidationError", base.ptr());
  py::register_exception<CapExceeded>(mod, "CapExceeded", base.ptr());
  py::register_exception<AssumptionViolation>(mod, "AssumptionViolation", base.ptr());

  py::class_<TeamModel>(mod, "TeamModel")
      .def_property_readonly("K", &TeamModel::K)
      .def_property_readonly("names", [](const TeamModel& m) {
        std::vector<std::string> out;
        for (const auto& s : m.subpops) out.push_back(s.name);
        return out;
      })
      .def_property_readonly("sizes", [](const TeamModel& m) {
        std::vector<int> out;
        for (const auto& s : m.subpops) out.push_back(s.size);
        return out;
      })
      .def_property_readonly("T", [](const TeamModel& m) { return m.horizon.T; })
      .def_property_readonly("beta", [](const TeamModel& m) { return m.horizon.beta; });

  mod.def("load_model", &load_model_file, py::arg("path"));
  mod.def("parse_model", &parse_model_text, py::arg("text"));
  mod.def(
      "validate",
      [](const TeamModel& m, int probes, std::uint64_t seed) { return validate_model(m, probes, seed).violations; },
      py::arg("model"), py::arg("probes") = 64, py::arg("seed") = 1,
      "Violations found by probing; empty when the model is valid.");

  py::class_<DpSolution, SolutionPtr>(mod, "Solution")
      .def_readonly("stationary", &DpSolution::stationary)
      .def_readonly("T", &DpSolution::T)
      .def_readonly("beta", &DpSolution::beta)
      .def_readonly("optimal_cost", &DpSolution::optimal_cost)
      .def_readonly("iterations", &DpSolution::iterations)
      .def_readonly("deltas", &DpSolution::deltas)
      .def_readonly("values", &DpSolution::values)
      .def_readonly("policy", &DpSolution::policy);

  py::class_<TreeSolution, std::shared_ptr<TreeSolution>>(mod, "TreeSolution")
      .def_readonly("expected_value", &TreeSolution::expected_value)
      .def_readonly("nodes", &TreeSolution::nodes)
      .def_readonly("values", &TreeSolution::values)
      .def_readonly("policy", &TreeSolution::policy);

  mod.def(
      "solve_dss",
      [](const TeamModel& m, double tol, std::uint64_t cap, int workers) {
        const SolveOptions o = solve_options(cap, workers);
        return share(m.horizon.discounted() ? value_iteration_dss(m, tol, o) : solve_dss_finite(m, o));
      },
      py::arg("model"), py::arg("tol") = 1e-8, py::arg("cap") = kDefaultCap, py::arg("workers") = 1,
      py::call_guard<py::gil_scoped_release>());
  mod.def(
      "solve_dss_quantized",
      [](const TeamModel& m, int r, const std::vector<bool>& R, double tol, std::uint64_t cap, int workers) {
        const SolveOptions o = solve_options(cap, workers);
        return share(m.horizon.discounted() ? value_iteration_dss_quantized(m, r, R, tol, o)
                                            : solve_dss_quantized(m, r, R, o));
      },
      py::arg("model"), py::arg("r"), py::arg("quantized"), py::arg("tol") = 1e-8, py::arg("cap") = kDefaultCap,
      py::arg("workers") = 1, py::call_guard<py::gil_scoped_release>());
  mod.def(
      "solve_pdss_exact",
      [](const TeamModel& m, const std::vector<std::size_t>& observed, std::uint64_t cap, int workers) {
        return std::make_shared<TreeSolution>(
            solve_pdss_exact_small(m, mask(m, observed), solve_options(cap, workers)));
      },
      py::arg("model"), py::arg("observed"), py::arg("cap") = kDefaultCap, py::arg("workers") = 1,
      py::call_guard<py::gil_scoped_release>());
  mod.def(
      "solve_pdss_quantized",
      [](const TeamModel& m, const std::vector<std::size_t>& observed, int r, double tol, std::uint64_t cap,
         int workers) {
        const SolveOptions o = solve_options(cap, workers);
        const auto S = mask(m, observed);
        return share(m.horizon.discounted() ? value_iteration_pdss_quantized(m, S, r, tol, o)
                                            : solve_pdss_quantized_finite(m, S, r, o));
      },
      py::arg("model"), py::arg("observed"), py::arg("r"), py::arg("tol") = 1e-8, py::arg("cap") = kDefaultCap,
      py::arg("workers") = 1, py::call_guard<py::gil_scoped_release>());

  py::class_<Evaluation>(mod, "Evaluation")
      .def_readonly("mean", &Evaluation::mean)
      .def_readonly("ci_half", &Evaluation::ci_half)
      .def_readonly("reps", &Evaluation::reps)
      .def_readonly("exact", &Evaluation::exact)
      .def_readonly("steps", &Evaluation::steps)
      .def_readonly("truncation_remainder", &Evaluation::truncation_remainder);
  py::class_<GapEstimate>(mod, "GapEstimate")
      .def_readonly("gap", &GapEstimate::gap)
      .def_readonly("diff", &GapEstimate::diff)
      .def_readonly("ci_half", &GapEstimate::ci_half)
      .def_readonly("reps", &GapEstimate::reps)
      .def_readonly("exact", &GapEstimate::exact);

  mod.def(
      "evaluate",
      [](const TeamModel& m, SolutionPtr sol, int reps, std::uint64_t seed, int workers, double target_ci) {
        return evaluate_strategy(m, TableStrategy(std::move(sol)), sim_options(reps, seed, workers, target_ci));
      },
      py::arg("model"), py::arg("solution"), py::arg("reps") = 1000, py::arg("seed") = 1, py::arg("workers") = 1,
      py::arg("target_ci") = 1e-3, py::call_guard<py::gil_scoped_release>());
  mod.def(
      "gap",
      [](const TeamModel& m, SolutionPtr a, SolutionPtr b, int reps, std::uint64_t seed, int workers,
         double target_ci) {
        return empirical_gap(m, TableStrategy(std::move(a)), TableStrategy(std::move(b)),
                             sim_options(reps, seed, workers, target_ci));
      },
      py::arg("model"), py::arg("a"), py::arg("b"), py::arg("reps") = 1000, py::arg("seed") = 1,
      py::arg("workers") = 1, py::arg("target_ci") = 1e-3, py::call_guard<py::gil_scoped_release>());

  py::class_<LipschitzProfile>(mod, "LipschitzProfile")
      .def_readonly("H1", &LipschitzProfile::H1)
      .def_readonly("H2", &LipschitzProfile::H2)
      .def_readonly("H3", &LipschitzProfile::H3)
      .def_readonly("H4", &LipschitzProfile::H4)
      .def_readonly("H5", &LipschitzProfile::H5)
      .def_readonly("H6", &LipschitzProfile::H6)
      .def_readonly("C", &LipschitzProfile::C)
      .def_readonly("supplied", &LipschitzProfile::supplied);
  mod.def(
      "estimate_lipschitz",
      [](const TeamModel& m, int pairs, std::uint64_t seed, int workers) {
        LipschitzOptions o;
        o.pairs = pairs;
        o.seed = seed;
        o.workers = workers;
        LipschitzProfile p = estimate_lipschitz(m, o);
        if (!m.horizon.discounted()) h_recursions(p, m.horizon.T);
        return p;
      },
      py::arg("model"), py::arg("pairs") = 2000, py::arg("seed") = 11, py::arg("workers") = 1);
  mod.def(
      "supplied_profile",
      [](double H3, double H4, double C, std::optional<int> T) {
        LipschitzProfile p = supplied_profile(H3, H4, C);
        if (T) h_recursions(p, *T);
        return p;
      },
      py::arg("H3"), py::arg("H4"), py::arg("C"), py::arg("T") = py::none());

  py::enum_<BoundMode>(mod, "BoundMode")
      .value("PoI", BoundMode::PoI)
      .value("PoC", BoundMode::PoC)
      .value("Both", BoundMode::Both);
  mod.def("epsilon_finite", &epsilon_finite, py::arg("profile"), py::arg("n"), py::arg("r"), py::arg("mode"));
  mod.def("epsilon_discounted", &epsilon_discounted, py::arg("profile"), py::arg("n"), py::arg("beta"),
          py::arg("r") = kInfiniteLevels);

  py::class_<ServiceParams>(mod, "ServiceParams")
      .def(py::init<>())
      .def_readwrite("n", &ServiceParams::n)
      .def_readwrite("beta", &ServiceParams::beta)
      .def_readwrite("mu", &ServiceParams::mu)
      .def_readwrite("alpha", &ServiceParams::alpha)
      .def_readwrite("q", &ServiceParams::q)
      .def_readwrite("lambda_", &ServiceParams::lambda)
      .def_readwrite("capacities", &ServiceParams::capacities)
      .def_readwrite("capacity_price", &ServiceParams::capacity_price)
      .def_readwrite("fault_prob", &ServiceParams::fault_prob)
      .def("describe", &ServiceParams::describe);
  mod.def("service_model", &build_service_model, py::arg("params") = ServiceParams{});
  mod.def(
      "reproduce_figures",
      [](const ServiceParams& p, const std::string& outdir, std::vector<int> ns, const std::string& r_rule, int reps,
         std::uint64_t seed, int workers, bool force) {
        FigureOptions o;
        o.ns = std::move(ns);
        o.r_rule = r_rule;
        o.reps = reps;
        o.seed = seed;
        o.workers = workers;
        o.force = force;
        return reproduce_figures(p, outdir, o);
      },
      py::arg("params"), py::arg("outdir"), py::arg("ns") = std::vector<int>{10, 20, 50, 100, 200},
      py::arg("r_rule") = "n", py::arg("reps") = 2000, py::arg("seed") = 2024, py::arg("workers") = 1,
      py::arg("force") = false, py::call_guard<py::gil_scoped_release>());
}
