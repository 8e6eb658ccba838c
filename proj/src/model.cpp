#include "deepteam/model.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "deepteam/error.hpp"
#include "deepteam/random.hpp"

namespace deepteam {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void check_alphabet(const std::vector<std::string>& symbols, const std::string& path) {
  if (symbols.empty()) throw ValidationError(path + ": empty alphabet");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (!seen.insert(symbols[i]).second)
      throw ValidationError(path + "[" + std::to_string(i) + "]: duplicate symbol '" + symbols[i] + "'");
  }
}

void check_pmf(const std::vector<double>& pmf, std::size_t expected, const std::string& path,
               std::vector<std::string>& out) {
  if (pmf.size() != expected) {
    out.push_back(path + ": length " + std::to_string(pmf.size()) + " != alphabet size " + std::to_string(expected));
    return;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    if (!(pmf[i] >= 0.0) || !std::isfinite(pmf[i]))
      out.push_back(path + "[" + std::to_string(i) + "]: negative or non-finite entry " + num(pmf[i]));
    s += pmf[i];
  }
  if (std::abs(s - 1.0) > 1e-12) out.push_back(path + ": pmf sum " + num(s) + " ≠ 1");
}

int symbol_index(const std::vector<std::string>& alphabet, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < alphabet.size(); ++i)
    if (alphabet[i] == s) return static_cast<int>(i);
  throw std::invalid_argument(std::string("unknown ") + what + " symbol '" + s + "'");
}

}  // namespace

const std::vector<double>& SubPopSpec::noise_at(int t) const {
  if (noise_pmf.empty()) throw Error("sub-population '" + name + "' has no noise pmf");
  std::size_t i = t >= 1 ? static_cast<std::size_t>(t - 1) : 0;
  return noise_pmf[std::min(i, noise_pmf.size() - 1)];
}

std::size_t TeamModel::index_of(const std::string& name) const {
  for (std::size_t k = 0; k < subpops.size(); ++k)
    if (subpops[k].name == name) return k;
  throw std::invalid_argument("unknown sub-population '" + name + "'");
}

bool TeamModel::has_dynamics() const {
  for (const auto& sp : subpops)
    if (!sp.dynamics) return false;
  return !subpops.empty();
}

void finalize_model(TeamModel& model) {
  if (model.subpops.empty()) throw ValidationError("subpops: at least one sub-population required");
  std::set<std::string> names;
  for (std::size_t k = 0; k < model.K(); ++k) {
    auto& sp = model.subpops[k];
    const std::string path = "subpops[" + std::to_string(k) + "]";
    if (!names.insert(sp.name).second) throw ValidationError(path + ".name: duplicate '" + sp.name + "'");
    check_alphabet(sp.states, path + ".states");
    check_alphabet(sp.actions, path + ".actions");
    check_alphabet(sp.noises, path + ".noises");
    if (sp.size < 1) throw ValidationError(path + ".size: must be positive");
    if (sp.major && sp.size != 1) throw ValidationError(path + ".major: a major agent must have size 1");
    if (!sp.kernel && !sp.dynamics) throw ValidationError(path + ".kernel: neither kernel nor dynamics given");
    if (!sp.kernel) {
      // P(y|x,u,D) = sum_w pmf(w) 1{f(x,u,D,w) = y}
      const int m = sp.num_states();
      DynamicsFn f = sp.dynamics;
      std::vector<std::vector<double>> pmfs = sp.noise_pmf;
      sp.kernel = [f, pmfs, m](int t, int x, int u, const StateActionDist& D, std::span<double> row) {
        std::fill(row.begin(), row.end(), 0.0);
        const auto& pmf = pmfs[std::min<std::size_t>(t >= 1 ? t - 1 : 0, pmfs.size() - 1)];
        for (std::size_t w = 0; w < pmf.size(); ++w) {
          if (pmf[w] == 0.0) continue;
          int y = f(t, x, u, D, static_cast<int>(w));
          if (y < 0 || y >= m) throw Error("dynamics returned out-of-range state " + std::to_string(y));
          row[static_cast<std::size_t>(y)] += pmf[w];
        }
      };
    }
  }
  if (model.cost.per_agent.size() > model.K()) throw ValidationError("cost: more per-agent costs than sub-populations");
  model.cost.per_agent.resize(model.K());
  if (model.horizon.discounted()) {
    if (!(model.horizon.beta < 1.0)) throw ValidationError("horizon.beta: must lie in (0,1)");
  } else if (model.horizon.T < 1) {
    throw ValidationError("horizon.T: must be a positive integer");
  }
}

StateActionDist zero_state_action(const TeamModel& model) {
  StateActionDist D;
  for (const auto& sp : model.subpops) {
    D.mass.emplace_back(static_cast<std::size_t>(sp.num_states() * sp.num_actions()), 0.0);
    D.num_actions.push_back(sp.num_actions());
  }
  return D;
}

void kernel_row(const TeamModel& model, std::size_t k, int t, int x, int u, const StateActionDist& D,
                std::span<double> row) {
  model.subpops[k].kernel(t, x, u, D, row);
}

double kernel_eval(const TeamModel& model, std::size_t k, int t, int y, int x, int u, const StateActionDist& D) {
  std::vector<double> row(static_cast<std::size_t>(model.subpops[k].num_states()));
  kernel_row(model, k, t, x, u, D, row);
  return row[static_cast<std::size_t>(y)];
}

double kernel_eval(const TeamModel& model, std::size_t k, int t, const std::string& y, const std::string& x,
                   const std::string& u, const StateActionDist& D) {
  if (k >= model.K()) throw std::invalid_argument("sub-population index out of range");
  const auto& sp = model.subpops[k];
  for (const auto& block : D.mass)
    for (double v : block)
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("D coordinate outside [0,1]");
  return kernel_eval(model, k, t, symbol_index(sp.states, y, "state"), symbol_index(sp.states, x, "state"),
                     symbol_index(sp.actions, u, "action"), D);
}

double cost_eval(const TeamModel& model, int t, const StateActionDist& D) {
  double total = 0.0;
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& c = model.cost.per_agent.size() > k ? model.cost.per_agent[k] : AgentCostFn{};
    if (!c) continue;
    const auto& sp = model.subpops[k];
    for (int x = 0; x < sp.num_states(); ++x)
      for (int u = 0; u < sp.num_actions(); ++u) {
        double w = D(k, x, u);
        if (w != 0.0) total += w * c(t, x, u, D);
      }
  }
  if (model.cost.joint) total += model.cost.joint(t, D);
  if (!std::isfinite(total) || total < 0.0) {
    std::string where;
    for (std::size_t k = 0; k < D.mass.size(); ++k) {
      where += k ? " | " : "";
      for (std::size_t i = 0; i < D.mass[k].size(); ++i) where += (i ? "," : "") + num(D.mass[k][i]);
    }
    throw Error("cost at t=" + std::to_string(t) + ", D=[" + where + "] is " + num(total) + " (must be finite and >= 0)");
  }
  return total;
}

std::vector<int> model_times(const TeamModel& model) {
  if (model.time_homogeneous || model.horizon.discounted()) return {1};
  std::vector<int> ts;
  for (int t = 1; t <= model.horizon.T; ++t) ts.push_back(t);
  return ts;
}

namespace {

// Probe points: pseudo-random hypercube points followed by vertices of the r=2 grid over D.
std::vector<StateActionDist> probe_points(const TeamModel& model, int probe_count, std::uint64_t seed) {
  std::vector<StateActionDist> pts;
  auto gen = make_stream(seed, 0x7072);
  StateActionDist base = zero_state_action(model);
  std::size_t dims = 0;
  for (const auto& b : base.mass) dims += b.size();
  for (int i = 0; i < probe_count; ++i) {
    StateActionDist D = base;
    for (auto& b : D.mass)
      for (auto& v : b) v = uniform01(gen);
    pts.push_back(std::move(D));
  }
  // Full vertex set when small; otherwise a fixed-size sample of vertices.
  constexpr std::size_t kMaxVertices = 4096;
  double full = std::pow(3.0, static_cast<double>(dims));
  if (full <= static_cast<double>(kMaxVertices)) {
    std::size_t total = static_cast<std::size_t>(full);
    for (std::size_t idx = 0; idx < total; ++idx) {
      StateActionDist D = base;
      std::size_t rem = idx;
      for (auto& b : D.mass)
        for (auto& v : b) {
          v = 0.5 * static_cast<double>(rem % 3);
          rem /= 3;
        }
      pts.push_back(std::move(D));
    }
  } else {
    for (std::size_t i = 0; i < kMaxVertices; ++i) {
      StateActionDist D = base;
      for (auto& b : D.mass)
        for (auto& v : b) v = 0.5 * static_cast<double>(uniform_int(gen, 3));
      pts.push_back(std::move(D));
    }
  }
  return pts;
}

}  // namespace

ValidationReport validate_model(const TeamModel& model, int probe_count, std::uint64_t seed) {
  ValidationReport rep;
  auto& out = rep.violations;
  if (model.K() == 0) throw ValidationError("subpops: at least one sub-population required");
  for (std::size_t k = 0; k < model.K(); ++k) {
    const auto& sp = model.subpops[k];
    const std::string path = "subpops[" + std::to_string(k) + "]";
    check_alphabet(sp.states, path + ".states");
    check_alphabet(sp.actions, path + ".actions");
    check_alphabet(sp.noises, path + ".noises");
    if (sp.size < 1) out.push_back(path + ".size: must be positive");
    if (sp.noise_pmf.empty()) out.push_back(path + ".noise_pmf: missing");
    for (std::size_t i = 0; i < sp.noise_pmf.size(); ++i)
      check_pmf(sp.noise_pmf[i], sp.noises.size(), path + ".noise_pmf[" + std::to_string(i) + "]", out);
    if (!sp.init_states.empty()) {
      if (static_cast<int>(sp.init_states.size()) != sp.size)
        out.push_back(path + ".init_states: length " + std::to_string(sp.init_states.size()) + " != size " +
                      std::to_string(sp.size));
      for (int s : sp.init_states)
        if (s < 0 || s >= sp.num_states()) out.push_back(path + ".init_states: state index out of range");
    } else {
      check_pmf(sp.init_pmf, sp.states.size(), path + ".init_pmf", out);
    }
    if (!sp.kernel) out.push_back(path + ".kernel: missing");
  }
  if (model.horizon.discounted()) {
    if (!(model.horizon.beta < 1.0)) out.push_back("horizon.beta: must lie in (0,1)");
  } else if (model.horizon.T < 1) {
    out.push_back("horizon.T: must be >= 1");
  }
  if (!out.empty()) return rep;

  auto pts = probe_points(model, probe_count, seed);
  for (int t : model_times(model)) {
    for (std::size_t k = 0; k < model.K(); ++k) {
      const auto& sp = model.subpops[k];
      std::vector<double> row(static_cast<std::size_t>(sp.num_states()));
      std::size_t limit = sp.kernel_depends_on_D ? pts.size() : 1;
      for (int x = 0; x < sp.num_states(); ++x)
        for (int u = 0; u < sp.num_actions(); ++u)
          for (std::size_t p = 0; p < limit; ++p) {
            kernel_row(model, k, t, x, u, pts[p], row);
            double s = 0.0;
            bool range_ok = true;
            for (double v : row) {
              s += v;
              range_ok = range_ok && v >= 0.0 && v <= 1.0;
            }
            std::string where = "(k=" + std::to_string(k) + ",x=" + sp.states[static_cast<std::size_t>(x)] +
                                ",u=" + sp.actions[static_cast<std::size_t>(u)] + ",probe=" + std::to_string(p) +
                                ",t=" + std::to_string(t) + ")";
            if (!range_ok) out.push_back("kernel entry outside [0,1] at " + where);
            if (!(std::abs(s - 1.0) <= 1e-12)) out.push_back("kernel row sum " + num(s) + " ≠ 1 at " + where);
          }
    }
    for (std::size_t p = 0; p < pts.size(); ++p) {
      try {
        cost_eval(model, t, pts[p]);
      } catch (const Error& e) {
        out.push_back(std::string(e.what()) + " at probe " + std::to_string(p));
      }
    }
  }
  return rep;
}

}  // namespace deepteam
