#include "deepteam/model_io.hpp"

#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "deepteam/error.hpp"
#include "deepteam/expr.hpp"

namespace deepteam {

using nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ValidationError(path + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) throw ValidationError(path + ": unknown key '" + it.key() + "'");
}

const json& need(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path + ": missing key '" + key + "'");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ValidationError(path + ": expected a number");
  return v.get<double>();
}

std::vector<double> numbers(const json& v, const std::string& path) {
  if (!v.is_array()) throw ValidationError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::string> symbols(const json& v, const std::string& path) {
  if (!v.is_array()) throw ValidationError(path + ": expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ValidationError(path + "[" + std::to_string(i) + "]: expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

int symbol_of(const std::vector<std::string>& alphabet, const json& v, const std::string& path) {
  if (!v.is_string()) throw ValidationError(path + ": expected a symbol string");
  const auto s = v.get<std::string>();
  for (std::size_t i = 0; i < alphabet.size(); ++i)
    if (alphabet[i] == s) return static_cast<int>(i);
  throw ValidationError(path + ": unknown symbol '" + s + "'");
}

void expect_len(const json& v, std::size_t n, const std::string& path, const char* what) {
  if (!v.is_array()) throw ValidationError(path + ": expected an array");
  if (v.size() != n)
    throw ValidationError(path + ": length " + std::to_string(v.size()) + " != " + what + " " + std::to_string(n));
}

// Walks a [x][u][y]-shaped array, applying leaf(x, u, y, value, path).
template <class Leaf>
void cube(const json& v, int nx, int nu, int ny, const std::string& path, const char* last, Leaf&& leaf) {
  expect_len(v, static_cast<std::size_t>(nx), path, "|X|");
  for (int x = 0; x < nx; ++x) {
    const std::string px = path + "[" + std::to_string(x) + "]";
    expect_len(v[static_cast<std::size_t>(x)], static_cast<std::size_t>(nu), px, "|U|");
    for (int u = 0; u < nu; ++u) {
      const std::string pu = px + "[" + std::to_string(u) + "]";
      const json& row = v[static_cast<std::size_t>(x)][static_cast<std::size_t>(u)];
      expect_len(row, static_cast<std::size_t>(ny), pu, last);
      for (int y = 0; y < ny; ++y) leaf(x, u, y, row[static_cast<std::size_t>(y)], pu + "[" + std::to_string(y) + "]");
    }
  }
}

struct ModelShape {
  std::vector<int> states, actions;
};

void check_expr(const Expr& e, const ModelShape& shape, const std::string& path) {
  e.check_indices(shape.states, shape.actions, path);
}

void read_kernel(SubPopSpec& sp, const json& kj, const std::string& path, const ModelShape& shape, int T,
                 bool& time_dependent) {
  only_keys(kj, path, {"mode", "P", "P_t", "next"});
  const json& mode = need(kj, "mode", path);
  if (!mode.is_string()) throw ValidationError(path + ".mode: expected a string");
  const std::string m = mode.get<std::string>();
  const int nx = sp.num_states(), nu = sp.num_actions();
  if (m == "function") {
    if (kj.contains("P") || kj.contains("P_t")) throw ValidationError(path + ": function mode takes only 'next'");
    const int nw = sp.num_noises();
    if (nw == 0) throw ValidationError(path + ": function mode needs noises");
    auto next = std::make_shared<std::vector<int>>(static_cast<std::size_t>(nx * nu * nw));
    cube(need(kj, "next", path), nx, nu, nw, path + ".next", "|W|", [&](int x, int u, int w, const json& v, const std::string& p) {
      (*next)[static_cast<std::size_t>((x * nu + u) * nw + w)] = symbol_of(sp.states, v, p);
    });
    sp.dynamics = [next, nu, nw](int, int x, int u, const StateActionDist&, int w) {
      return (*next)[static_cast<std::size_t>((x * nu + u) * nw + w)];
    };
    sp.kernel_depends_on_D = false;
    return;
  }
  if (m != "table" && m != "expr") throw ValidationError(path + ".mode: expected table, expr or function");
  if (kj.contains("next")) throw ValidationError(path + ": 'next' belongs to function mode");
  const bool has_p = kj.contains("P"), has_pt = kj.contains("P_t");
  if (has_p == has_pt) throw ValidationError(path + ": exactly one of 'P' or 'P_t' required");
  std::vector<const json*> tables;
  std::string base = path + (has_p ? ".P" : ".P_t");
  if (has_p) {
    tables.push_back(&kj["P"]);
  } else {
    const json& pt = kj["P_t"];
    if (T <= 0) throw ValidationError(base + ": per-time tables need a finite horizon");
    expect_len(pt, static_cast<std::size_t>(T), base, "T");
    for (const auto& e : pt) tables.push_back(&e);
    time_dependent = true;
  }
  const std::size_t cell = static_cast<std::size_t>(nx * nu * nx);
  if (m == "table") {
    auto P = std::make_shared<std::vector<double>>(cell * tables.size());
    for (std::size_t i = 0; i < tables.size(); ++i) {
      const std::string p = has_p ? base : base + "[" + std::to_string(i) + "]";
      cube(*tables[i], nx, nu, nx, p, "|X|", [&](int x, int u, int y, const json& v, const std::string& q) {
        (*P)[i * cell + static_cast<std::size_t>((x * nu + u) * nx + y)] = number(v, q);
      });
    }
    const std::size_t count = tables.size();
    sp.kernel = [P, nx, nu, cell, count](int t, int x, int u, const StateActionDist&, std::span<double> row) {
      const std::size_t i = std::min<std::size_t>(t >= 1 ? static_cast<std::size_t>(t - 1) : 0, count - 1);
      const double* src = P->data() + i * cell + static_cast<std::size_t>((x * nu + u) * nx);
      std::copy(src, src + nx, row.begin());
    };
    sp.kernel_depends_on_D = false;
    return;
  }
  auto E = std::make_shared<std::vector<Expr>>(cell * tables.size());
  bool uses_D = false;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const std::string p = has_p ? base : base + "[" + std::to_string(i) + "]";
    cube(*tables[i], nx, nu, nx, p, "|X|", [&](int x, int u, int y, const json& v, const std::string& q) {
      if (!v.is_string() && !v.is_number()) throw ValidationError(q + ": expected an expression string or number");
      Expr e = Expr::parse(v.is_string() ? v.get<std::string>() : v.dump(), q);
      check_expr(e, shape, q);
      uses_D = uses_D || e.uses_distribution();
      time_dependent = time_dependent || e.uses_time();
      (*E)[i * cell + static_cast<std::size_t>((x * nu + u) * nx + y)] = std::move(e);
    });
  }
  const std::size_t count = tables.size();
  sp.kernel = [E, nx, nu, cell, count](int t, int x, int u, const StateActionDist& D, std::span<double> row) {
    const std::size_t i = std::min<std::size_t>(t >= 1 ? static_cast<std::size_t>(t - 1) : 0, count - 1);
    const Expr* src = E->data() + i * cell + static_cast<std::size_t>((x * nu + u) * nx);
    for (int y = 0; y < nx; ++y) row[static_cast<std::size_t>(y)] = src[y].eval(t, D);
  };
  sp.kernel_depends_on_D = uses_D;
}

}  // namespace

TeamModel model_from_json(const json& doc) {
  only_keys(doc, "model", {"subpops", "cost", "horizon"});
  TeamModel model;

  const json& hz = need(doc, "horizon", "model");
  only_keys(hz, "horizon", {"T", "beta"});
  if (hz.contains("T") == hz.contains("beta")) throw ValidationError("horizon: exactly one of 'T' or 'beta' required");
  if (hz.contains("T")) {
    if (!hz["T"].is_number_integer()) throw ValidationError("horizon.T: expected an integer");
    model.horizon.T = hz["T"].get<int>();
    if (model.horizon.T < 1) throw ValidationError("horizon.T: must be a positive integer");
  } else {
    model.horizon.beta = number(hz["beta"], "horizon.beta");
    if (!(model.horizon.beta > 0.0 && model.horizon.beta < 1.0)) throw ValidationError("horizon.beta: must lie in (0,1)");
  }
  const int T = model.horizon.discounted() ? 0 : model.horizon.T;

  const json& sps = need(doc, "subpops", "model");
  if (!sps.is_array() || sps.empty()) throw ValidationError("subpops: expected a non-empty array");
  ModelShape shape;
  for (const auto& s : sps) {
    const auto states = s.is_object() && s.contains("states") && s["states"].is_array() ? s["states"].size() : 0;
    const auto actions = s.is_object() && s.contains("actions") && s["actions"].is_array() ? s["actions"].size() : 0;
    shape.states.push_back(static_cast<int>(states));
    shape.actions.push_back(static_cast<int>(actions));
  }
  bool time_dependent = false;
  for (std::size_t k = 0; k < sps.size(); ++k) {
    const json& s = sps[k];
    const std::string path = "subpops[" + std::to_string(k) + "]";
    only_keys(s, path, {"name", "size", "major", "states", "actions", "noises", "noise_pmf", "init_pmf", "init_states", "kernel"});
    SubPopSpec sp;
    const json& name = need(s, "name", path);
    if (!name.is_string()) throw ValidationError(path + ".name: expected a string");
    sp.name = name.get<std::string>();
    const json& size = need(s, "size", path);
    if (!size.is_number_integer() || size.get<long long>() < 1) throw ValidationError(path + ".size: expected a positive integer");
    sp.size = size.get<int>();
    if (s.contains("major")) {
      if (!s["major"].is_boolean()) throw ValidationError(path + ".major: expected a boolean");
      sp.major = s["major"].get<bool>();
    }
    sp.states = symbols(need(s, "states", path), path + ".states");
    sp.actions = symbols(need(s, "actions", path), path + ".actions");
    const json& kj = need(s, "kernel", path);
    const bool function_mode = kj.is_object() && kj.contains("mode") && kj["mode"] == "function";
    if (s.contains("noises") != s.contains("noise_pmf"))
      throw ValidationError(path + ": 'noises' and 'noise_pmf' go together");
    if (s.contains("noises")) {
      sp.noises = symbols(s["noises"], path + ".noises");
      const json& np = s["noise_pmf"];
      if (!np.is_array() || np.empty()) throw ValidationError(path + ".noise_pmf: expected a non-empty array");
      if (np[0].is_array()) {
        if (T <= 0) throw ValidationError(path + ".noise_pmf: per-time pmfs need a finite horizon");
        expect_len(np, static_cast<std::size_t>(T), path + ".noise_pmf", "T");
        for (std::size_t i = 0; i < np.size(); ++i)
          sp.noise_pmf.push_back(numbers(np[i], path + ".noise_pmf[" + std::to_string(i) + "]"));
        time_dependent = true;
      } else {
        sp.noise_pmf.push_back(numbers(np, path + ".noise_pmf"));
      }
      for (std::size_t i = 0; i < sp.noise_pmf.size(); ++i)
        if (sp.noise_pmf[i].size() != sp.noises.size())
          throw ValidationError(path + ".noise_pmf: length " + std::to_string(sp.noise_pmf[i].size()) + " != |W| " +
                                std::to_string(sp.noises.size()));
    } else if (function_mode) {
      throw ValidationError(path + ": function kernels need 'noises' and 'noise_pmf'");
    } else {
      sp.noises = {"none"};
      sp.noise_pmf = {{1.0}};
    }
    if (s.contains("init_pmf") == s.contains("init_states"))
      throw ValidationError(path + ": exactly one of 'init_pmf' or 'init_states' required");
    if (s.contains("init_pmf")) {
      sp.init_pmf = numbers(s["init_pmf"], path + ".init_pmf");
      if (sp.init_pmf.size() != sp.states.size())
        throw ValidationError(path + ".init_pmf: length " + std::to_string(sp.init_pmf.size()) + " != |X| " +
                              std::to_string(sp.states.size()));
    } else {
      const json& is = s["init_states"];
      if (!is.is_array()) throw ValidationError(path + ".init_states: expected an array");
      for (std::size_t i = 0; i < is.size(); ++i)
        sp.init_states.push_back(symbol_of(sp.states, is[i], path + ".init_states[" + std::to_string(i) + "]"));
    }
    if (sp.states.empty() || sp.actions.empty())
      throw ValidationError(path + (sp.states.empty() ? ".states" : ".actions") + ": empty alphabet");
    read_kernel(sp, kj, path + ".kernel", shape, T, time_dependent);
    model.subpops.push_back(std::move(sp));
  }

  const json& cj = need(doc, "cost", "model");
  if (!cj.is_object()) throw ValidationError("cost: expected an object");
  const json& mode = need(cj, "mode", "cost");
  if (mode == "joint") {
    only_keys(cj, "cost", {"mode", "expr"});
  } else if (mode == "per_agent") {
    only_keys(cj, "cost", {"mode", "per_agent", "joint"});
  } else {
    throw ValidationError("cost.mode: expected per_agent or joint");
  }
  auto joint_expr = [&](const json& v, const std::string& path) {
    if (!v.is_string() && !v.is_number()) throw ValidationError(path + ": expected an expression string");
    Expr e = Expr::parse(v.is_string() ? v.get<std::string>() : v.dump(), path);
    check_expr(e, shape, path);
    time_dependent = time_dependent || e.uses_time();
    return e;
  };
  if (mode == "joint") {
    auto e = std::make_shared<Expr>(joint_expr(need(cj, "expr", "cost"), "cost.expr"));
    model.cost.joint = [e](int t, const StateActionDist& D) { return e->eval(t, D); };
  } else {
    model.cost.per_agent.resize(model.K());
    if (cj.contains("per_agent")) {
      const json& pa = cj["per_agent"];
      if (!pa.is_object()) throw ValidationError("cost.per_agent: expected an object keyed by sub-population name");
      for (auto it = pa.begin(); it != pa.end(); ++it) {
        const std::string path = "cost.per_agent." + it.key();
        std::size_t k = model.K();
        for (std::size_t j = 0; j < model.K(); ++j)
          if (model.subpops[j].name == it.key()) k = j;
        if (k == model.K()) throw ValidationError(path + ": unknown sub-population");
        const int nx = model.subpops[k].num_states(), nu = model.subpops[k].num_actions();
        auto E = std::make_shared<std::vector<Expr>>(static_cast<std::size_t>(nx * nu));
        expect_len(*it, static_cast<std::size_t>(nx), path, "|X|");
        for (int x = 0; x < nx; ++x) {
          const json& row = (*it)[static_cast<std::size_t>(x)];
          const std::string px = path + "[" + std::to_string(x) + "]";
          expect_len(row, static_cast<std::size_t>(nu), px, "|U|");
          for (int u = 0; u < nu; ++u)
            (*E)[static_cast<std::size_t>(x * nu + u)] = joint_expr(row[static_cast<std::size_t>(u)], px + "[" + std::to_string(u) + "]");
        }
        model.cost.per_agent[k] = [E, nu](int t, int x, int u, const StateActionDist& D) {
          return (*E)[static_cast<std::size_t>(x * nu + u)].eval(t, D);
        };
      }
    }
    if (cj.contains("joint")) {
      auto e = std::make_shared<Expr>(joint_expr(cj["joint"], "cost.joint"));
      model.cost.joint = [e](int t, const StateActionDist& D) { return e->eval(t, D); };
    }
  }
  if (time_dependent && model.horizon.discounted())
    throw ValidationError("horizon.beta: discounted models must be time-homogeneous");
  model.time_homogeneous = !time_dependent;
  finalize_model(model);
  return model;
}

TeamModel parse_model_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model: invalid JSON: ") + e.what());
  }
  return model_from_json(doc);
}

TeamModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open model file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_text(ss.str());
}

}  // namespace deepteam
