#include <cmath>
#include <random>

#include "doctest.h"
#include "deepteam/error.hpp"
#include "deepteam/exchange.hpp"
#include "deepteam/expr.hpp"
#include "deepteam/kernel.hpp"
#include "deepteam/model.hpp"
#include "deepteam/model_io.hpp"
#include "deepteam/random.hpp"
#include "deepteam/service.hpp"
#include "oracles.hpp"

using namespace deepteam;
using nlohmann::json;

namespace {

json two_state_doc() {
  return json::parse(R"({
    "subpops": [{
      "name": "a", "size": 3,
      "states": ["lo", "hi"], "actions": ["stay", "move"],
      "init_pmf": [0.5, 0.5],
      "kernel": {"mode": "table", "P": [[[1, 0], [0.2, 0.8]], [[0, 1], [0.6, 0.4]]]}
    }],
    "cost": {"mode": "per_agent", "per_agent": {"a": [[0, 1], [2, 3]]}},
    "horizon": {"T": 2}
  })");
}

bool mentions(const ValidationReport& rep, const std::string& needle) {
  for (const auto& v : rep.violations)
    if (v.find(needle) != std::string::npos) return true;
  return false;
}

StateActionDist point_mass(const TeamModel& m, std::size_t k, int x, int u) {
  StateActionDist D = zero_state_action(m);
  D.at(k, x, u) = 1.0;
  return D;
}

}  // namespace

TEST_CASE("validation of the service model and of broken pmfs") {
  ServiceParams p;
  CHECK(validate_model(build_service_model(p)).valid());

  json doc = two_state_doc();
  doc["subpops"][0]["noises"] = {"n1", "n2"};
  doc["subpops"][0]["noise_pmf"] = {0.6, 0.6};
  const auto rep = validate_model(model_from_json(doc));
  CHECK_FALSE(rep.valid());
  CHECK(mentions(rep, "pmf sum 1.2 ≠ 1"));
}

TEST_CASE("validation names the offending kernel row") {
  json doc = two_state_doc();
  doc["subpops"][0]["kernel"]["P"][1][0] = {0.1, 0.8};
  const auto rep = validate_model(model_from_json(doc));
  CHECK_FALSE(rep.valid());
  CHECK(mentions(rep, "kernel row sum 0.9"));
  CHECK(mentions(rep, "k=0,x=hi,u=stay,probe="));
}

TEST_CASE("validation probes expression kernels off the simplex") {
  json doc = two_state_doc();
  doc["subpops"][0]["kernel"] = json::parse(R"J({"mode": "expr", "P": [[["1 - clamp(d[0,1])", "clamp(d[0,1])"], [0.5, 0.5]],
                                                                    [["0.5", "0.5"], ["d[0,0]", "1 - d[0,1]"]]]})J");
  const auto rep = validate_model(model_from_json(doc));
  CHECK_FALSE(rep.valid());
  CHECK(mentions(rep, "x=hi,u=move"));
  CHECK_FALSE(mentions(rep, "x=lo"));
}

TEST_CASE("malformed alphabets are hard errors") {
  json doc = two_state_doc();
  doc["subpops"][0]["states"] = {"lo", "lo"};
  CHECK_THROWS_AS(model_from_json(doc), ValidationError);
  doc = two_state_doc();
  doc["subpops"][0]["actions"] = json::array();
  CHECK_THROWS_AS(model_from_json(doc), ValidationError);
}

TEST_CASE("model files are strict") {
  json doc = two_state_doc();
  doc["subpops"][0]["colour"] = "red";
  CHECK_THROWS_WITH_AS(model_from_json(doc), doctest::Contains("colour"), ValidationError);
  doc = two_state_doc();
  doc["horizon"] = json::parse(R"({"T": 2, "beta": 0.5})");
  CHECK_THROWS_AS(model_from_json(doc), ValidationError);
  doc = two_state_doc();
  doc["subpops"][0].erase("init_pmf");
  CHECK_THROWS_AS(model_from_json(doc), ValidationError);
  doc = two_state_doc();
  doc["subpops"][0]["kernel"]["P"][0][0] = {1.0};
  CHECK_THROWS_AS(model_from_json(doc), ValidationError);
  CHECK_THROWS_AS(parse_model_text("{not json"), ValidationError);
}

TEST_CASE("explicit initial states and function kernels load") {
  json doc = two_state_doc();
  doc["subpops"][0].erase("init_pmf");
  doc["subpops"][0]["init_states"] = {"lo", "hi", "hi"};
  doc["subpops"][0]["noises"] = {"keep", "flip"};
  doc["subpops"][0]["noise_pmf"] = {0.7, 0.3};
  doc["subpops"][0]["kernel"] = json::parse(R"({"mode": "function", "next": [[["lo", "hi"], ["hi", "hi"]], [["hi", "lo"], ["lo", "lo"]]]})");
  const TeamModel m = model_from_json(doc);
  CHECK(validate_model(m).valid());
  CHECK(m.subpops[0].init_states == std::vector<int>{0, 1, 1});
  CHECK(m.has_dynamics());
  const StateActionDist D = zero_state_action(m);
  CHECK(kernel_eval(m, 0, 1, 1, 0, 0, D) == doctest::Approx(0.3));
  CHECK(kernel_eval(m, 0, 1, 0, 1, 1, D) == doctest::Approx(1.0));
}

TEST_CASE("expression language") {
  StateActionDist D;
  D.num_actions = {2};
  D.mass = {{0.1, 0.2, 0.3, 0.4}};
  CHECK(Expr::parse("1 + 2 * 3", "e").eval(1, D) == doctest::Approx(7));
  CHECK(Expr::parse("-(1 - 4) / 2", "e").eval(1, D) == doctest::Approx(1.5));
  CHECK(Expr::parse("D[0,1,0]", "e").eval(1, D) == doctest::Approx(0.3));
  CHECK(Expr::parse("d[0,1]", "e").eval(1, D) == doctest::Approx(0.7));
  CHECK(Expr::parse("clamp(3 * d[0,1])", "e").eval(1, D) == doctest::Approx(1.0));
  CHECK(Expr::parse("clamp(t, 0, 2)", "e").eval(5, D) == doctest::Approx(2.0));
  CHECK(Expr::parse("max(0.2, min(abs(-0.5), 0.4))", "e").eval(1, D) == doctest::Approx(0.4));
  CHECK(Expr::parse("t * 2", "e").uses_time());
  CHECK_FALSE(Expr::parse("0.5", "e").uses_distribution());
  CHECK(Expr::parse("d[0,0]", "e").uses_distribution());
  CHECK_THROWS_WITH_AS(Expr::parse("1 +", "P[0][0][1]"), doctest::Contains("P[0][0][1]"), ValidationError);
  CHECK_THROWS_AS(Expr::parse("foo(1)", "e"), ValidationError);
  CHECK_THROWS_AS(Expr::parse("d[0,7]", "e").check_indices({2}, {2}, "e"), ValidationError);
}

TEST_CASE("kernel evaluation on the service model") {
  ServiceParams p;
  const TeamModel m = build_service_model(p);
  const StateActionDist D = zero_state_action(m);
  CHECK(kernel_eval(m, 0, 1, "1", "0", "1", D) == doctest::Approx(0.8));
  CHECK(kernel_eval(m, 0, 1, "1", "0", "2", D) == doctest::Approx(0.12));
  CHECK_THROWS_AS(kernel_eval(m, 0, 1, "7", "0", "1", D), std::invalid_argument);
  CHECK_THROWS_AS(kernel_eval(m, 0, 1, "1", "0", "9", D), std::invalid_argument);
  StateActionDist bad = D;
  bad.at(0, 0, 0) = 1.5;
  CHECK_THROWS_AS(kernel_eval(m, 0, 1, "1", "0", "1", bad), std::invalid_argument);
}

TEST_CASE("kernel rows are normalized and deterministic at random hypercube points") {
  std::mt19937_64 g(21);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    oracle::ToyOptions o;
    o.sizes = {3, 2};
    o.m = 3;
    o.functional = seed % 2 == 0;
    const TeamModel m = oracle::random_toy(seed, o);
    for (int probe = 0; probe < 50; ++probe) {
      StateActionDist D = zero_state_action(m);
      for (auto& block : D.mass)
        for (auto& v : block) v = uniform01(g);
      for (std::size_t k = 0; k < m.K(); ++k)
        for (int x = 0; x < 3; ++x)
          for (int u = 0; u < 2; ++u) {
            double s = 0.0;
            for (int y = 0; y < 3; ++y) {
              const double a = kernel_eval(m, k, 1, y, x, u, D);
              CHECK(a == kernel_eval(m, k, 1, y, x, u, D));
              CHECK(a >= 0.0);
              s += a;
            }
            CHECK(std::fabs(s - 1.0) <= 1e-12);
          }
    }
  }
}

TEST_CASE("cost evaluation") {
  json doc = two_state_doc();
  doc["cost"]["per_agent"]["a"] = json::parse("[[0, 0], [0, 0]]");
  const TeamModel zero = model_from_json(doc);
  CHECK(cost_eval(zero, 1, point_mass(zero, 0, 1, 1)) == 0.0);

  doc["cost"]["per_agent"]["a"] = json::parse("[[0, 0], [1, 1]]");
  const TeamModel indicator = model_from_json(doc);
  CHECK(cost_eval(indicator, 1, point_mass(indicator, 0, 1, 0)) == doctest::Approx(1.0));

  doc["cost"] = json::parse(R"({"mode": "joint", "expr": "d[0,0] - 0.5"})");
  const TeamModel negative = model_from_json(doc);
  CHECK_THROWS_WITH_AS(cost_eval(negative, 2, point_mass(negative, 0, 1, 0)), doctest::Contains("t=2"), Error);
}

TEST_CASE("service cost at the documented point") {
  ServiceParams p;
  const TeamModel m = build_service_model(p);
  StateActionDist D = zero_state_action(m);
  D.at(0, 0, 0) = 0.5;
  D.at(0, 1, 0) = 0.5;
  D.at(1, 0, 0) = 1.0;
  const double users = 0.5 * m.cost.per_agent[0](1, 0, 0, D) + 0.5 * m.cost.per_agent[0](1, 1, 0, D);
  CHECK(users == doctest::Approx(0.62));
  CHECK(m.cost.joint(1, D) == doctest::Approx(0.6));
  CHECK(cost_eval(m, 1, D) == doctest::Approx(1.24));
}

TEST_CASE("per-agent cost aggregation equals the direct agent average") {
  std::mt19937_64 g(5);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    oracle::ToyOptions o;
    o.sizes = {4, 7};
    o.m = 3;
    o.nu = 2;
    const TeamModel m = oracle::random_toy(seed, o);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<int>> xs(2), us(2);
      StateActionDist D = zero_state_action(m);
      for (std::size_t k = 0; k < 2; ++k)
        for (int i = 0; i < o.sizes[k]; ++i) {
          xs[k].push_back(uniform_int(g, 3));
          us[k].push_back(uniform_int(g, 2));
          D.at(k, xs[k].back(), us[k].back()) += 1.0 / o.sizes[k];
        }
      double direct = m.cost.joint(1, D);
      for (std::size_t k = 0; k < 2; ++k) {
        double s = 0.0;
        for (int i = 0; i < o.sizes[k]; ++i) s += m.cost.per_agent[k](1, xs[k][static_cast<std::size_t>(i)], us[k][static_cast<std::size_t>(i)], D);
        direct += s / o.sizes[k];
      }
      CHECK(std::fabs(cost_eval(m, 1, D) - direct) <= 1e-12);
    }
  }
}

namespace {

RawAgentModel raw_binary(int agents, int T) {
  RawAgentModel raw;
  raw.subpop_of.assign(static_cast<std::size_t>(agents), 0);
  raw.num_states = {2};
  raw.num_actions = {2};
  raw.num_noises = {2};
  raw.T = T;
  raw.dynamics = [](int, const RawAgentModel::Joint& x, const RawAgentModel::Joint& u, const RawAgentModel::Joint& w) {
    RawAgentModel::Joint next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = (x[i] + u[i] + w[i]) % 2;
    return next;
  };
  raw.cost = [](int, const RawAgentModel::Joint& x, const RawAgentModel::Joint&) {
    double s = 0.0;
    for (int v : x) s += v;
    return s;
  };
  return raw;
}

}  // namespace

TEST_CASE("exchangeability checker") {
  const RawAgentModel sym = raw_binary(3, 2);
  CHECK(check_partial_exchangeability(sym, 0, 1).pass);
  CHECK(check_partial_exchangeability(sym, 500, 9).pass);

  RawAgentModel skew = raw_binary(2, 1);
  skew.cost = [](int, const RawAgentModel::Joint& x, const RawAgentModel::Joint&) { return static_cast<double>(x[0]); };
  const auto rep = check_partial_exchangeability(skew, 0, 1);
  REQUIRE_FALSE(rep.pass);
  REQUIRE(rep.counterexample.has_value());
  CHECK(rep.counterexample->what == "cost");
  CHECK(rep.counterexample->i == 0);
  CHECK(rep.counterexample->j == 1);

  ServiceParams p;
  p.n = 3;
  CHECK(check_partial_exchangeability(service_users_raw(p, 1), 0, 1).pass);

  CHECK_THROWS_AS(check_partial_exchangeability(raw_binary(12, 3), 0, 1), CapExceeded);
}

TEST_CASE("an exchangeable raw model reduces to a team model with identical trajectory costs") {
  for (int agents = 1; agents <= 3; ++agents) {
    RawAgentModel raw = raw_binary(agents, 2);
    // Coupled dynamics: an agent copies its action when a majority acts, else flips with its noise.
    raw.dynamics = [](int t, const RawAgentModel::Joint& x, const RawAgentModel::Joint& u, const RawAgentModel::Joint& w) {
      int acting = 0;
      for (int v : u) acting += v;
      RawAgentModel::Joint next(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) next[i] = 2 * acting > static_cast<int>(u.size()) ? u[i] : (x[i] + w[i] + t) % 2;
      return next;
    };
    raw.cost = [](int t, const RawAgentModel::Joint& x, const RawAgentModel::Joint& u) {
      double s = 0.0, a = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        s += x[i];
        a += x[i] * u[i] * t;
      }
      return s * s / static_cast<double>(x.size()) + a;
    };
    REQUIRE(check_partial_exchangeability(raw, 0, 1).pass);
    const TeamModel m = reduce_to_team_model(raw, {{0.5, 0.5}}, {{0.5, 0.5}});
    const int N = agents;
    const int joint = 1 << N;
    auto bits = [N](int v) {
      RawAgentModel::Joint j(static_cast<std::size_t>(N));
      for (int i = 0; i < N; ++i) j[static_cast<std::size_t>(i)] = (v >> i) & 1;
      return j;
    };
    for (int x0 = 0; x0 < joint; ++x0)
      for (int u1 = 0; u1 < joint; ++u1)
        for (int w1 = 0; w1 < joint; ++w1)
          for (int u2 = 0; u2 < joint; ++u2) {
            RawAgentModel::Joint x = bits(x0);
            double raw_cost = 0.0, team_cost = 0.0;
            for (int t = 1; t <= 2; ++t) {
              const auto u = bits(t == 1 ? u1 : u2);
              StateActionDist D = zero_state_action(m);
              for (int i = 0; i < N; ++i) D.at(0, x[static_cast<std::size_t>(i)], u[static_cast<std::size_t>(i)]) += 1.0 / N;
              raw_cost += raw.cost(t, x, u);
              team_cost += cost_eval(m, t, D);
              if (t == 2) break;
              const auto w = bits(w1);
              const auto next = raw.dynamics(t, x, u, w);
              for (int i = 0; i < N; ++i) {
                const auto ii = static_cast<std::size_t>(i);
                CHECK(m.subpops[0].dynamics(t, x[ii], u[ii], D, w[ii]) == next[ii]);
              }
              x = next;
            }
            CHECK(std::fabs(raw_cost - team_cost) <= 1e-12);
          }
  }
}
