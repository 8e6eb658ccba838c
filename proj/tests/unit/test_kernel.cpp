#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "deepteam/kernel.hpp"
#include "deepteam/model_io.hpp"
#include "deepteam/random.hpp"
#include "deepteam/service.hpp"
#include "oracles.hpp"

using namespace deepteam;

namespace {

// One binary sub-population with dynamics given as a table next[x][w] (actions ignored).
TeamModel binary_functional(int n, std::vector<std::vector<int>> next, std::vector<double> pmf) {
  TeamModel m;
  SubPopSpec sp;
  sp.name = "a";
  sp.size = n;
  sp.states = {"0", "1"};
  sp.actions = {"u0", "u1"};
  for (std::size_t w = 0; w < pmf.size(); ++w) sp.noises.push_back("w" + std::to_string(w));
  sp.noise_pmf = {pmf};
  sp.init_pmf = {0.5, 0.5};
  sp.kernel_depends_on_D = false;
  sp.dynamics = [next](int, int x, int, const StateActionDist&, int w) {
    return next[static_cast<std::size_t>(x)][static_cast<std::size_t>(w)];
  };
  m.subpops.push_back(sp);
  m.cost.per_agent.push_back([](int, int x, int, const StateActionDist&) { return static_cast<double>(x); });
  m.horizon.T = 2;
  finalize_model(m);
  return m;
}

LocalLaw law1(std::vector<int> a) { return LocalLaw{{std::move(a)}}; }

std::map<std::uint64_t, double> as_map(const TransitionRow& row) {
  std::map<std::uint64_t, double> out;
  for (const auto& [r, p] : row.entries) out[r] = p;
  return out;
}

double row_sum(const TransitionRow& row) {
  double s = 0.0;
  for (const auto& e : row.entries) s += e.second;
  return s;
}

std::vector<TeamModel> small_models() {
  std::vector<TeamModel> out;
  std::uint64_t seed = 100;
  for (int n = 1; n <= 6; ++n)
    for (int m = 2; m <= 3; ++m)
      for (bool functional : {true, false}) {
        oracle::ToyOptions o;
        o.sizes = {n};
        o.m = m;
        o.functional = functional;
        out.push_back(oracle::random_toy(++seed, o));
      }
  oracle::ToyOptions two;
  two.sizes = {3, 2};
  two.m = 3;
  out.push_back(oracle::random_toy(++seed, two));
  two.functional = false;
  out.push_back(oracle::random_toy(++seed, two));
  return out;
}

}  // namespace

TEST_CASE("phi builds the state-action distribution") {
  const TeamModel m = binary_functional(2, {{0, 0}, {1, 1}}, {1.0, 0.0});
  const StateActionDist D = phi(m, {{0.5, 0.5}}, law1({0, 1}));
  CHECK(D(0, 0, 0) == 0.5);
  CHECK(D(0, 1, 1) == 0.5);
  CHECK(D(0, 0, 1) == 0.0);
  CHECK(D(0, 1, 0) == 0.0);
  const StateActionDist C = phi(m, {{0.3, 0.7}}, law1({1, 1}));
  CHECK(C(0, 0, 1) == 0.3);
  CHECK(C(0, 1, 1) == 0.7);
  const StateActionDist Z = phi(m, {{0.0, 0.0}}, law1({0, 1}));
  for (double v : Z.mass[0]) CHECK(v == 0.0);
}

TEST_CASE("noise-empirical update") {
  const TeamModel identity = binary_functional(4, {{0, 0}, {1, 1}}, {0.5, 0.5});
  const StateDist z{{0.25, 0.75}};
  CHECK(bar_f(identity, 1, z, law1({0, 0}), {{1, 3}}) == z);

  const TeamModel absorbing = binary_functional(4, {{1, 1}, {1, 1}}, {0.5, 0.5});
  CHECK(bar_f(absorbing, 1, z, law1({0, 0}), {{2, 2}}) == StateDist{{0.0, 1.0}});

  const TeamModel flip = binary_functional(2, {{0, 1}, {1, 0}}, {0.5, 0.5});
  const StateDist next = bar_f(flip, 1, {{0.5, 0.5}}, law1({0, 0}), {{1, 1}});
  CHECK(next[0][0] == doctest::Approx(0.5));
  CHECK(next[0][1] == doctest::Approx(0.5));

  ServiceParams p;
  p.n = 3;
  TeamModel no_dynamics = build_service_model(p);
  no_dynamics.subpops[0].dynamics = nullptr;
  CHECK_THROWS_WITH(bar_f(no_dynamics, 1, {{0.5, 0.5}, {1, 0, 0, 0, 0, 0}}, LocalLaw{{{0, 0}, {0, 0, 0, 0, 0, 0}}},
                          {{3, 0, 0, 0, 0}, {1, 0}}),
                    doctest::Contains("joint_transition"));
}

// The pairing of noises to agents matters whenever different occupied states map noises differently, so
// the count-level update cannot reproduce the agent-level step in general.
TEST_CASE("noise-empirical update versus agent simulation") {
  const TeamModel flip = binary_functional(2, {{0, 1}, {1, 0}}, {0.5, 0.5});
  const auto a = oracle::agent_step(flip, 1, {{0, 1}}, law1({0, 0}), {{0, 1}});
  const auto b = oracle::agent_step(flip, 1, {{0, 1}}, law1({0, 0}), {{1, 0}});
  CHECK(a == DeepState{{2, 0}});
  CHECK(b == DeepState{{0, 2}});
  const auto nums = bar_f_numerators(flip, 1, {{1, 1}}, law1({0, 0}), {{1, 1}});
  CHECK(nums[0] == std::vector<long long>{2, 2});  // (1/2, 1/2) on the n^2 = 4 scale

  // Exact when a single source state is occupied or the dynamics ignore the noise.
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + uniform_int(g, 8);
    const int x0 = uniform_int(g, 2);
    std::vector<int> noise(static_cast<std::size_t>(n));
    Counts wc{0, 0};
    for (auto& w : noise) ++wc[static_cast<std::size_t>(w = uniform_int(g, 2))];
    const TeamModel model = binary_functional(n, {{0, 1}, {1, 0}}, {0.5, 0.5});
    const auto truth = oracle::agent_step(model, 1, {std::vector<int>(static_cast<std::size_t>(n), x0)}, law1({0, 0}), {noise});
    Counts c{0, 0};
    c[static_cast<std::size_t>(x0)] = n;
    const auto num = bar_f_numerators(model, 1, {c}, law1({0, 0}), {wc});
    CHECK(num[0][0] == static_cast<long long>(n) * truth[0][0]);
    CHECK(num[0][1] == static_cast<long long>(n) * truth[0][1]);
  }
}

TEST_CASE("mean-field update") {
  const TeamModel m = parse_model_text(R"({
    "subpops": [{"name": "a", "size": 2, "states": ["0", "1"], "actions": ["u"], "init_pmf": [1, 0],
                 "kernel": {"mode": "table", "P": [[[0.7, 0.3]], [[0.4, 0.6]]]}}],
    "cost": {"mode": "joint", "expr": "0"}, "horizon": {"T": 1}})");
  const auto h = hat_f(m, 1, {{1.0, 0.0}}, law1({0, 0}));
  CHECK(h[0][0] == doctest::Approx(0.7));
  CHECK(h[0][1] == doctest::Approx(0.3));

  // Affine in z for kernels that ignore D.
  std::mt19937_64 g(9);
  for (int trial = 0; trial < 100; ++trial) {
    const double z1 = uniform01(g), z2 = uniform01(g), a = uniform01(g);
    const auto h1 = hat_f(m, 1, {{z1, 1 - z1}}, law1({0, 0}));
    const auto h2 = hat_f(m, 1, {{z2, 1 - z2}}, law1({0, 0}));
    const double zm = a * z1 + (1 - a) * z2;
    const auto hm = hat_f(m, 1, {{zm, 1 - zm}}, law1({0, 0}));
    for (int y = 0; y < 2; ++y) CHECK(std::fabs(hm[0][y] - (a * h1[0][y] + (1 - a) * h2[0][y])) <= 1e-12);
  }

  // Two steps from a point mass reproduce the classical forward equation.
  for (int x = 0; x < 2; ++x) {
    StateDist z{{0.0, 0.0}};
    z[0][static_cast<std::size_t>(x)] = 1.0;
    const auto two = hat_f(m, 1, hat_f(m, 1, z, law1({0, 0})), law1({0, 0}));
    const double P[2][2] = {{0.7, 0.3}, {0.4, 0.6}};
    for (int y = 0; y < 2; ++y) {
      double ck = 0.0;
      for (int mid = 0; mid < 2; ++mid) ck += P[x][mid] * P[mid][y];
      CHECK(std::fabs(two[0][static_cast<std::size_t>(y)] - ck) <= 1e-12);
    }
  }
}

TEST_CASE("mean-field update conserves mass and matches the deterministic count update") {
  std::mt19937_64 g(10);
  for (const auto& m : small_models()) {
    const auto laws = enumerate_local_laws(m);
    for (int trial = 0; trial < 20; ++trial) {
      StateDist z;
      for (const auto& sp : m.subpops) {
        z.emplace_back();
        for (int x = 0; x < sp.num_states(); ++x) z.back().push_back(uniform01(g));
      }
      const auto& gamma = laws[static_cast<std::size_t>(uniform_int(g, static_cast<int>(laws.size())))];
      const auto h = hat_f(m, 1, z, gamma);
      for (std::size_t k = 0; k < m.K(); ++k) {
        double a = 0.0, b = 0.0;
        for (double v : z[k]) a += v;
        for (double v : h[k]) b += v;
        CHECK(std::fabs(a - b) <= 1e-12);
      }
    }
  }
  // Deterministic dynamics: any noise empirical gives the mean-field update.
  const TeamModel det = binary_functional(5, {{1, 1}, {0, 0}}, {0.3, 0.7});
  const StateDist z{{0.4, 0.6}};
  for (const auto& e : enumerate_noise_empiricals(5, {0.3, 0.7})) {
    const auto b = bar_f(det, 1, z, law1({0, 0}), {e.counts});
    const auto h = hat_f(det, 1, z, law1({0, 0}));
    CHECK(b[0][0] == doctest::Approx(h[0][0]));
    CHECK(b[0][1] == doctest::Approx(h[0][1]));
  }
}

TEST_CASE("stage cost") {
  const TeamModel zero = parse_model_text(R"({
    "subpops": [{"name": "a", "size": 2, "states": ["0", "1"], "actions": ["p", "q", "r"], "init_pmf": [1, 0],
                 "kernel": {"mode": "table", "P": [[[1, 0], [1, 0], [1, 0]], [[0, 1], [0, 1], [0, 1]]]}}],
    "cost": {"mode": "per_agent", "per_agent": {"a": [[0, 0, 0], [0, 0, 0]]}}, "horizon": {"T": 1}})");
  CHECK(ell(zero, 1, {{0.5, 0.5}}, law1({0, 2})) == 0.0);

  ServiceParams p;
  const TeamModel service = build_service_model(p);
  const LocalLaw g{{{0, 0}, {0, 0, 0, 0, 0, 0}}};
  CHECK(ell(service, 1, {{0.5, 0.5}, {1, 0, 0, 0, 0, 0}}, g) == doctest::Approx(1.24));

  // Renaming an action the law never uses leaves the cost unchanged.
  const std::string base = R"({
    "subpops": [{"name": "a", "size": 2, "states": ["0", "1"], "actions": ["p", "q", "%"], "init_pmf": [1, 0],
                 "kernel": {"mode": "table", "P": [[[1, 0], [1, 0], [1, 0]], [[0, 1], [0, 1], [0, 1]]]}}],
    "cost": {"mode": "per_agent", "per_agent": {"a": [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]}}, "horizon": {"T": 1}})";
  std::string renamed = base;
  renamed.replace(renamed.find('%'), 1, "zz");
  std::string original = base;
  original.replace(original.find('%'), 1, "r");
  CHECK(ell(parse_model_text(original), 1, {{0.3, 0.7}}, law1({1, 0})) ==
        ell(parse_model_text(renamed), 1, {{0.3, 0.7}}, law1({1, 0})));
}

TEST_CASE("count marginal examples") {
  const TeamModel coin = binary_functional(2, {{0, 1}, {0, 1}}, {0.5, 0.5});
  const auto v = dck_marginal(coin, 1, 0, 1, {{1, 1}}, law1({0, 0}));
  REQUIRE(v.size() == 3);
  CHECK(v[0] == doctest::Approx(0.25));
  CHECK(v[1] == doctest::Approx(0.5));
  CHECK(v[2] == doctest::Approx(0.25));

  // One occupied state: a single binomial factor.
  const TeamModel biased = binary_functional(5, {{0, 1}, {0, 1}}, {0.3, 0.7});
  const auto b = dck_marginal(biased, 1, 0, 1, {{5, 0}}, law1({0, 0}));
  for (int j = 0; j <= 5; ++j)
    CHECK(b[static_cast<std::size_t>(j)] ==
          doctest::Approx(static_cast<double>(binomial_coefficient(5, j)) * std::pow(0.7, j) * std::pow(0.3, 5 - j)));

  // Deterministic rows: a point mass.
  const TeamModel det = binary_functional(4, {{1, 1}, {1, 1}}, {0.5, 0.5});
  const auto d = dck_marginal(det, 1, 0, 1, {{1, 3}}, law1({0, 0}));
  CHECK(d[4] == 1.0);
}

TEST_CASE("count marginal matches brute-force agent enumeration") {
  for (const auto& m : small_models()) {
    const JointLattice lattice(m);
    const auto laws = enumerate_local_laws(m);
    for (std::uint64_t s = 0; s < lattice.size(); ++s) {
      const DeepState d = lattice.unrank(s);
      for (const auto& gamma : laws) {
        const auto brute = oracle::brute_joint(m, 1, d, gamma);
        for (std::size_t k = 0; k < m.K(); ++k)
          for (int y = 0; y < m.subpops[k].num_states(); ++y) {
            std::vector<double> want(static_cast<std::size_t>(m.subpops[k].size + 1), 0.0);
            for (const auto& [e, p] : brute) want[static_cast<std::size_t>(e[k][static_cast<std::size_t>(y)])] += p;
            const auto got = dck_marginal(m, 1, k, y, d, gamma);
            double total = 0.0;
            for (std::size_t j = 0; j < want.size(); ++j) {
              CHECK(std::fabs(got[j] - want[j]) <= 1e-12);
              total += got[j];
            }
            CHECK(std::fabs(total - 1.0) <= 1e-12);
          }
      }
    }
  }
}

TEST_CASE("joint transition examples") {
  const TeamModel det = binary_functional(3, {{1, 1}, {0, 0}}, {0.5, 0.5});
  const JointLattice dl(det);
  const auto drow = joint_transition(det, 1, {{1, 2}}, law1({0, 0}));
  REQUIRE(drow.entries.size() == 1);
  CHECK(drow.entries[0].second == 1.0);
  CHECK(dl.unrank(drow.entries[0].first) == DeepState{{2, 1}});

  const TeamModel coin = binary_functional(2, {{0, 1}, {0, 1}}, {0.5, 0.5});
  const JointLattice cl(coin);
  const auto row = as_map(joint_transition(coin, 1, {{1, 1}}, law1({0, 0})));
  CHECK(row.at(cl.rank({{0, 2}})) == doctest::Approx(0.25));
  CHECK(row.at(cl.rank({{1, 1}})) == doctest::Approx(0.5));
  CHECK(row.at(cl.rank({{2, 0}})) == doctest::Approx(0.25));
}

TEST_CASE("joint transition matches brute force and its binary marginal matches the count marginal") {
  for (const auto& m : small_models()) {
    const JointLattice lattice(m);
    const auto laws = enumerate_local_laws(m);
    for (std::uint64_t s = 0; s < lattice.size(); ++s) {
      const DeepState d = lattice.unrank(s);
      for (const auto& gamma : laws) {
        const auto row = joint_transition(m, 1, d, gamma);
        CHECK(std::fabs(row_sum(row) - 1.0) <= 1e-10);
        const auto brute = oracle::brute_joint(m, 1, d, gamma);
        std::size_t positive = 0;
        for (const auto& [e, p] : brute) positive += p > 0.0;
        CHECK(row.entries.size() == positive);
        for (const auto& [r, p] : row.entries) {
          CHECK(p > 0.0);
          CHECK(std::fabs(p - brute.at(lattice.unrank(r))) <= 1e-12);
        }
        if (m.K() == 1 && m.subpops[0].num_states() == 2) {
          const auto marg = dck_marginal(m, 1, 0, 1, d, gamma);
          std::vector<double> from_joint(marg.size(), 0.0);
          for (const auto& [r, p] : row.entries) from_joint[static_cast<std::size_t>(lattice.unrank(r)[0][1])] += p;
          for (std::size_t j = 0; j < marg.size(); ++j) CHECK(std::fabs(marg[j] - from_joint[j]) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("noise-enumeration route agrees on its exact subclass and differs otherwise") {
  // Deterministic dynamics.
  const TeamModel det = binary_functional(4, {{1, 1}, {0, 0}}, {0.4, 0.6});
  const auto a = joint_transition(det, 1, {{1, 3}}, law1({0, 0}));
  const auto b = joint_transition_noise_route(det, 1, {{1, 3}}, law1({0, 0}));
  CHECK(b.off_lattice_mass == 0.0);
  REQUIRE(a.entries.size() == 1);
  REQUIRE(b.row.entries.size() == 1);
  CHECK(a.entries[0].first == b.row.entries[0].first);
  CHECK(b.row.entries[0].second == doctest::Approx(1.0).epsilon(1e-12));

  // One occupied source state.
  const TeamModel flip = binary_functional(4, {{0, 1}, {1, 0}}, {0.4, 0.6});
  const auto ra = as_map(joint_transition(flip, 1, {{4, 0}}, law1({0, 0})));
  const auto rb = joint_transition_noise_route(flip, 1, {{4, 0}}, law1({0, 0}));
  CHECK(rb.off_lattice_mass == 0.0);
  for (const auto& [r, p] : as_map(rb.row)) CHECK(std::fabs(ra.at(r) - p) <= 1e-12);

  // Two occupied states with different noise maps: the routes disagree.
  const auto ca = as_map(joint_transition(flip, 1, {{2, 2}}, law1({0, 0})));
  const auto cb = joint_transition_noise_route(flip, 1, {{2, 2}}, law1({0, 0}));
  const auto cbm = as_map(cb.row);
  double diff = cb.off_lattice_mass;
  for (const auto& [r, p] : ca) {
    const auto it = cbm.find(r);
    diff += std::fabs(p - (it == cbm.end() ? 0.0 : it->second));
  }
  CHECK(diff > 0.1);
}

TEST_CASE("mixed-state step") {
  oracle::ToyOptions o;
  o.sizes = {3, 2};
  o.m = 2;
  o.depends_on_D = false;
  const TeamModel m = oracle::random_toy(77, o);
  const LocalLaw gamma{{{0, 1}, {1, 0}}};
  const std::vector<Counts> noise{{1, 2}, {2, 0}};
  const StateDist z{{1.0 / 3, 2.0 / 3}, {0.5, 0.5}};

  const MixedState all{{true, true}, z};
  CHECK(mixed_step(m, 1, all, gamma, noise).z == bar_f(m, 1, z, gamma, noise));

  const MixedState none{{false, false}, z};
  CHECK(mixed_step(m, 1, none, gamma, noise).z == hat_f(m, 1, z, gamma));

  ServiceParams p;
  const TeamModel service = build_service_model(p);
  const MixedState ps{{false, true}, {{0.2, 0.8}, {1, 0, 0, 0, 0, 0}}};
  for (int option = 0; option < 3; ++option) {
    const LocalLaw g{{{option, option}, {2, 2, 2, 2, 2, 2}}};
    const MixedState ok = mixed_step(service, 1, ps, g, {{200, 0, 0, 0, 0}, {1, 0}});
    const MixedState fault = mixed_step(service, 1, ps, g, {{200, 0, 0, 0, 0}, {0, 1}});
    const double mm = 0.8;
    const double want = mm * (1 - p.q[static_cast<std::size_t>(option)]) +
                        (1 - mm) * (1 - p.alpha[static_cast<std::size_t>(option)]) * p.mu;
    CHECK(ok.z[0][1] == doctest::Approx(want).epsilon(1e-12));
    CHECK(ok.z[1] == std::vector<double>{0, 0, 1, 0, 0, 0});
    CHECK(fault.z[1] == std::vector<double>{1, 0, 0, 0, 0, 0});
  }
}

TEST_CASE("observation decoupling probe") {
  oracle::ToyOptions o;
  o.sizes = {2, 2};
  o.functional = false;
  o.depends_on_D = true;  // every kernel reads sub-population 0
  const TeamModel m = oracle::random_toy(5, o);
  CHECK_NOTHROW(check_observation_decoupling(m, {true, false}));
  CHECK_THROWS_WITH_AS(check_observation_decoupling(m, {false, true}), doctest::Contains("k=1"), AssumptionViolation);
  CHECK_NOTHROW(check_observation_decoupling(m, {true, true}));
}
