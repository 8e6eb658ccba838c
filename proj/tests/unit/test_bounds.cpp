#include <cmath>

#include "doctest.h"
#include "deepteam/bounds.hpp"
#include "deepteam/error.hpp"
#include "deepteam/service.hpp"
#include "oracles.hpp"

using namespace deepteam;

TEST_CASE("H5/H6 recursion examples") {
  LipschitzProfile p = supplied_profile(1.0, 1.0, 1.0);
  h_recursions(p, 2);
  CHECK(p.H5 == std::vector<double>{2.0, 1.0, 0.0});
  CHECK(p.H6 == std::vector<double>{1.0, 0.0, 0.0});

  LipschitzProfile zero = supplied_profile(3.0, 0.0, 1.0);
  h_recursions(zero, 5);
  for (double v : zero.H5) CHECK(v == 0.0);
  for (double v : zero.H6) CHECK(v == 0.0);

  LipschitzProfile one = supplied_profile(0.7, 0.4, 1.0);
  h_recursions(one, 1);
  CHECK(one.H5_1() == 0.4);
  CHECK(one.H6_1() == 0.0);

  CHECK_THROWS_AS(h_recursions(one, 0), std::invalid_argument);
}

TEST_CASE("H5 matches the geometric closed form") {
  for (double H3 : {0.0, 0.5, 1.0, 1.7})
    for (double H4 : {0.3, 2.0})
      for (int T = 1; T <= 10; ++T) {
        LipschitzProfile p = supplied_profile(H3, H4, 1.0);
        h_recursions(p, T);
        double geo = 0.0, h6 = 0.0;
        for (int tau = 0; tau < T; ++tau) geo += std::pow(H3, tau);
        CHECK(p.H5_1() == doctest::Approx(H4 * geo).epsilon(1e-12));
        // H6_1 is the sum of H5_2..H5_T.
        for (int t = 2; t <= T; ++t) h6 += p.H5[static_cast<std::size_t>(t - 1)];
        CHECK(p.H6_1() == doctest::Approx(h6).epsilon(1e-12));
        for (int t = 1; t <= T; ++t) {
          const auto i = static_cast<std::size_t>(t - 1);
          CHECK(p.H5[i] == doctest::Approx(H4 + p.H5[i + 1] * H3).epsilon(1e-14));
          CHECK(p.H6[i] == doctest::Approx(p.H5[i + 1] + p.H6[i + 1]).epsilon(1e-14));
        }
      }
}

TEST_CASE("finite-horizon bounds") {
  LipschitzProfile p = supplied_profile(0.0, 1.0, 2.0);
  p.H5 = {2.0, 0.0};
  p.H6 = {1.0, 0.0};
  CHECK(epsilon_finite(p, 100, 1, BoundMode::PoI) == doctest::Approx(0.6));
  CHECK(epsilon_finite(p, 100, 4, BoundMode::PoC) == doctest::Approx(0.75));
  CHECK(epsilon_finite(p, 100, 4, BoundMode::Both) == doctest::Approx(1.35));
  CHECK(epsilon_finite(p, 100, kInfiniteLevels, BoundMode::Both) == epsilon_finite(p, 100, 1, BoundMode::PoI));
  CHECK(epsilon_finite(p, 100, kInfiniteLevels, BoundMode::PoC) == 0.0);

  LipschitzProfile flat = supplied_profile(1.0, 0.0, 5.0);
  h_recursions(flat, 4);
  for (auto mode : {BoundMode::PoI, BoundMode::PoC, BoundMode::Both}) CHECK(epsilon_finite(flat, 9, 3, mode) == 0.0);

  CHECK_THROWS_AS(epsilon_finite(p, 0.5, 2, BoundMode::PoI), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_finite(p, 10, 0, BoundMode::PoC), std::invalid_argument);
}

TEST_CASE("bounds shrink as the grid is refined") {
  LipschitzProfile p = supplied_profile(0.9, 1.3, 4.0);
  h_recursions(p, 5);
  double prev = epsilon_finite(p, 50, 1, BoundMode::Both);
  for (int r = 2; r <= 64; ++r) {
    const double e = epsilon_finite(p, 50, r, BoundMode::Both);
    CHECK(e < prev);
    prev = e;
  }
  double prevd = epsilon_discounted(p, 50, 0.7, 1);
  for (int r = 2; r <= 64; ++r) {
    const double e = epsilon_discounted(p, 50, 0.7, r);
    CHECK(e < prevd);
    prevd = e;
  }
}

TEST_CASE("discounted bound") {
  const LipschitzProfile p = supplied_profile(1.0, 1.0, 1.0);
  CHECK(epsilon_discounted(p, 100, 0.8) == doctest::Approx(2.5));
  CHECK(epsilon_discounted(supplied_profile(1.0, 1.5, 3.0), 9, 1e-9) == doctest::Approx(1.5).epsilon(1e-6));
  CHECK_THROWS_WITH_AS(epsilon_discounted(supplied_profile(1.25, 1.0, 1.0), 100, 0.8), doctest::Contains("1.25"),
                       AssumptionViolation);
  CHECK_THROWS_AS(epsilon_discounted(p, 100, 1.0), std::invalid_argument);
}

TEST_CASE("estimator on structurally simple models") {
  for (int m : {2, 3}) {
    oracle::ToyOptions o;
    o.sizes = {4, 3};
    o.m = m;
    o.depends_on_D = false;
    o.T = 2;
    const TeamModel free = oracle::random_toy(static_cast<std::uint64_t>(m), o);
    const LipschitzProfile p = estimate_lipschitz(free);
    REQUIRE(!p.H1.empty());
    for (std::size_t i = 0; i < p.H1.size(); ++i) {
      CHECK(p.H1[i] == 0.0);
      CHECK(p.H3[i] <= 1.0 + 1e-12);
    }
    CHECK(p.C == m * 2.0);
    CHECK_FALSE(p.supplied);

    TeamModel flat = free;
    flat.cost.per_agent.clear();
    flat.cost.joint = [](int, const StateActionDist&) { return 0.9; };
    const LipschitzProfile q = estimate_lipschitz(flat);
    for (double v : q.H2) CHECK(v == 0.0);
    for (double v : q.H4) CHECK(v == 0.0);
  }
}

TEST_CASE("estimator on the service model") {
  ServiceParams sp;
  sp.n = 10;
  const TeamModel m = build_service_model(sp);
  LipschitzOptions o;
  o.pairs = 600;
  const LipschitzProfile p = estimate_lipschitz(m, o);
  REQUIRE(p.H1.size() == 1);
  CHECK(p.H1[0] == 0.0);
  CHECK(p.H4[0] > 0.0);
  // Quadratic penalty slope 2*lambda plus the bounded price terms.
  CHECK(p.H4[0] <= 2 * sp.lambda + 5.0);
  CHECK(p.pairs == 600);
}

TEST_CASE("estimates are running maxima over a fixed pair sequence") {
  oracle::ToyOptions o;
  o.sizes = {3, 2};
  o.T = 1;
  const TeamModel m = oracle::random_toy(77, o);
  LipschitzProfile prev;
  for (int pairs : {50, 100, 200, 400, 800}) {
    LipschitzOptions lo;
    lo.pairs = pairs;
    const LipschitzProfile p = estimate_lipschitz(m, lo);
    if (!prev.H1.empty()) {
      CHECK(p.H1[0] >= prev.H1[0]);
      CHECK(p.H2[0] >= prev.H2[0]);
      CHECK(p.H3[0] >= prev.H3[0]);
      CHECK(p.H4[0] >= prev.H4[0]);
    }
    prev = p;
  }
  LipschitzOptions lo;
  lo.pairs = 300;
  lo.workers = 6;
  const LipschitzProfile a = estimate_lipschitz(m, lo);
  lo.workers = 1;
  const LipschitzProfile b = estimate_lipschitz(m, lo);
  CHECK(a.H3 == b.H3);
  CHECK(a.H4 == b.H4);
}
