#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "deepteam/random.hpp"
#include "deepteam/service.hpp"
#include "deepteam/statespace.hpp"
#include "oracles.hpp"

using namespace deepteam;

TEST_CASE("empirical distribution of samples") {
  const std::vector<int> s{1, 0, 1};
  const auto e = empirical(s, 2);
  CHECK(e[0] == doctest::Approx(1.0 / 3));
  CHECK(e[1] == doctest::Approx(2.0 / 3));

  const std::vector<int> same(7, 2);
  CHECK(empirical(same, 3) == std::vector<double>{0.0, 0.0, 1.0});

  CHECK(empirical(std::vector<std::string>{"b", "a", "b", "b"}, {"a", "b"}) == std::vector<double>{0.25, 0.75});
  CHECK_THROWS(empirical(std::vector<int>{}, 2));
  CHECK_THROWS(empirical(std::vector<std::string>{"c"}, {"a", "b"}));
}

TEST_CASE("empirical is invariant under permutations") {
  std::mt19937_64 g(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> s(1 + uniform_int(g, 30));
    for (auto& v : s) v = uniform_int(g, 4);
    const auto ref = empirical(s, 4);
    std::shuffle(s.begin(), s.end(), g);
    CHECK(empirical(s, 4) == ref);
  }
}

TEST_CASE("deep-state enumeration and ranking") {
  const auto two = enumerate_deep_states(2, 2);
  REQUIRE(two.size() == 3);
  CHECK(two[0] == Counts{0, 2});
  CHECK(two[1] == Counts{1, 1});
  CHECK(two[2] == Counts{2, 0});
  CHECK(enumerate_deep_states(2, 3).size() == 6);
  CHECK(enumerate_deep_states(2, 3).size() <= 27u);

  CompositionLattice lat(2, 2);
  CHECK(lat.rank(Counts{0, 2}) == 0);
  CHECK(lat.unrank(2) == Counts{2, 0});
  CHECK_THROWS(lat.unrank(3));

  CompositionLattice lat3(2, 3);
  const auto all = enumerate_deep_states(2, 3);
  for (std::uint64_t r = 0; r < all.size(); ++r) {
    CHECK(lat3.rank(all[r]) == r);
    CHECK(lat3.unrank(r) == all[r]);
  }
}

TEST_CASE("composition counts match stars and bars exhaustively") {
  for (int n = 1; n <= 12; ++n)
    for (int m = 1; m <= 5; ++m) {
      const auto all = enumerate_deep_states(n, m);
      CHECK(all.size() == binomial_coefficient(n + m - 1, m - 1));
      CHECK(all.size() == count_compositions(n, m));
      CHECK(std::is_sorted(all.begin(), all.end()));
      for (const auto& c : all) CHECK(std::accumulate(c.begin(), c.end(), 0) == n);
    }
}

TEST_CASE("deep-state enumeration refuses above the cap") {
  CHECK_THROWS_AS(enumerate_deep_states(200, 6, 1000), CapExceeded);
  CHECK_THROWS_AS(enumerate_noise_empiricals(100, std::vector<double>(5, 0.2), 50), CapExceeded);
}

TEST_CASE("local-law enumeration") {
  auto small = [](int nx, int nu, bool major) {
    TeamModel m;
    SubPopSpec sp;
    sp.name = "a";
    sp.major = major;
    for (int x = 0; x < nx; ++x) sp.states.push_back(std::to_string(x));
    for (int u = 0; u < nu; ++u) sp.actions.push_back(std::to_string(u));
    sp.init_pmf.assign(static_cast<std::size_t>(nx), 1.0 / nx);
    sp.noises = {"w"};
    sp.noise_pmf = {{1.0}};
    sp.dynamics = [](int, int x, int, const StateActionDist&, int) { return x; };
    m.subpops.push_back(sp);
    m.horizon.T = 1;
    finalize_model(m);
    return m;
  };
  CHECK(enumerate_local_laws(small(2, 3, false)).size() == 9);
  CHECK(enumerate_local_laws(small(3, 1, false)).size() == 1);
  CHECK(enumerate_local_laws(small(4, 3, true)).size() == 3);

  ServiceParams p;
  p.n = 4;
  CHECK(enumerate_local_laws(build_service_model(p)).size() == 54);

  const auto laws = enumerate_local_laws(small(2, 3, false));
  CHECK(laws.front().action[0] == std::vector<int>{0, 0});
  CHECK(laws[1].action[0] == std::vector<int>{0, 1});
  CHECK(laws.back().action[0] == std::vector<int>{2, 2});
  LawSpace space(small(2, 3, false));
  for (std::uint64_t i = 0; i < laws.size(); ++i) CHECK(space.index(laws[i]) == i);
}

TEST_CASE("law-space size is the product formula exhaustively") {
  for (int K = 1; K <= 2; ++K)
    for (int nx = 1; nx <= 3; ++nx)
      for (int nu = 1; nu <= 3; ++nu) {
        oracle::ToyOptions o;
        o.sizes.assign(static_cast<std::size_t>(K), 2);
        o.m = nx;
        o.nu = nu;
        o.T = 1;
        const auto model = oracle::random_toy(static_cast<std::uint64_t>(nx * 10 + nu), o);
        std::uint64_t expect = 1;
        for (int k = 0; k < K; ++k)
          for (int x = 0; x < nx; ++x) expect *= static_cast<std::uint64_t>(nu);
        const auto laws = enumerate_local_laws(model);
        CHECK(laws.size() == expect);
        CHECK(laws.size() == oracle::all_laws(model).size());
      }
}

TEST_CASE("noise empiricals") {
  const auto coin = enumerate_noise_empiricals(2, {0.5, 0.5});
  REQUIRE(coin.size() == 3);
  std::map<Counts, double> w;
  for (const auto& e : coin) w[e.counts] = e.weight;
  CHECK(w[Counts{2, 0}] == doctest::Approx(0.25));
  CHECK(w[Counts{1, 1}] == doctest::Approx(0.5));
  CHECK(w[Counts{0, 2}] == doctest::Approx(0.25));

  const auto det = enumerate_noise_empiricals(5, {0.0, 1.0, 0.0});
  REQUIRE(det.size() == 1);
  CHECK(det[0].counts == Counts{0, 5, 0});
  CHECK(det[0].weight == doctest::Approx(1.0));

  for (const auto& e : enumerate_noise_empiricals(3, {0.2, 0.8}))
    if (e.counts == Counts{1, 2}) CHECK(e.weight == doctest::Approx(0.384).epsilon(1e-12));
}

TEST_CASE("noise empiricals match grouped brute-force draws") {
  const std::vector<std::vector<double>> pmfs{{0.3, 0.7}, {0.2, 0.5, 0.3}, {0.1, 0.0, 0.6, 0.3}};
  for (const auto& pmf : pmfs)
    for (int n = 1; n <= 8; ++n) {
      const int W = static_cast<int>(pmf.size());
      if (std::pow(W, n) > 70000) continue;
      std::map<Counts, double> brute;
      std::vector<int> draw(static_cast<std::size_t>(n), 0);
      while (true) {
        double p = 1.0;
        Counts c(pmf.size(), 0);
        for (int w : draw) {
          p *= pmf[static_cast<std::size_t>(w)];
          ++c[static_cast<std::size_t>(w)];
        }
        if (p > 0.0) brute[c] += p;
        int i = 0;
        while (i < n && ++draw[static_cast<std::size_t>(i)] == W) draw[static_cast<std::size_t>(i++)] = 0;
        if (i == n) break;
      }
      const auto got = enumerate_noise_empiricals(n, pmf);
      double total = 0.0;
      CHECK(got.size() == brute.size());
      for (const auto& e : got) {
        total += e.weight;
        CHECK(std::fabs(e.weight - brute[e.counts]) <= 1e-12);
      }
      CHECK(std::fabs(total - 1.0) <= 1e-10);
    }
}

TEST_CASE("quantizer") {
  CHECK(quantize(std::vector<double>{0.3, 0.7}, 2) == std::vector<int>{1, 1});
  CHECK(quantize_coordinate(0.25, 2) == 0);
  CHECK(quantize_coordinate(0.75, 2) == 1);
  CHECK(quantize_count(1, 4, 2) == 0);
  CHECK(quantize_count(3, 4, 2) == 1);
  for (int r : {1, 2, 3, 7, 10})
    for (int j = 0; j <= r; ++j) {
      CHECK(quantize_coordinate(static_cast<double>(j) / r, r) == j);
      CHECK(quantize_count(j, r, r) == j);
    }
}

TEST_CASE("quantizer error is at most half a level") {
  std::mt19937_64 g(8);
  for (int trial = 0; trial < 20000; ++trial) {
    const int r = 1 + uniform_int(g, 40);
    const int n = 1 + uniform_int(g, 300);
    const int c = uniform_int(g, n + 1);
    const int q = quantize_count(c, n, r);
    // |c/n - q/r| <= 1/(2r)  <=>  |2rc - 2nq| <= n, all in integers
    CHECK(std::llabs(2LL * r * c - 2LL * n * q) <= n);
    const double z = uniform01(g);
    CHECK(std::fabs(z - static_cast<double>(quantize_coordinate(z, r)) / r) <= 0.5 / r + 1e-15);
  }
}

TEST_CASE("grid enumeration") {
  CHECK(enumerate_grid(2, 2, false).size() == 9);
  const auto band = enumerate_grid(2, 2, true);
  CHECK(band.size() == 7);
  for (const auto& q : band) CHECK(near_simplex(q, 2));
  CHECK(enumerate_grid(1, 4, false).size() == 5);
  CHECK_THROWS_AS(enumerate_grid(6, 40, false, 1000), CapExceeded);
}

TEST_CASE("near-simplex grid covers quantized simplex points") {
  std::mt19937_64 g(12);
  for (int m : {2, 3, 4}) {
    for (int r : {2, 5, 9}) {
      const auto band = enumerate_grid(m, r, true);
      std::set<std::vector<int>> members(band.begin(), band.end());
      for (int trial = 0; trial < 10000 / 9; ++trial) {
        std::vector<double> z(static_cast<std::size_t>(m));
        double s = 0.0;
        for (auto& v : z) s += (v = -std::log(1.0 - uniform01(g)));
        for (auto& v : z) v /= s;
        CHECK(members.count(quantize(z, r)) == 1);
      }
    }
  }
}

TEST_CASE("simplex projection") {
  const auto p = project_to_simplex({0.5, 0.5, 0.5});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3));
  CHECK(project_to_simplex({0.2, 0.8}) == std::vector<double>{0.2, 0.8});
  const auto q = project_to_simplex({1.0, 0.5, 0.0});
  CHECK(q[0] == doctest::Approx(0.75));
  CHECK(q[1] == doctest::Approx(0.25));
  CHECK(q[2] == 0.0);
}
