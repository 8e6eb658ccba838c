#include "deepteam/bounds.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>

#include "deepteam/error.hpp"
#include "deepteam/kernel.hpp"
#include "deepteam/parallel.hpp"
#include "deepteam/random.hpp"
#include "deepteam/statespace.hpp"

namespace deepteam {

double default_population_constant(const TeamModel& model) {
  double c = 0.0;
  for (const auto& sp : model.subpops) c = std::max(c, static_cast<double>(sp.num_states() * sp.num_noises()));
  return c;
}

namespace {

std::vector<double> random_simplex(std::mt19937_64& g, int m) {
  std::vector<double> z(static_cast<std::size_t>(m));
  double s = 0.0;
  for (auto& v : z) {
    v = -std::log1p(-uniform01(g));
    s += v;
  }
  for (auto& v : z) v /= s;
  return z;
}

StateDist random_point(const TeamModel& model, std::mt19937_64& g, int kind, int r_probe, bool hypercube) {
  StateDist z(model.K());
  for (std::size_t k = 0; k < model.K(); ++k) {
    const int m = model.subpops[k].num_states();
    if (hypercube) {
      z[k].resize(static_cast<std::size_t>(m));
      for (auto& v : z[k]) v = kind == 0 ? quantize_coordinate(uniform01(g), r_probe) / double(r_probe) : uniform01(g);
    } else if (kind == 0) {
      CompositionLattice lat(r_probe, m);
      Counts c = lat.unrank(g() % lat.size());
      z[k].resize(c.size());
      for (std::size_t x = 0; x < c.size(); ++x) z[k][x] = c[x] / static_cast<double>(r_probe);
    } else {
      z[k] = random_simplex(g, m);
    }
  }
  return z;
}

double sup_diff(const StateDist& a, const StateDist& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t x = 0; x < a[k].size(); ++x) d = std::max(d, std::abs(a[k][x] - b[k][x]));
  return d;
}

double sup_diff(const StateActionDist& a, const StateActionDist& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.mass.size(); ++k)
    for (std::size_t i = 0; i < a.mass[k].size(); ++i) d = std::max(d, std::abs(a.mass[k][i] - b.mass[k][i]));
  return d;
}

struct Maxima {
  double h1 = 0, h2 = 0, h3 = 0, h4 = 0;
  void merge(const Maxima& o) {
    h1 = std::max(h1, o.h1);
    h2 = std::max(h2, o.h2);
    h3 = std::max(h3, o.h3);
    h4 = std::max(h4, o.h4);
  }
};

void check_finite(double ratio, const char* what, int pair) {
  if (!std::isfinite(ratio))
    throw Error(std::string("non-finite ") + what + " Lipschitz ratio at probe pair " + std::to_string(pair));
}

}  // namespace

LipschitzProfile estimate_lipschitz(const TeamModel& model, const LipschitzOptions& opts) {
  if (opts.pairs < 1 || opts.r_probe < 1) throw std::invalid_argument("need at least one probe pair and r_probe >= 1");
  LawSpace laws(model);
  const bool all_laws = laws.size() <= 64;
  LipschitzProfile prof;
  prof.C = default_population_constant(model);
  prof.pairs = opts.pairs;
  prof.r_probe = opts.r_probe;
  bool any_dependent = false;
  for (const auto& sp : model.subpops) any_dependent = any_dependent || sp.kernel_depends_on_D;
  for (int t : model_times(model)) {
    Maxima total;
    std::mutex mu;
    parallel_for(static_cast<std::uint64_t>(opts.pairs), opts.workers, [&](std::uint64_t b, std::uint64_t e) {
      Maxima local;
      for (std::uint64_t i = b; i < e; ++i) {
        auto g = make_stream(opts.seed + static_cast<std::uint64_t>(t) * 0x9E37ULL, i);
        const int kind = static_cast<int>(i % 3);
        StateDist z1 = random_point(model, g, kind, opts.r_probe, opts.hypercube);
        StateDist z2;
        if (kind == 2) {
          // Nearby pair for local slopes.
          StateDist w = random_point(model, g, 1, opts.r_probe, opts.hypercube);
          const double eps = std::pow(10.0, -4.0 * uniform01(g));
          z2 = z1;
          for (std::size_t k = 0; k < z2.size(); ++k)
            for (std::size_t x = 0; x < z2[k].size(); ++x) z2[k][x] = (1 - eps) * z1[k][x] + eps * w[k][x];
        } else {
          z2 = random_point(model, g, kind, opts.r_probe, opts.hypercube);
        }
        const double dz = sup_diff(z1, z2);
        if (dz == 0.0) continue;
        std::vector<std::uint64_t> picks;
        if (all_laws) {
          for (std::uint64_t a = 0; a < laws.size(); ++a) picks.push_back(a);
        } else {
          for (int j = 0; j < 8; ++j) picks.push_back(g() % laws.size());
        }
        for (std::uint64_t a : picks) {
          const LocalLaw gamma = laws.law(a);
          const int pair = static_cast<int>(i);
          double r3 = sup_diff(hat_f(model, t, z1, gamma), hat_f(model, t, z2, gamma)) / dz;
          check_finite(r3, "H3", pair);
          const StateActionDist D1 = phi(model, z1, gamma), D2 = phi(model, z2, gamma);
          const double c1 = cost_eval(model, t, D1), c2 = cost_eval(model, t, D2);
          double r4 = std::abs(c1 - c2) / dz;
          check_finite(r4, "H4", pair);
          const double dD = sup_diff(D1, D2);
          double r2 = dD > 0 ? std::abs(c1 - c2) / dD : 0.0;
          check_finite(r2, "H2", pair);
          double r1 = 0.0;
          if (any_dependent && dD > 0) {
            for (std::size_t k = 0; k < model.K(); ++k) {
              const auto& sp = model.subpops[k];
              if (!sp.kernel_depends_on_D) continue;
              std::vector<double> p1(static_cast<std::size_t>(sp.num_states())), p2(p1.size());
              for (int x = 0; x < sp.num_states(); ++x)
                for (int u = 0; u < sp.num_actions(); ++u) {
                  kernel_row(model, k, t, x, u, D1, p1);
                  kernel_row(model, k, t, x, u, D2, p2);
                  for (std::size_t y = 0; y < p1.size(); ++y) r1 = std::max(r1, std::abs(p1[y] - p2[y]) / dD);
                }
            }
            check_finite(r1, "H1", pair);
          }
          local.merge({r1, r2, r3, r4});
        }
      }
      std::lock_guard<std::mutex> lock(mu);
      total.merge(local);
    });
    prof.H1.push_back(total.h1);
    prof.H2.push_back(total.h2);
    prof.H3.push_back(total.h3);
    prof.H4.push_back(total.h4);
    prof.max_ratio = std::max({prof.max_ratio, total.h1, total.h2, total.h3, total.h4});
  }
  return prof;
}

LipschitzProfile supplied_profile(double H3, double H4, double C) {
  LipschitzProfile p;
  p.H3 = {H3};
  p.H4 = {H4};
  p.C = C;
  p.supplied = true;
  return p;
}

void h_recursions(LipschitzProfile& profile, int T) {
  if (T < 1) throw std::invalid_argument("horizon must be positive");
  if (profile.H3.empty() || profile.H4.empty()) throw std::invalid_argument("profile lacks H3/H4");
  profile.H5.assign(static_cast<std::size_t>(T) + 1, 0.0);
  profile.H6.assign(static_cast<std::size_t>(T) + 1, 0.0);
  for (int t = T; t >= 1; --t) {
    const auto i = static_cast<std::size_t>(t - 1);
    profile.H5[i] = profile.h4(t) + profile.H5[i + 1] * profile.h3(t);
    profile.H6[i] = profile.H5[i + 1] + profile.H6[i + 1];
  }
}

double epsilon_finite(const LipschitzProfile& profile, double n, double r, BoundMode mode) {
  if (!(n >= 1.0) || !(r >= 1.0)) throw std::invalid_argument("n and r must be >= 1");
  const double h = profile.H5_1() + profile.H6_1();
  const double info = profile.C / std::sqrt(n);
  const double comp = std::isinf(r) ? 0.0 : 1.0 / r;
  switch (mode) {
    case BoundMode::PoI:
      return h * info;
    case BoundMode::PoC:
      return h * comp;
    case BoundMode::Both:
      return h * (info + comp);
  }
  return 0.0;
}

double epsilon_discounted(const LipschitzProfile& profile, double n, double beta, double r) {
  const double H3 = profile.H3.at(0), H4 = profile.H4.at(0);
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0,1)");
  if (beta * H3 >= 1.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "contraction condition fails: beta*H3 = %.6g*%.6g = %.6g >= 1", beta, H3, beta * H3);
    throw AssumptionViolation(buf);
  }
  const double comp = std::isinf(r) ? 0.0 : 1.0 / r;
  return H4 / ((1.0 - beta) * (1.0 - beta * H3)) * (profile.C / std::sqrt(n) + comp);
}

}  // namespace deepteam
