#include "deepteam/statespace.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace deepteam {

namespace {

constexpr std::uint64_t kSat = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > kSat / a) return kSat;
  return a * b;
}

void enforce_cap(std::uint64_t value, std::uint64_t cap, const std::string& what) {
  if (value > cap)
    throw CapExceeded(what + " = " + (value == kSat ? std::string("overflow") : std::to_string(value)) +
                      " exceeds cap " + std::to_string(cap));
}

}  // namespace

std::uint64_t binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (r > kSat) return kSat;
  }
  return static_cast<std::uint64_t>(r);
}

std::uint64_t count_compositions(int n, int m) {
  if (m <= 0) return n == 0 ? 1 : 0;
  return binomial_coefficient(n + m - 1, m - 1);
}

double log_multinomial(std::span<const int> counts) {
  int total = 0;
  double r = 0.0;
  for (int c : counts) {
    total += c;
    r -= std::lgamma(static_cast<double>(c) + 1.0);
  }
  return r + std::lgamma(static_cast<double>(total) + 1.0);
}

CompositionLattice::CompositionLattice(int n, int m, std::uint64_t cap) : n_(n), m_(m) {
  if (n < 0 || m < 1) throw std::invalid_argument("composition lattice needs n >= 0 and m >= 1");
  size_ = count_compositions(n, m);
  enforce_cap(size_, cap, "deep-state lattice C(n+m-1,m-1) with n=" + std::to_string(n) + ", m=" + std::to_string(m));
  table_.assign(static_cast<std::size_t>(m + 1) * (n + 1), 0);
  for (int i = 0; i <= m; ++i)
    for (int s = 0; s <= n; ++s) table_[static_cast<std::size_t>(i) * (n + 1) + s] = count_compositions(s, i);
}

std::uint64_t CompositionLattice::rank(std::span<const int> c) const {
  if (static_cast<int>(c.size()) != m_) throw std::invalid_argument("count vector has wrong length");
  int rem = n_;
  std::uint64_t r = 0;
  for (int i = 0; i + 1 < m_; ++i) {
    if (c[i] < 0 || c[i] > rem) throw std::invalid_argument("count vector is not a composition");
    for (int v = 0; v < c[i]; ++v) r += parts(m_ - i - 1, rem - v);
    rem -= c[i];
  }
  if (c[m_ - 1] != rem) throw std::invalid_argument("count vector does not sum to n");
  return r;
}

Counts CompositionLattice::unrank(std::uint64_t r) const {
  if (r >= size_) throw std::out_of_range("deep-state rank " + std::to_string(r) + " out of range");
  Counts c(static_cast<std::size_t>(m_), 0);
  int rem = n_;
  for (int i = 0; i + 1 < m_; ++i) {
    int v = 0;
    while (r >= parts(m_ - i - 1, rem - v)) {
      r -= parts(m_ - i - 1, rem - v);
      ++v;
    }
    c[static_cast<std::size_t>(i)] = v;
    rem -= v;
  }
  c[static_cast<std::size_t>(m_ - 1)] = rem;
  return c;
}

std::vector<Counts> enumerate_deep_states(int n, int m, std::uint64_t cap) {
  CompositionLattice lat(n, m, cap);
  std::vector<Counts> out;
  out.reserve(lat.size());
  Counts c(static_cast<std::size_t>(m), 0);
  c.back() = n;
  // Lexicographic successor: increment the rightmost non-final position that can grow.
  while (true) {
    out.push_back(c);
    int i = m - 2;
    while (i >= 0) {
      int tail = 0;
      for (int j = i + 1; j < m; ++j) tail += c[static_cast<std::size_t>(j)];
      if (tail > 0) {
        ++c[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < m; ++j) c[static_cast<std::size_t>(j)] = 0;
        c.back() = tail - 1;
        break;
      }
      --i;
    }
    if (i < 0) break;
  }
  return out;
}

Counts count_symbols(std::span<const int> samples, int alphabet_size) {
  Counts c(static_cast<std::size_t>(alphabet_size), 0);
  for (int s : samples) {
    if (s < 0 || s >= alphabet_size) throw std::invalid_argument("sample outside alphabet");
    ++c[static_cast<std::size_t>(s)];
  }
  return c;
}

std::vector<double> empirical(std::span<const int> samples, int alphabet_size) {
  if (samples.empty()) throw std::invalid_argument("empirical distribution of an empty sample");
  Counts c = count_symbols(samples, alphabet_size);
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = static_cast<double>(c[i]) / static_cast<double>(samples.size());
  return out;
}

std::vector<double> empirical(const std::vector<std::string>& samples, const std::vector<std::string>& alphabet) {
  std::vector<int> idx;
  idx.reserve(samples.size());
  for (const auto& s : samples) {
    std::size_t j = 0;
    while (j < alphabet.size() && alphabet[j] != s) ++j;
    if (j == alphabet.size()) throw std::invalid_argument("sample '" + s + "' not in alphabet");
    idx.push_back(static_cast<int>(j));
  }
  return empirical(idx, static_cast<int>(alphabet.size()));
}

LawSpace::LawSpace(const TeamModel& model, std::uint64_t cap) {
  const std::size_t K = model.K();
  nx_.resize(K);
  nu_.resize(K);
  major_.resize(K);
  counts_.resize(K);
  strides_.resize(K);
  std::string formula = "local-law profiles prod_k |U^k|^|X^k|";
  for (std::size_t k = 0; k < K; ++k) {
    const auto& sp = model.subpops[k];
    nx_[k] = sp.num_states();
    nu_[k] = sp.num_actions();
    major_[k] = sp.major;
    std::uint64_t c = 1;
    if (sp.major) {
      c = static_cast<std::uint64_t>(nu_[k]);
    } else {
      for (int x = 0; x < nx_[k]; ++x) c = sat_mul(c, static_cast<std::uint64_t>(nu_[k]));
    }
    counts_[k] = c;
  }
  size_ = 1;
  for (std::size_t k = K; k-- > 0;) {
    strides_[k] = size_;
    size_ = sat_mul(size_, counts_[k]);
  }
  enforce_cap(size_, cap, formula);
}

std::vector<int> LawSpace::component_actions(std::size_t k, std::uint64_t comp) const {
  std::vector<int> a(static_cast<std::size_t>(nx_[k]));
  if (major_[k]) {
    std::fill(a.begin(), a.end(), static_cast<int>(comp));
    return a;
  }
  for (int x = nx_[k] - 1; x >= 0; --x) {
    a[static_cast<std::size_t>(x)] = static_cast<int>(comp % static_cast<std::uint64_t>(nu_[k]));
    comp /= static_cast<std::uint64_t>(nu_[k]);
  }
  return a;
}

LocalLaw LawSpace::law(std::uint64_t index) const {
  if (index >= size_) throw std::out_of_range("local-law index out of range");
  LocalLaw g;
  g.action.resize(K());
  for (std::size_t k = 0; k < K(); ++k) g.action[k] = component_actions(k, component(index, k));
  return g;
}

std::uint64_t LawSpace::index(const LocalLaw& g) const {
  if (g.action.size() != K()) throw std::invalid_argument("local law has wrong number of sub-populations");
  std::uint64_t idx = 0;
  for (std::size_t k = 0; k < K(); ++k) {
    const auto& a = g.action[k];
    if (static_cast<int>(a.size()) != nx_[k]) throw std::invalid_argument("local law has wrong number of states");
    std::uint64_t comp = 0;
    for (int x = 0; x < nx_[k]; ++x) {
      int v = a[static_cast<std::size_t>(x)];
      if (v < 0 || v >= nu_[k]) throw std::invalid_argument("action index out of range");
      if (major_[k] && v != a[0]) throw std::invalid_argument("major sub-population law must be constant");
      comp = major_[k] ? static_cast<std::uint64_t>(v) : comp * static_cast<std::uint64_t>(nu_[k]) + v;
    }
    idx += comp * strides_[k];
  }
  return idx;
}

std::vector<LocalLaw> enumerate_local_laws(const TeamModel& model, std::uint64_t cap) {
  LawSpace space(model, cap);
  std::vector<LocalLaw> out;
  out.reserve(space.size());
  for (std::uint64_t i = 0; i < space.size(); ++i) out.push_back(space.law(i));
  return out;
}

std::vector<WeightedCounts> enumerate_noise_empiricals(int n, const std::vector<double>& pmf, std::uint64_t cap) {
  const int m = static_cast<int>(pmf.size());
  std::vector<WeightedCounts> out;
  for (auto& c : enumerate_deep_states(n, m, cap)) {
    double logw = log_multinomial(c);
    bool zero = false;
    for (int w = 0; w < m; ++w) {
      int cw = c[static_cast<std::size_t>(w)];
      if (cw == 0) continue;
      double p = pmf[static_cast<std::size_t>(w)];
      if (p <= 0.0) {
        zero = true;
        break;
      }
      logw += cw * std::log(p);
    }
    if (!zero) out.push_back({std::move(c), std::exp(logw)});
  }
  return out;
}

int quantize_coordinate(double v, int r) {
  double s = v * r;
  double a = std::floor(s);
  int q = static_cast<int>(a) + (s - a > 0.5 ? 1 : 0);
  return std::clamp(q, 0, r);
}

int quantize_count(int c, int n, int r) {
  long long num = static_cast<long long>(c) * r;
  long long a = num / n;
  long long rem = num - a * n;
  return static_cast<int>(2 * rem > n ? a + 1 : a);
}

std::vector<int> quantize(std::span<const double> z, int r) {
  std::vector<int> q(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) q[i] = quantize_coordinate(z[i], r);
  return q;
}

bool near_simplex(std::span<const int> q, int r) {
  long long s = 0;
  for (int v : q) s += v;
  return 2 * std::llabs(s - r) <= static_cast<long long>(q.size());
}

namespace {

void grid_rec(int m, int r, bool filter, std::vector<int>& cur, long long partial,
              std::vector<std::vector<int>>& out) {
  const int i = static_cast<int>(cur.size());
  if (i == m) {
    if (!filter || near_simplex(cur, r)) out.push_back(cur);
    return;
  }
  for (int v = 0; v <= r; ++v) {
    long long s = partial + v;
    if (filter) {
      long long left = m - i - 1;
      if (2 * (s - r) > m) break;                  // sum already too large
      if (2 * (r - (s + left * r)) > m) continue;  // cannot reach the band
    }
    cur.push_back(v);
    grid_rec(m, r, filter, cur, s, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<std::vector<int>> enumerate_grid(int m, int r, bool near_simplex_only, std::uint64_t cap) {
  if (m < 1 || r < 1) throw std::invalid_argument("grid needs m >= 1 and r >= 1");
  std::uint64_t full = 1;
  for (int i = 0; i < m; ++i) full = sat_mul(full, static_cast<std::uint64_t>(r + 1));
  if (!near_simplex_only) enforce_cap(full, cap, "quantized grid (r+1)^m with r=" + std::to_string(r) + ", m=" + std::to_string(m));
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  grid_rec(m, r, near_simplex_only, cur, 0, out);
  enforce_cap(out.size(), cap, "near-simplex grid with r=" + std::to_string(r) + ", m=" + std::to_string(m));
  return out;
}

std::vector<double> project_to_simplex(std::vector<double> z) {
  if (z.empty()) return z;
  std::vector<double> s = z;
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    cum += s[i];
    const double th = (cum - 1.0) / static_cast<double>(i + 1);
    if (s[i] - th > 0.0) theta = th;
  }
  for (auto& v : z) v = std::max(v - theta, 0.0);
  return z;
}

}  // namespace deepteam
