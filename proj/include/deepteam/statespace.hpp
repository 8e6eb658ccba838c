#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepteam/error.hpp"
#include "deepteam/model.hpp"
#include "deepteam/types.hpp"

namespace deepteam {

// C(n, k), saturating at UINT64_MAX.
std::uint64_t binomial_coefficient(int n, int k);
// Number of compositions of n into m non-negative parts, C(n+m-1, m-1).
std::uint64_t count_compositions(int n, int m);
double log_multinomial(std::span<const int> counts);

// Compositions of n into m parts in lexicographic order: (0,..,0,n) has rank 0, (n,0,..,0) is last.
class CompositionLattice {
 public:
  CompositionLattice() = default;
  CompositionLattice(int n, int m, std::uint64_t cap = kDefaultCap);

  int n() const { return n_; }
  int m() const { return m_; }
  std::uint64_t size() const { return size_; }
  std::uint64_t rank(std::span<const int> counts) const;
  Counts unrank(std::uint64_t r) const;

 private:
  std::uint64_t parts(int i, int s) const { return table_[static_cast<std::size_t>(i) * (n_ + 1) + s]; }

  int n_ = 0;
  int m_ = 0;
  std::uint64_t size_ = 0;
  std::vector<std::uint64_t> table_;  // compositions of s into i parts
};

std::vector<Counts> enumerate_deep_states(int n, int m, std::uint64_t cap = kDefaultCap);

std::vector<double> empirical(std::span<const int> samples, int alphabet_size);
std::vector<double> empirical(const std::vector<std::string>& samples, const std::vector<std::string>& alphabet);
Counts count_symbols(std::span<const int> samples, int alphabet_size);

// Canonical enumeration of local-law profiles: per sub-population the map (a(x_0),..,a(x_{m-1})) read as a
// base-|U| number with x_0 most significant; profiles mixed-radix with sub-population 0 most significant.
// A major sub-population contributes only its |U| constant maps.
class LawSpace {
 public:
  LawSpace() = default;
  explicit LawSpace(const TeamModel& model, std::uint64_t cap = kDefaultCap);

  std::uint64_t size() const { return size_; }
  std::size_t K() const { return counts_.size(); }
  std::uint64_t component_count(std::size_t k) const { return counts_[k]; }
  std::uint64_t component(std::uint64_t index, std::size_t k) const { return (index / strides_[k]) % counts_[k]; }
  std::vector<int> component_actions(std::size_t k, std::uint64_t comp) const;
  LocalLaw law(std::uint64_t index) const;
  std::uint64_t index(const LocalLaw& law) const;

 private:
  std::vector<int> nx_, nu_;
  std::vector<bool> major_;
  std::vector<std::uint64_t> counts_, strides_;
  std::uint64_t size_ = 0;
};

std::vector<LocalLaw> enumerate_local_laws(const TeamModel& model, std::uint64_t cap = kDefaultCap);

struct WeightedCounts {
  Counts counts;
  double weight = 0.0;
};

// All noise count vectors for n agents with multinomial weights, in lattice order; zero-weight atoms omitted.
std::vector<WeightedCounts> enumerate_noise_empiricals(int n, const std::vector<double>& pmf,
                                                       std::uint64_t cap = kDefaultCap);

// Nearest multiple of 1/r as an integer numerator in [0, r]; exact halves go to the smaller multiple.
int quantize_coordinate(double v, int r);
// Exact quantization of the rational c/n.
int quantize_count(int c, int n, int r);
std::vector<int> quantize(std::span<const double> z, int r);
bool near_simplex(std::span<const int> numerators, int r);
// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::vector<double> z);

// Grid {0,1/r,..,1}^m as numerator vectors, lexicographic; optionally only |sum - 1| <= m/(2r).
std::vector<std::vector<int>> enumerate_grid(int m, int r, bool near_simplex_only, std::uint64_t cap = kDefaultCap);

}  // namespace deepteam
