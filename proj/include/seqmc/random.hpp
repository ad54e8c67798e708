#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "seqmc/errors.hpp"

namespace seqmc {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a; used to turn experiment labels into seed components.
constexpr std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based stream split. Every component is folded through splitmix64,
/// so (root, a, b) and (root, b, a) give unrelated streams.
template <class... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t root, Parts... parts) {
  std::uint64_t s = splitmix64(root);
  ((s = splitmix64(s ^ static_cast<std::uint64_t>(parts))), ...);
  return s;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Inverse-CDF sampler over a finite index set. Built from log weights in
/// O(size), draws in O(log size).
class DiscreteSampler {
 public:
  DiscreteSampler() = default;

  explicit DiscreteSampler(std::span<const double> log_weights) {
    if (log_weights.empty()) throw ModelError("discrete sampler: no weights");
    double top = -std::numeric_limits<double>::infinity();
    for (double lw : log_weights) {
      if (std::isnan(lw)) throw ModelError("discrete sampler: NaN weight");
      top = std::max(top, lw);
    }
    if (!std::isfinite(top)) throw ModelError("discrete sampler: all weights vanish");
    cdf_.resize(log_weights.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < log_weights.size(); ++j) {
      acc += std::exp(log_weights[j] - top);
      cdf_[j] = acc;
    }
    total_ = acc;
    if (!(total_ > 0.0) || !std::isfinite(total_)) {
      throw ModelError("discrete sampler: degenerate total weight");
    }
  }

  std::size_t size() const { return cdf_.size(); }

  std::size_t operator()(Rng& rng) const {
    const double u = uniform01(rng) * total_;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<std::size_t>(it - cdf_.begin());
  }

  double probability(std::size_t j) const {
    const double prev = j == 0 ? 0.0 : cdf_[j - 1];
    return (cdf_[j] - prev) / total_;
  }

 private:
  std::vector<double> cdf_;
  double total_ = 0.0;
};

}  // namespace seqmc
