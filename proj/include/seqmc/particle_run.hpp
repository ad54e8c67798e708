#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seqmc/errors.hpp"
#include "seqmc/flow.hpp"
#include "seqmc/numeric.hpp"
#include "seqmc/path.hpp"

namespace seqmc {

/// Output of a particle filter: the retained generations, and for every
/// completed step p the empirical potential mean g_p^N (kept in log space).
template <class State>
class ParticleRun {
 public:
  ParticleRun(std::size_t particles, StorageMode mode, std::size_t retain)
      : particles_(particles), mode_(mode), genealogy_(mode == StorageMode::path ? 0 : retain) {
    log_z_.push_back(0.0);  // log Z_1 = 0
  }

  std::size_t time() const { return genealogy_.time(); }
  std::size_t particles() const { return particles_; }
  StorageMode mode() const { return mode_; }
  const Genealogy<State>& genealogy() const { return genealogy_; }

  const Generation<State>& cloud(std::size_t n) const { return genealogy_.generation(n); }
  PathView<State> path(std::size_t n, std::size_t i) const { return genealogy_.path(n, i); }

  /// Appends generation n = time()+1. Its log_potential must be filled.
  void append(Generation<State> gen) {
    if (gen.log_potential.size() != gen.states.size()) {
      throw ConfigError("generation potentials not evaluated");
    }
    const double lg = log_mean_exp(gen.log_potential);
    log_g_.push_back(lg);
    log_z_.push_back(log_z_.back() + lg);
    genealogy_.push(std::move(gen));
  }

  void record_acceptance(std::uint64_t proposals, std::uint64_t accepted) {
    proposals_.push_back(proposals);
    accepted_.push_back(accepted);
  }

  /// Fraction of kernel moves accepted at step n (1 for rejection-free kernels).
  double acceptance_rate(std::size_t n) const {
    const auto p = proposals_.at(n - 1);
    return p == 0 ? 1.0 : static_cast<double>(accepted_.at(n - 1)) / static_cast<double>(p);
  }

  /// log g_p^N for a completed step p.
  double log_potential_mean(std::size_t p) const { return log_g_.at(p - 1); }

  /// log Z_n^N = sum_{p<n} log g_p^N; defined for n <= time()+1.
  double log_normconst(std::size_t n) const {
    if (n == 0 || n > log_z_.size()) throw ConfigError("normalising constant not available");
    return log_z_[n - 1];
  }

  std::size_t stored_states() const { return genealogy_.stored_states(); }

 private:
  std::size_t particles_;
  StorageMode mode_;
  Genealogy<State> genealogy_;
  std::vector<double> log_g_;
  std::vector<double> log_z_;
  std::vector<std::uint64_t> proposals_;
  std::vector<std::uint64_t> accepted_;
};

/// Mean of already evaluated test-function values.
inline double empirical_mean(std::span<const double> values) {
  if (values.empty()) throw ConfigError("empty particle cloud");
  const double m = compensated_sum(values) / static_cast<double>(values.size());
  if (!std::isfinite(m)) throw NumericalError("non-finite test function value");
  return m;
}

template <class State, class F>
double empirical_integrate(std::span<const State> cloud, F&& f) {
  std::vector<double> values;
  values.reserve(cloud.size());
  for (const auto& x : cloud) values.push_back(f(x));
  return empirical_mean(values);
}

template <class State>
void check_arity(const ParticleRun<State>& run, const TestFunction<State>& f) {
  if (f.arity() == Arity::full_path && run.mode() != StorageMode::path) {
    throw ConfigError("full-path test functions need path storage");
  }
}

/// eta_n^N(f)
template <class State>
double empirical_integrate(const ParticleRun<State>& run, std::size_t n,
                           const TestFunction<State>& f) {
  check_arity(run, f);
  const auto& gen = run.cloud(n);
  std::vector<double> values(gen.size());
  for (std::size_t i = 0; i < gen.size(); ++i) values[i] = f(run.path(n, i));
  return empirical_mean(values);
}

template <class State>
double log_normconst_estimate(const ParticleRun<State>& run, std::size_t n) {
  return run.log_normconst(n);
}

/// Z_n^N = prod_{p<n} g_p^N (1 at n = 1).
template <class State>
double normconst_estimate(const ParticleRun<State>& run, std::size_t n) {
  return std::exp(run.log_normconst(n));
}

/// gamma_n^N(f) = eta_n^N(f) Z_n^N
template <class State>
double unnormalized_integrate(const ParticleRun<State>& run, std::size_t n,
                              const TestFunction<State>& f) {
  return empirical_integrate(run, n, f) * normconst_estimate(run, n);
}

}  // namespace seqmc
