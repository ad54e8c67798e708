#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqmc/errors.hpp"
#include "seqmc/path.hpp"
#include "seqmc/random.hpp"

namespace seqmc {

/// Slack allowed above log G = 0 before a potential is rejected as > 1.
inline constexpr double kPotentialTolerance = 1e-12;

/// A Feynman-Kac model on path space: initial law M_1, mutation kernels M_n
/// and potentials G_n with values in (0, 1].
///
/// All accessors read at most the last l+1 coordinates of their path
/// argument when support_width() returns l. Flows without a declared width
/// may read the whole path and can only be run in path storage mode.
template <class State>
class FeynmanKacFlow {
 public:
  virtual ~FeynmanKacFlow() = default;

  /// Draw from M_1 when n == 1 (parent empty), otherwise from M_n(parent, .).
  virtual State sample_mutation(std::size_t n, const PathView<State>& parent,
                                Rng& rng) const = 0;

  /// log G_n(path); path has length n.
  virtual double log_potential(std::size_t n, const PathView<State>& path) const = 0;

  virtual std::optional<std::size_t> support_width() const { return std::nullopt; }

  /// Last time index the flow is defined for, if finite.
  virtual std::optional<std::size_t> horizon() const { return std::nullopt; }

  virtual bool has_densities() const { return false; }

  /// log density (or pmf) of M_n(parent, .) at x; M_1 when n == 1.
  virtual double log_mutation_density(std::size_t /*n*/, const PathView<State>& /*parent*/,
                                      const State& /*x*/) const {
    throw ConfigError("flow does not expose mutation densities");
  }

  /// log[G_{n-1}(parent) m_n(parent, x)], the unnormalised density of the
  /// step target. Flows override this when the product is tractable while
  /// its factors are not.
  virtual double log_weighted_mutation(std::size_t n, const PathView<State>& parent,
                                       const State& x) const {
    if (n == 1) return log_mutation_density(1, parent, x);
    return log_potential(n - 1, parent) + log_mutation_density(n, parent, x);
  }

  /// The state space, when it is finite and small enough to enumerate.
  virtual std::optional<std::vector<State>> finite_support() const { return std::nullopt; }
};

enum class FlowKind { bootstrap, fully_adapted, auxiliary };

inline std::string to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::bootstrap:
      return "bpf";
    case FlowKind::fully_adapted:
      return "faapf";
    case FlowKind::auxiliary:
      return "apf";
  }
  return "unknown";
}

/// A flow built from a state-space model. Adds what the filter, predictor
/// and likelihood estimators need on top of the Feynman-Kac interface.
template <class State>
class StateSpaceFlow : public FeynmanKacFlow<State> {
 public:
  virtual FlowKind kind() const = 0;

  /// log w_n(path) such that the filter is pi_n(f) = eta_n(w f) / eta_n(w).
  virtual double log_filter_weight(std::size_t n, const PathView<State>& path) const = 0;

  /// log of the constant c with L_n = c * gamma_n(w_n); zero except for the
  /// fully adapted flow, whose Z_n omits the time-1 evidence.
  virtual double log_likelihood_offset() const { return 0.0; }

  /// Exact law of the model transition L_n(prev, .) (L_1 when prev is null),
  /// available for finite models only.
  virtual std::optional<std::vector<std::pair<State, double>>> transition_law(
      std::size_t n, const State* prev) const = 0;

  virtual State sample_transition(std::size_t n, const State* prev, Rng& rng) const = 0;
};

enum class Arity { final_coordinate, full_path };

/// Test function on E_n. Final-coordinate functions only see x_n and work in
/// either storage mode; full-path functions need path storage.
template <class State>
class TestFunction {
 public:
  using FinalFn = std::function<double(const State&)>;
  using PathFn = std::function<double(const PathView<State>&)>;

  static TestFunction final_coordinate(FinalFn f) {
    TestFunction t;
    t.arity_ = Arity::final_coordinate;
    t.final_ = std::move(f);
    return t;
  }

  static TestFunction full_path(PathFn f) {
    TestFunction t;
    t.arity_ = Arity::full_path;
    t.path_ = std::move(f);
    return t;
  }

  static TestFunction constant(double c) {
    return final_coordinate([c](const State&) { return c; });
  }

  Arity arity() const { return arity_; }

  double operator()(const PathView<State>& path) const {
    if (arity_ == Arity::final_coordinate) return final_(path.back());
    return path_(path);
  }

 private:
  Arity arity_ = Arity::final_coordinate;
  FinalFn final_;
  PathFn path_;
};

template <class State>
void check_time_index(const FeynmanKacFlow<State>& flow, std::size_t n) {
  if (n == 0) throw ConfigError("time indices start at 1");
  if (auto h = flow.horizon(); h && n > *h) {
    throw ConfigError("time index " + std::to_string(n) + " beyond model horizon " +
                      std::to_string(*h));
  }
}

template <class State>
State sample_mutation(const FeynmanKacFlow<State>& flow, std::size_t n,
                      const PathView<State>& parent, Rng& rng) {
  check_time_index(flow, n);
  if (n > 1 && parent.length() != n - 1) {
    throw ConfigError("parent path length must be n-1");
  }
  return flow.sample_mutation(n, parent, rng);
}

/// log G_n(path), validated to be finite and at most 0.
template <class State>
double log_potential(const FeynmanKacFlow<State>& flow, std::size_t n,
                     const PathView<State>& path) {
  const double lg = flow.log_potential(n, path);
  if (std::isnan(lg) || !std::isfinite(lg)) {
    throw ModelError("potential G_" + std::to_string(n) + " is zero or not finite");
  }
  if (lg > kPotentialTolerance) {
    throw ModelError("potential G_" + std::to_string(n) + " exceeds 1");
  }
  return lg;
}

}  // namespace seqmc
