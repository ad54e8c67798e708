#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "seqmc/errors.hpp"
#include "seqmc/flow.hpp"
#include "seqmc/kernels.hpp"
#include "seqmc/numeric.hpp"
#include "seqmc/particle_run.hpp"
#include "seqmc/path.hpp"
#include "seqmc/random.hpp"

namespace seqmc {

template <class State>
struct RunConfig {
  std::shared_ptr<const FeynmanKacFlow<State>> flow;
  std::shared_ptr<const MarkovKernel<State>> kernel;
  std::size_t particles = 1;
  std::size_t horizon = 1;
  InitPolicy<State> init = InitPolicy<State>::stationary();
  std::uint64_t seed = 0;
  StorageMode storage = StorageMode::marginal;

  void validate() const {
    if (!flow) throw ConfigError("run config has no flow");
    if (!kernel) throw ConfigError("run config has no kernel");
    if (particles < 1) throw ConfigError("need at least one particle");
    if (horizon < 1) throw ConfigError("horizon must be at least 1");
    check_time_index(*flow, horizon);
    kernel->validate(*flow);
    init.validate();
    if (init.kind == InitPolicy<State>::Kind::burnin) kernel->validate(*flow);
    if (storage == StorageMode::marginal && !flow->support_width()) {
      throw ConfigError("marginal storage needs a flow with declared support width");
    }
  }
};

/// Generations retained in marginal mode: the l+1 coordinates read by the
/// flow plus the generation under construction.
template <class State>
std::size_t marginal_retention(const FeynmanKacFlow<State>& flow) {
  return *flow.support_width() + 2;
}

/// The MCMC particle filter. At each step the first particle is drawn from
/// the init policy and particles 2..N by successive kernel moves, all
/// targeting Phi_n of the frozen previous cloud. Each step uses its own
/// random stream derived from (seed, n).
template <class State>
ParticleRun<State> run_mcmc_pf(const RunConfig<State>& config) {
  config.validate();
  const auto& flow = *config.flow;
  const std::size_t retain =
      config.storage == StorageMode::marginal ? marginal_retention(flow) : 0;
  ParticleRun<State> run(config.particles, config.storage, retain);

  std::vector<PathParticle<State>> chain(config.particles);
  for (std::size_t n = 1; n <= config.horizon; ++n) {
    Rng rng(derive_seed(config.seed, n));
    const StepTarget<State> target(flow, n, n == 1 ? nullptr : &run.genealogy());
    auto kernel = config.kernel->bind(target);

    chain[0] = init_chain(target, *kernel, config.init, rng);
    const auto proposals_before = kernel->proposals();
    const auto accepted_before = kernel->acceptances();
    for (std::size_t i = 1; i < config.particles; ++i) chain[i] = kernel->step(chain[i - 1], rng);

    Generation<State> gen;
    gen.states.reserve(config.particles);
    gen.log_potential.reserve(config.particles);
    if (n > 1) gen.parents.reserve(config.particles);
    for (const auto& p : chain) {
      gen.log_potential.push_back(log_potential(flow, n, target.view(p)));
      gen.states.push_back(p.state);
      if (n > 1) gen.parents.push_back(p.ancestor);
    }
    run.append(std::move(gen));
    run.record_acceptance(kernel->proposals() - proposals_before,
                          kernel->acceptances() - accepted_before);
  }
  return run;
}

/// Normalised weights w_n(path^i) of the filter estimator.
template <class State>
std::vector<double> filter_weights(const ParticleRun<State>& run, const StateSpaceFlow<State>& flow,
                                   std::size_t n) {
  const auto& gen = run.cloud(n);
  std::vector<double> lw(gen.size());
  for (std::size_t i = 0; i < gen.size(); ++i) lw[i] = flow.log_filter_weight(n, run.path(n, i));
  const double total = log_sum_exp(lw);
  if (!std::isfinite(total)) throw NumericalError("filter weights vanish");
  for (double& w : lw) w = std::exp(w - total);
  return lw;
}

/// pi_n^N(f): the weighted cloud eta_n^N(w f) / eta_n^N(w); for the fully
/// adapted flow the weights are constant and this is eta_n^N(f).
template <class State>
double filter_estimate(const ParticleRun<State>& run, const StateSpaceFlow<State>& flow,
                       std::size_t n, const TestFunction<State>& f) {
  if (flow.kind() == FlowKind::fully_adapted) return empirical_integrate(run, n, f);
  check_arity(run, f);
  const auto w = filter_weights(run, flow, n);
  CompensatedSum acc;
  for (std::size_t i = 0; i < w.size(); ++i) acc.add(w[i] * f(run.path(n, i)));
  const double v = acc.value();
  if (!std::isfinite(v)) throw NumericalError("non-finite filter estimate");
  return v;
}

struct PredictorEstimate {
  double value = 0.0;
  bool exact = true;  // false when L_n was integrated by one draw per particle
};

/// Predictor estimate. For the bootstrap flow this is eta_n^N(f). Otherwise
/// the filter cloud at n-1 is pushed through L_n, integrating exactly when
/// the transition law is finite and with one fresh draw per particle if not.
template <class State>
PredictorEstimate predictor_estimate(const ParticleRun<State>& run,
                                     const StateSpaceFlow<State>& flow, std::size_t n,
                                     const TestFunction<State>& f, std::uint64_t seed = 0) {
  if (flow.kind() == FlowKind::bootstrap) return {empirical_integrate(run, n, f), true};
  check_arity(run, f);
  Rng rng(derive_seed(seed, hash_label("predictor"), n));
  PredictorEstimate out;

  auto integrate = [&](const State* prev, auto&& eval) {
    if (auto law = flow.transition_law(n, prev)) {
      CompensatedSum s;
      for (const auto& [x, p] : *law) s.add(p * eval(x));
      return s.value();
    }
    out.exact = false;
    return eval(flow.sample_transition(n, prev, rng));
  };

  if (n == 1) {
    const std::size_t draws = run.particles();
    CompensatedSum acc;
    for (std::size_t i = 0; i < draws; ++i) {
      const double v = integrate(nullptr, [&](const State& x) {
        return f(PathView<State>::from_span(std::span<const State>(&x, 1)));
      });
      acc.add(v);
      if (out.exact) break;
    }
    out.value = out.exact ? acc.value() : acc.value() / static_cast<double>(draws);
    return out;
  }

  const auto w = filter_weights(run, flow, n - 1);
  const auto& gen = run.cloud(n - 1);
  CompensatedSum acc;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const State* prev = &gen.states[i];
    const double v = integrate(prev, [&](const State& x) {
      return f(run.genealogy().extension(n - 1, i, x));
    });
    acc.add(w[i] * v);
  }
  out.value = acc.value();
  return out;
}

/// log L_n^N = log Z_n^N + log eta_n^N(w_n) + offset.
template <class State>
double log_likelihood_estimate(const ParticleRun<State>& run, const StateSpaceFlow<State>& flow,
                               std::size_t n) {
  const auto& gen = run.cloud(n);
  std::vector<double> lw(gen.size());
  for (std::size_t i = 0; i < gen.size(); ++i) lw[i] = flow.log_filter_weight(n, run.path(n, i));
  return run.log_normconst(n) + log_mean_exp(lw) + flow.log_likelihood_offset();
}

}  // namespace seqmc
