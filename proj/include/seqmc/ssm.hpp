#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqmc/errors.hpp"
#include "seqmc/flow.hpp"
#include "seqmc/kernels.hpp"
#include "seqmc/numeric.hpp"
#include "seqmc/path.hpp"
#include "seqmc/random.hpp"

namespace seqmc {

/// A state-space model with fixed observations y_{1:T}. Transition
/// arguments take `prev == nullptr` to mean the initial law L_1.
template <class State>
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  /// Number of observations T.
  virtual std::size_t horizon() const = 0;

  virtual State sample_transition(std::size_t n, const State* prev, Rng& rng) const = 0;
  virtual double log_transition_density(std::size_t n, const State* prev, const State& x) const = 0;

  /// log g_n(x, y_n)
  virtual double log_likelihood(std::size_t n, const State& x) const = 0;

  virtual bool fully_adaptable() const { return false; }

  /// log L_n(g_n)(prev) = log of the integral of L_n(prev, dx) g_n(x, y_n).
  virtual double log_predictive_likelihood(std::size_t /*n*/, const State* /*prev*/) const {
    throw ConfigError("model has no closed-form predictive likelihood");
  }

  /// Draw from the twisted kernel L_n(prev, dx) g_n(x) / L_n(g_n)(prev).
  virtual State sample_adapted(std::size_t /*n*/, const State* /*prev*/, Rng& /*rng*/) const {
    throw ConfigError("model has no sampler for the fully adapted kernel");
  }

  virtual double log_adapted_density(std::size_t n, const State* prev, const State& x) const {
    return log_transition_density(n, prev, x) + log_likelihood(n, x) -
           log_predictive_likelihood(n, prev);
  }

  virtual std::optional<std::vector<State>> finite_support() const { return std::nullopt; }

  void check_time(std::size_t n) const {
    if (n == 0 || n > horizon()) {
      throw ConfigError("time " + std::to_string(n) + " outside the observation window 1.." +
                        std::to_string(horizon()));
    }
  }
};

/// Homogeneous finite-state model on {0, ..., S-1} with per-time likelihood
/// tables g_n(x) = likelihood[n-1][x].
class FiniteSsm final : public StateSpaceModel<int> {
 public:
  FiniteSsm(std::vector<double> initial, std::vector<std::vector<double>> transition,
            std::vector<std::vector<double>> likelihood)
      : initial_(std::move(initial)),
        transition_(std::move(transition)),
        likelihood_(std::move(likelihood)) {
    const std::size_t s = initial_.size();
    if (s == 0) throw ConfigError("finite model needs at least one state");
    check_pmf(initial_, "initial law");
    if (transition_.size() != s) throw ConfigError("transition matrix has the wrong size");
    for (const auto& row : transition_) {
      if (row.size() != s) throw ConfigError("transition matrix has the wrong size");
      check_pmf(row, "transition row");
    }
    if (likelihood_.empty()) throw ConfigError("finite model needs at least one observation");
    for (const auto& row : likelihood_) {
      if (row.size() != s) throw ConfigError("likelihood table has the wrong size");
      for (double g : row) {
        if (!(g > 0.0) || g > 1.0 || !std::isfinite(g)) {
          throw ConfigError("likelihood values must lie in (0, 1]");
        }
      }
    }
  }

  /// Model with emission matrix E[x][y] and integer observations y_{1:T}.
  static FiniteSsm with_emissions(std::vector<double> initial,
                                  std::vector<std::vector<double>> transition,
                                  std::vector<std::vector<double>> emission,
                                  std::vector<int> observations) {
    std::vector<std::vector<double>> lik;
    for (int y : observations) {
      std::vector<double> row;
      for (const auto& e : emission) {
        if (y < 0 || static_cast<std::size_t>(y) >= e.size()) {
          throw InputError("observation outside the emission alphabet");
        }
        row.push_back(e[static_cast<std::size_t>(y)]);
      }
      lik.push_back(std::move(row));
    }
    FiniteSsm m(std::move(initial), std::move(transition), std::move(lik));
    m.emission_ = std::move(emission);
    m.observations_ = std::move(observations);
    return m;
  }

  std::size_t states() const { return initial_.size(); }
  std::size_t horizon() const override { return likelihood_.size(); }
  const std::vector<double>& initial() const { return initial_; }
  const std::vector<std::vector<double>>& transition() const { return transition_; }
  const std::vector<int>& observations() const { return observations_; }
  const std::vector<std::vector<double>>& emission() const { return emission_; }

  double transition_probability(const int* prev, int x) const {
    const auto& row = prev == nullptr ? initial_ : transition_.at(index(*prev));
    return row.at(index(x));
  }

  double likelihood(std::size_t n, int x) const {
    check_time(n);
    return likelihood_[n - 1].at(index(x));
  }

  int sample_transition(std::size_t n, const int* prev, Rng& rng) const override {
    check_time(n);
    const auto& row = prev == nullptr ? initial_ : transition_.at(index(*prev));
    return draw(row, rng);
  }

  double log_transition_density(std::size_t n, const int* prev, const int& x) const override {
    check_time(n);
    return std::log(transition_probability(prev, x));
  }

  double log_likelihood(std::size_t n, const int& x) const override {
    return std::log(likelihood(n, x));
  }

  bool fully_adaptable() const override { return true; }

  double log_predictive_likelihood(std::size_t n, const int* prev) const override {
    check_time(n);
    CompensatedSum s;
    for (std::size_t x = 0; x < states(); ++x) {
      s.add(transition_probability(prev, static_cast<int>(x)) * likelihood_[n - 1][x]);
    }
    return std::log(s.value());
  }

  int sample_adapted(std::size_t n, const int* prev, Rng& rng) const override {
    check_time(n);
    std::vector<double> w(states());
    for (std::size_t x = 0; x < states(); ++x) {
      w[x] = transition_probability(prev, static_cast<int>(x)) * likelihood_[n - 1][x];
    }
    return draw(w, rng);
  }

  std::optional<std::vector<int>> finite_support() const override {
    std::vector<int> s(states());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<int>(i);
    return s;
  }

  /// log L_1, ..., log L_T by the forward algorithm.
  std::vector<double> log_marginal_likelihoods() const {
    std::vector<double> out;
    std::vector<double> alpha = initial_;
    double log_scale = 0.0;
    for (std::size_t n = 1; n <= horizon(); ++n) {
      if (n > 1) {
        std::vector<double> next(states(), 0.0);
        for (std::size_t a = 0; a < states(); ++a) {
          for (std::size_t b = 0; b < states(); ++b) next[b] += alpha[a] * transition_[a][b];
        }
        alpha = std::move(next);
      }
      double total = 0.0;
      for (std::size_t x = 0; x < states(); ++x) {
        alpha[x] *= likelihood_[n - 1][x];
        total += alpha[x];
      }
      for (double& a : alpha) a /= total;
      log_scale += std::log(total);
      out.push_back(log_scale);
    }
    return out;
  }

  /// Forward simulation of (x_{1:n}, y_{1:n}); needs an emission matrix.
  std::pair<std::vector<int>, std::vector<int>> simulate(std::size_t n, Rng& rng) const {
    if (emission_.empty()) throw ConfigError("simulation needs an emission matrix");
    if (n < 1) throw ConfigError("simulation length must be at least 1");
    std::vector<int> xs, ys;
    for (std::size_t t = 1; t <= n; ++t) {
      const int x = draw(t == 1 ? initial_ : transition_[index(xs.back())], rng);
      xs.push_back(x);
      ys.push_back(draw(emission_[index(x)], rng));
    }
    return {xs, ys};
  }

 private:
  std::size_t index(int x) const {
    if (x < 0 || static_cast<std::size_t>(x) >= states()) throw ModelError("state out of range");
    return static_cast<std::size_t>(x);
  }

  static void check_pmf(const std::vector<double>& p, const char* what) {
    double total = 0.0;
    for (double v : p) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " has invalid entries");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError(std::string(what) + " does not sum to 1");
  }

  static int draw(const std::vector<double>& w, Rng& rng) {
    double u = uniform01(rng);
    double total = 0.0;
    for (double v : w) total += v;
    u *= total;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (u < w[i]) return static_cast<int>(i);
      u -= w[i];
    }
    for (std::size_t i = w.size(); i-- > 0;) {
      if (w[i] > 0.0) return static_cast<int>(i);
    }
    throw ModelError("cannot sample from a zero measure");
  }

  std::vector<double> initial_;
  std::vector<std::vector<double>> transition_;
  std::vector<std::vector<double>> likelihood_;
  std::vector<std::vector<double>> emission_;
  std::vector<int> observations_;
};

/// The binary toy model: uniform L_1, L_n stays put with probability alpha,
/// g(x, y) = 0.99 if x == y else 0.01, observations y_1 = y_2 = 0.
inline FiniteSsm binary_toy_model(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  return FiniteSsm::with_emissions({0.5, 0.5}, {{alpha, 1.0 - alpha}, {1.0 - alpha, alpha}},
                                   {{0.99, 0.01}, {0.01, 0.99}}, {0, 0});
}

/// Grid values of the discretised linear Gaussian model.
inline std::vector<double> analysis_grid(std::size_t points = 41, double lo = -5.0,
                                         double hi = 5.0) {
  if (points < 2) throw ConfigError("grid needs at least two points");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) {
    g[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  return g;
}

/// One-dimensional linear Gaussian model restricted to a grid: L_1 and
/// L_n(z, .) are the normal densities N(0, 1) and N(z/2, 1) renormalised on
/// the grid, and g_n(z) = phi(y_n - z).
inline FiniteSsm discretised_linear_gaussian(const std::vector<double>& observations,
                                             std::size_t points = 41, double lo = -5.0,
                                             double hi = 5.0) {
  const auto grid = analysis_grid(points, lo, hi);
  auto normalised = [&](double mean) {
    std::vector<double> row(points);
    double total = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
      row[k] = std::exp(log_normal_pdf(grid[k], mean, 1.0));
      total += row[k];
    }
    for (double& v : row) v /= total;
    return row;
  };
  std::vector<std::vector<double>> transition;
  for (std::size_t k = 0; k < points; ++k) transition.push_back(normalised(grid[k] / 2.0));
  std::vector<std::vector<double>> lik;
  for (double y : observations) {
    if (!std::isfinite(y)) throw InputError("non-finite observation");
    std::vector<double> row(points);
    for (std::size_t k = 0; k < points; ++k) row[k] = std::exp(log_normal_pdf(y, grid[k], 1.0));
    lik.push_back(std::move(row));
  }
  return FiniteSsm(normalised(0.0), std::move(transition), std::move(lik));
}

/// X_1 ~ N(0, I_d), X_n | x_{n-1} ~ N(x_{n-1}/2, I_d), Y_n | x_n ~ N(x_n, I_d).
class LinearGaussianSsm final : public StateSpaceModel<std::vector<double>> {
 public:
  using Vec = std::vector<double>;

  LinearGaussianSsm(std::size_t d, std::vector<Vec> observations)
      : d_(d), ys_(std::move(observations)) {
    if (d_ < 1) throw ConfigError("dimension must be at least 1");
    if (ys_.empty()) throw ConfigError("linear Gaussian model needs observations");
    for (const auto& y : ys_) {
      if (y.size() != d_) throw ConfigError("observation dimension does not match the model");
      for (double v : y) {
        if (!std::isfinite(v)) throw InputError("non-finite observation");
      }
    }
  }

  std::size_t dimension() const { return d_; }
  std::size_t horizon() const override { return ys_.size(); }
  const std::vector<Vec>& observations() const { return ys_; }

  Vec sample_transition(std::size_t n, const Vec* prev, Rng& rng) const override {
    check_time(n);
    Vec x(d_);
    for (std::size_t i = 0; i < d_; ++i) x[i] = prior_mean(prev, i) + standard_normal(rng);
    return x;
  }

  double log_transition_density(std::size_t n, const Vec* prev, const Vec& x) const override {
    check_time(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < d_; ++i) acc += log_normal_pdf(x[i], prior_mean(prev, i), 1.0);
    return acc;
  }

  double log_likelihood(std::size_t n, const Vec& x) const override {
    check_time(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < d_; ++i) acc += log_normal_pdf(ys_[n - 1][i], x[i], 1.0);
    return acc;
  }

  bool fully_adaptable() const override { return true; }

  /// Y_n | x_{n-1} ~ N(x_{n-1}/2, 2 I); Y_1 ~ N(0, 2 I).
  double log_predictive_likelihood(std::size_t n, const Vec* prev) const override {
    check_time(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < d_; ++i) acc += log_normal_pdf(ys_[n - 1][i], prior_mean(prev, i), 2.0);
    return acc;
  }

  /// Posterior of X_n given prior N(m, 1) and y_n: N((m + y_n)/2, 1/2).
  Vec sample_adapted(std::size_t n, const Vec* prev, Rng& rng) const override {
    check_time(n);
    Vec x(d_);
    const double sd = std::sqrt(0.5);
    for (std::size_t i = 0; i < d_; ++i) {
      x[i] = 0.5 * (prior_mean(prev, i) + ys_[n - 1][i]) + sd * standard_normal(rng);
    }
    return x;
  }

  double log_adapted_density(std::size_t n, const Vec* prev, const Vec& x) const override {
    check_time(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < d_; ++i) {
      acc += log_normal_pdf(x[i], 0.5 * (prior_mean(prev, i) + ys_[n - 1][i]), 0.5);
    }
    return acc;
  }

 private:
  double prior_mean(const Vec* prev, std::size_t i) const {
    return prev == nullptr ? 0.0 : 0.5 * (*prev)[i];
  }

  std::size_t d_;
  std::vector<Vec> ys_;
};

struct LinearGaussianSample {
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> observations;
};

/// Forward simulation of the linear Gaussian model.
inline LinearGaussianSample simulate_linear_gaussian(std::size_t d, std::size_t n, Rng& rng) {
  if (n < 1 || d < 1) throw ConfigError("simulation needs n >= 1 and d >= 1");
  LinearGaussianSample out;
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> x(d), y(d);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = (t == 0 ? 0.0 : 0.5 * out.states.back()[i]) + standard_normal(rng);
      y[i] = x[i] + standard_normal(rng);
    }
    out.states.push_back(std::move(x));
    out.observations.push_back(std::move(y));
  }
  return out;
}

inline std::pair<std::vector<int>, std::vector<int>> simulate_ssm(const FiniteSsm& model,
                                                                  std::size_t n, Rng& rng) {
  return model.simulate(n, rng);
}

/// log L_n by independent scalar Kalman recursions, one per coordinate.
inline double kalman_log_marginal_likelihood(std::size_t d,
                                             const std::vector<std::vector<double>>& ys) {
  if (d < 1) throw ConfigError("dimension must be at least 1");
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double m = 0.0;
    double p = 1.0;
    for (std::size_t t = 0; t < ys.size(); ++t) {
      if (ys[t].size() != d) throw ConfigError("observation dimension does not match");
      const double y = ys[t][i];
      if (!std::isfinite(y)) throw InputError("non-finite observation");
      const double s = p + 1.0;
      total += log_normal_pdf(y, m, s);
      const double gain = p / s;
      m += gain * (y - m);
      p *= 1.0 - gain;
      m *= 0.5;
      p = 0.25 * p + 1.0;
    }
  }
  return total;
}

inline double kalman_log_marginal_likelihood(const LinearGaussianSsm& model, std::size_t n) {
  model.check_time(n);
  std::vector<std::vector<double>> ys(model.observations().begin(),
                                      model.observations().begin() + static_cast<long>(n));
  return kalman_log_marginal_likelihood(model.dimension(), ys);
}

/// Exact filter/predictor/likelihood quantities of a finite model, by
/// summation over every path.
struct FiniteSsmQuantities {
  std::vector<std::vector<double>> filter;     // pi_n, n = 1..T
  std::vector<std::vector<double>> predictor;  // tilde pi_n, n = 1..T
  std::vector<double> likelihood;              // L_n
};

inline FiniteSsmQuantities exact_quantities(const FiniteSsm& model) {
  const std::size_t s = model.states();
  const std::size_t t_max = model.horizon();
  FiniteSsmQuantities q;
  for (std::size_t n = 1; n <= t_max; ++n) {
    std::vector<double> filt(s, 0.0), pred(s, 0.0);
    double lik = 0.0;
    double pred_total = 0.0;
    std::size_t paths = 1;
    for (std::size_t k = 0; k < n; ++k) paths *= s;
    std::vector<int> x(n);
    for (std::size_t code = 0; code < paths; ++code) {
      std::size_t c = code;
      for (std::size_t k = n; k-- > 0;) {
        x[k] = static_cast<int>(c % s);
        c /= s;
      }
      double prior = 1.0;
      double g_before = 1.0;
      for (std::size_t k = 0; k < n; ++k) {
        prior *= model.transition_probability(k == 0 ? nullptr : &x[k - 1], x[k]);
        if (k + 1 < n) g_before *= model.likelihood(k + 1, x[k]);
      }
      const double joint_pred = prior * g_before;
      const double joint = joint_pred * model.likelihood(n, x[n - 1]);
      pred[static_cast<std::size_t>(x[n - 1])] += joint_pred;
      pred_total += joint_pred;
      filt[static_cast<std::size_t>(x[n - 1])] += joint;
      lik += joint;
    }
    for (double& v : filt) v /= lik;
    for (double& v : pred) v /= pred_total;
    q.filter.push_back(std::move(filt));
    q.predictor.push_back(std::move(pred));
    q.likelihood.push_back(lik);
  }
  return q;
}

struct BinaryQuantities {
  std::vector<double> filter1;     // pi_1
  std::vector<double> predictor2;  // tilde pi_2
  std::vector<double> filter2;     // pi_2
  double likelihood1 = 0.0;
  double likelihood2 = 0.0;
};

inline BinaryQuantities exact_binary_quantities(double alpha) {
  const auto q = exact_quantities(binary_toy_model(alpha));
  return {q.filter[0], q.predictor[1], q.filter[1], q.likelihood[0], q.likelihood[1]};
}

/// Ingredients of a general auxiliary flow: look-ahead functions g~_n and
/// proposal kernels M'_n (prev == nullptr for M'_1).
template <class State>
struct AuxiliarySpec {
  std::function<double(std::size_t n, const State& x)> log_lookahead;
  std::function<State(std::size_t n, const State* prev, Rng& rng)> sample_proposal;
  std::function<double(std::size_t n, const State* prev, const State& x)> log_proposal_density;
};

/// Feynman-Kac flow induced by a state-space model:
///  bootstrap:      M_n = L_n, G_n = g_n;
///  fully adapted:  M_n the twisted kernel, G_n = L_{n+1}(g_{n+1}), G_T = 1;
///  auxiliary:      M_n = M'_n, G_n = dL_n/dM'_n g_n g~_n / g~_{n-1}, g~_T = 1.
template <class State>
class SsmFlow final : public StateSpaceFlow<State> {
 public:
  SsmFlow(std::shared_ptr<const StateSpaceModel<State>> model, FlowKind kind,
          AuxiliarySpec<State> aux = {})
      : model_(std::move(model)), kind_(kind), aux_(std::move(aux)) {
    if (!model_) throw ConfigError("flow needs a model");
    if (kind_ == FlowKind::fully_adapted && !model_->fully_adaptable()) {
      throw ConfigError("fully adapted flow needs closed-form predictive likelihoods");
    }
    if (kind_ == FlowKind::auxiliary &&
        (!aux_.log_lookahead || !aux_.sample_proposal || !aux_.log_proposal_density)) {
      throw ConfigError("auxiliary flow needs look-ahead functions and a proposal density");
    }
  }

  const StateSpaceModel<State>& model() const { return *model_; }
  FlowKind kind() const override { return kind_; }
  std::optional<std::size_t> horizon() const override { return model_->horizon(); }
  std::optional<std::size_t> support_width() const override {
    return kind_ == FlowKind::auxiliary ? 1 : 0;
  }
  bool has_densities() const override { return true; }
  std::optional<std::vector<State>> finite_support() const override {
    return model_->finite_support();
  }

  State sample_mutation(std::size_t n, const PathView<State>& parent, Rng& rng) const override {
    const State* prev = n == 1 ? nullptr : &parent.back();
    switch (kind_) {
      case FlowKind::bootstrap:
        return model_->sample_transition(n, prev, rng);
      case FlowKind::fully_adapted:
        return model_->sample_adapted(n, prev, rng);
      case FlowKind::auxiliary:
        return aux_.sample_proposal(n, prev, rng);
    }
    throw ConfigError("unknown flow kind");
  }

  double log_mutation_density(std::size_t n, const PathView<State>& parent,
                              const State& x) const override {
    const State* prev = n == 1 ? nullptr : &parent.back();
    switch (kind_) {
      case FlowKind::bootstrap:
        return model_->log_transition_density(n, prev, x);
      case FlowKind::fully_adapted:
        return model_->log_adapted_density(n, prev, x);
      case FlowKind::auxiliary:
        return aux_.log_proposal_density(n, prev, x);
    }
    throw ConfigError("unknown flow kind");
  }

  double log_potential(std::size_t n, const PathView<State>& path) const override {
    const State& x = path.back();
    switch (kind_) {
      case FlowKind::bootstrap:
        return model_->log_likelihood(n, x);
      case FlowKind::fully_adapted:
        return n >= model_->horizon() ? 0.0 : model_->log_predictive_likelihood(n + 1, &x);
      case FlowKind::auxiliary: {
        const State* prev = n == 1 ? nullptr : &path.back(1);
        double lg = model_->log_transition_density(n, prev, x) -
                    aux_.log_proposal_density(n, prev, x) + model_->log_likelihood(n, x) +
                    lookahead(n, x);
        if (n > 1) lg -= lookahead(n - 1, *prev);
        return lg;
      }
    }
    throw ConfigError("unknown flow kind");
  }

  /// For the fully adapted flow G_{n-1} m_n collapses to L_n(x_{n-1}, x) g_n(x)
  /// (up to the constant L_1 at n = 1).
  double log_weighted_mutation(std::size_t n, const PathView<State>& parent,
                               const State& x) const override {
    if (kind_ != FlowKind::fully_adapted || n == 1) {
      return StateSpaceFlow<State>::log_weighted_mutation(n, parent, x);
    }
    const State* prev = &parent.back();
    return model_->log_transition_density(n, prev, x) + model_->log_likelihood(n, x);
  }

  double log_filter_weight(std::size_t n, const PathView<State>& path) const override {
    switch (kind_) {
      case FlowKind::bootstrap:
        return model_->log_likelihood(n, path.back());
      case FlowKind::fully_adapted:
        return 0.0;
      case FlowKind::auxiliary:
        return log_potential(n, path) - lookahead(n, path.back());
    }
    throw ConfigError("unknown flow kind");
  }

  double log_likelihood_offset() const override {
    return kind_ == FlowKind::fully_adapted ? model_->log_predictive_likelihood(1, nullptr) : 0.0;
  }

  std::optional<std::vector<std::pair<State, double>>> transition_law(
      std::size_t n, const State* prev) const override {
    auto support = model_->finite_support();
    if (!support) return std::nullopt;
    std::vector<std::pair<State, double>> law;
    for (const auto& x : *support) {
      const double p = std::exp(model_->log_transition_density(n, prev, x));
      if (p > 0.0) law.emplace_back(x, p);
    }
    return law;
  }

  State sample_transition(std::size_t n, const State* prev, Rng& rng) const override {
    return model_->sample_transition(n, prev, rng);
  }

 private:
  double lookahead(std::size_t n, const State& x) const {
    return n >= model_->horizon() ? 0.0 : aux_.log_lookahead(n, x);
  }

  std::shared_ptr<const StateSpaceModel<State>> model_;
  FlowKind kind_;
  AuxiliarySpec<State> aux_;
};

template <class State>
std::shared_ptr<const SsmFlow<State>> make_bootstrap_flow(
    std::shared_ptr<const StateSpaceModel<State>> model) {
  return std::make_shared<const SsmFlow<State>>(std::move(model), FlowKind::bootstrap);
}

template <class State>
std::shared_ptr<const SsmFlow<State>> make_fully_adapted_flow(
    std::shared_ptr<const StateSpaceModel<State>> model) {
  return std::make_shared<const SsmFlow<State>>(std::move(model), FlowKind::fully_adapted);
}

template <class State>
std::shared_ptr<const SsmFlow<State>> make_auxiliary_flow(
    std::shared_ptr<const StateSpaceModel<State>> model, AuxiliarySpec<State> aux) {
  return std::make_shared<const SsmFlow<State>>(std::move(model), FlowKind::auxiliary,
                                                std::move(aux));
}

/// Auxiliary ingredients g~ = 1, M' = L (the bootstrap special case).
template <class State>
AuxiliarySpec<State> bootstrap_auxiliary(std::shared_ptr<const StateSpaceModel<State>> model) {
  return {[](std::size_t, const State&) { return 0.0; },
          [model](std::size_t n, const State* prev, Rng& rng) {
            return model->sample_transition(n, prev, rng);
          },
          [model](std::size_t n, const State* prev, const State& x) {
            return model->log_transition_density(n, prev, x);
          }};
}

/// Auxiliary ingredients g~_n = L_{n+1}(g_{n+1}), M' = twisted kernel (the
/// fully adapted special case).
template <class State>
AuxiliarySpec<State> adapted_auxiliary(std::shared_ptr<const StateSpaceModel<State>> model) {
  if (!model->fully_adaptable()) throw ConfigError("model is not fully adaptable");
  return {[model](std::size_t n, const State& x) {
            return model->log_predictive_likelihood(n + 1, &x);
          },
          [model](std::size_t n, const State* prev, Rng& rng) {
            return model->sample_adapted(n, prev, rng);
          },
          [model](std::size_t n, const State* prev, const State& x) {
            return model->log_adapted_density(n, prev, x);
          }};
}

/// Proposal M'_n = L_n, as used by burn-in initialisation.
template <class State>
class TransitionProposal final : public Proposal<State> {
 public:
  explicit TransitionProposal(std::shared_ptr<const StateSpaceModel<State>> model)
      : model_(std::move(model)) {}
  State sample(std::size_t n, const PathView<State>& parent, Rng& rng) const override {
    return model_->sample_transition(n, n == 1 ? nullptr : &parent.back(), rng);
  }
  double log_density(std::size_t n, const PathView<State>& parent, const State& x) const override {
    return model_->log_transition_density(n, n == 1 ? nullptr : &parent.back(), x);
  }

 private:
  std::shared_ptr<const StateSpaceModel<State>> model_;
};

}  // namespace seqmc
