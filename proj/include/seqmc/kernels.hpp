#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqmc/errors.hpp"
#include "seqmc/flow.hpp"
#include "seqmc/path.hpp"
#include "seqmc/random.hpp"

namespace seqmc {

/// The distribution Phi_n(mu) targeted at step n: pick an ancestor j with
/// probability proportional to mu_j G_{n-1}(path^j), then extend it by M_n.
///
/// mu is either the empirical measure of generation n-1 (uniform masses) or
/// an explicit probability vector over it, as used by the exact analysis.
template <class State>
class StepTarget {
 public:
  StepTarget(const FeynmanKacFlow<State>& flow, std::size_t n,
             const Genealogy<State>* ancestry = nullptr, std::vector<double> ancestor_mass = {})
      : flow_(&flow), n_(n), ancestry_(ancestry), mass_(std::move(ancestor_mass)) {
    check_time_index(flow, n);
    if (n == 1) return;
    if (ancestry_ == nullptr) throw ConfigError("step target at n > 1 needs the previous cloud");
    const auto& gen = ancestry_->generation(n - 1);
    if (gen.size() == 0) throw ConfigError("empty ancestor cloud");
    if (gen.log_potential.size() != gen.size()) {
      throw ConfigError("ancestor potentials not evaluated");
    }
    if (!mass_.empty() && mass_.size() != gen.size()) {
      throw ConfigError("ancestor mass vector has the wrong size");
    }
    std::vector<double> lw(gen.size());
    for (std::size_t j = 0; j < gen.size(); ++j) {
      lw[j] = gen.log_potential[j] + (mass_.empty() ? 0.0 : std::log(mass_[j]));
    }
    selector_ = DiscreteSampler(lw);
    if (!mass_.empty()) {
      std::vector<double> lm(mass_.size());
      for (std::size_t j = 0; j < mass_.size(); ++j) lm[j] = std::log(mass_[j]);
      mass_selector_ = DiscreteSampler(lm);
    }
  }

  const FeynmanKacFlow<State>& flow() const { return *flow_; }
  std::size_t time() const { return n_; }

  std::size_t ancestor_count() const {
    return n_ == 1 ? 1 : ancestry_->generation(n_ - 1).size();
  }

  PathView<State> ancestor(std::size_t j) const {
    if (n_ == 1) return {};
    return ancestry_->path(n_ - 1, j);
  }

  double ancestor_log_potential(std::size_t j) const {
    return ancestry_->generation(n_ - 1).log_potential[j];
  }

  double ancestor_mass(std::size_t j) const {
    if (n_ == 1) return 1.0;
    return mass_.empty() ? 1.0 / static_cast<double>(ancestor_count()) : mass_[j];
  }

  /// Probability that the step target selects ancestor j.
  double selection_probability(std::size_t j) const {
    return n_ == 1 ? 1.0 : selector_.probability(j);
  }

  std::size_t sample_ancestor(Rng& rng) const { return n_ == 1 ? 0 : selector_(rng); }

  /// Ancestor index drawn from mu itself (no potential weighting).
  std::size_t sample_from_mass(Rng& rng) const {
    if (n_ == 1) return 0;
    if (mass_.empty()) {
      return std::uniform_int_distribution<std::size_t>(0, ancestor_count() - 1)(rng);
    }
    return mass_selector_(rng);
  }

  /// One exact draw from Phi_n(mu).
  PathParticle<State> sample(Rng& rng) const {
    if (n_ == 1) return {0, sample_mutation(*flow_, 1, PathView<State>{}, rng)};
    const std::size_t j = selector_(rng);
    return {j, sample_mutation(*flow_, n_, ancestor(j), rng)};
  }

  /// The path of length n represented by a chain state.
  PathView<State> view(const PathParticle<State>& p) const {
    if (n_ == 1) return PathView<State>::from_span(std::span<const State>(&p.state, 1));
    return ancestry_->extension(n_ - 1, p.ancestor, p.state);
  }

  // Finite mode. The product space (ancestor j, x) is indexed j * |S| + index(x).

  std::size_t space_size(std::span<const State> support) const {
    return ancestor_count() * support.size();
  }

  PathParticle<State> particle_at(std::size_t idx, std::span<const State> support) const {
    return {idx / support.size(), support[idx % support.size()]};
  }

  /// Exact Phi_n(mu) as a probability vector over the product space.
  Eigen::VectorXd probabilities(std::span<const State> support) const {
    const std::size_t s = support.size();
    Eigen::VectorXd v(static_cast<Eigen::Index>(space_size(support)));
    for (std::size_t j = 0; j < ancestor_count(); ++j) {
      const auto anc = ancestor(j);
      const double sel = selection_probability(j);
      for (std::size_t k = 0; k < s; ++k) {
        v(static_cast<Eigen::Index>(j * s + k)) =
            sel * std::exp(flow_->log_mutation_density(n_, anc, support[k]));
      }
    }
    return v;
  }

 private:
  const FeynmanKacFlow<State>* flow_;
  std::size_t n_;
  const Genealogy<State>* ancestry_;
  std::vector<double> mass_;
  DiscreteSampler selector_;
  DiscreteSampler mass_selector_;
};

/// Free-function form of StepTarget::sample.
template <class State>
PathParticle<State> sample_step_target(const StepTarget<State>& target, Rng& rng) {
  return target.sample(rng);
}

/// Proposal kernel R_n(path_{n-1}, dx_n); R_1 when n == 1 (parent empty).
template <class State>
class Proposal {
 public:
  virtual ~Proposal() = default;
  virtual State sample(std::size_t n, const PathView<State>& parent, Rng& rng) const = 0;
  virtual double log_density(std::size_t n, const PathView<State>& parent,
                             const State& x) const = 0;
};

/// R_n = M_n: proposes from the flow's own mutation kernel.
template <class State>
class MutationProposal final : public Proposal<State> {
 public:
  explicit MutationProposal(std::shared_ptr<const FeynmanKacFlow<State>> flow)
      : flow_(std::move(flow)) {}
  State sample(std::size_t n, const PathView<State>& parent, Rng& rng) const override {
    return flow_->sample_mutation(n, parent, rng);
  }
  double log_density(std::size_t n, const PathView<State>& parent,
                     const State& x) const override {
    return flow_->log_mutation_density(n, parent, x);
  }

 private:
  std::shared_ptr<const FeynmanKacFlow<State>> flow_;
};

/// Random-walk proposal on the final coordinate.
template <class State>
class RandomWalk {
 public:
  virtual ~RandomWalk() = default;
  virtual State sample(const State& from, Rng& rng) const = 0;
  virtual double log_density(const State& from, const State& to) const = 0;
  virtual bool symmetric() const = 0;
};

/// Isotropic Gaussian walk on R^d with per-coordinate standard deviation
/// `scale`.
class GaussianRandomWalk final : public RandomWalk<std::vector<double>> {
 public:
  explicit GaussianRandomWalk(double scale) : scale_(scale) {
    if (!(scale > 0.0)) throw ConfigError("random-walk scale must be positive");
  }
  double scale() const { return scale_; }

  std::vector<double> sample(const std::vector<double>& from, Rng& rng) const override {
    std::vector<double> to(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) to[i] = from[i] + scale_ * standard_normal(rng);
    return to;
  }
  double log_density(const std::vector<double>& from,
                     const std::vector<double>& to) const override {
    double acc = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
      const double z = (to[i] - from[i]) / scale_;
      acc += -0.5 * z * z - std::log(scale_) - 0.5 * std::log(2.0 * 3.14159265358979323846);
    }
    return acc;
  }
  bool symmetric() const override { return true; }

 private:
  double scale_;
};

/// Symmetric walk on {0, ..., states-1}: a step of size k (1 <= k <= K) is
/// chosen with weight w_k and a fair sign; proposals leaving the range
/// become "stay put".
class DiscreteRandomWalk final : public RandomWalk<int> {
 public:
  DiscreteRandomWalk(int states, std::vector<double> step_weights)
      : states_(states), weights_(std::move(step_weights)) {
    if (states < 1 || weights_.empty()) throw ConfigError("invalid discrete random walk");
    double total = 0.0;
    for (double w : weights_) {
      if (w < 0.0) throw ConfigError("negative random-walk step weight");
      total += w;
    }
    for (double& w : weights_) w /= total;
  }

  int sample(const int& from, Rng& rng) const override {
    double u = uniform01(rng);
    std::size_t k = 0;
    while (k + 1 < weights_.size() && u >= weights_[k]) u -= weights_[k++];
    const int step = static_cast<int>(k + 1) * (uniform01(rng) < 0.5 ? -1 : 1);
    const int to = from + step;
    return (to < 0 || to >= states_) ? from : to;
  }

  double log_density(const int& from, const int& to) const override {
    return std::log(probability(from, to));
  }

  bool symmetric() const override { return true; }

  double probability(int from, int to) const {
    const int k = std::abs(to - from);
    if (k == 0) {
      double stay = 0.0;
      for (std::size_t s = 0; s < weights_.size(); ++s) {
        const int step = static_cast<int>(s + 1);
        if (from - step < 0) stay += 0.5 * weights_[s];
        if (from + step >= states_) stay += 0.5 * weights_[s];
      }
      return stay;
    }
    if (k > static_cast<int>(weights_.size()) || to < 0 || to >= states_) return 0.0;
    return 0.5 * weights_[static_cast<std::size_t>(k - 1)];
  }

 private:
  int states_;
  std::vector<double> weights_;
};

/// The function F_{n-1} used to propose ancestors in the MH kernels.
template <class State>
class AncestorWeight {
 public:
  using LogFn = std::function<double(std::size_t n, const PathView<State>& path)>;
  enum class Kind { uniform, potential, custom };

  static AncestorWeight uniform() { return AncestorWeight(Kind::uniform, {}); }
  static AncestorWeight potential() { return AncestorWeight(Kind::potential, {}); }
  /// log F_n given as a function of (n, path_n).
  static AncestorWeight custom(LogFn log_f) { return AncestorWeight(Kind::custom, std::move(log_f)); }

  Kind kind() const { return kind_; }

  /// log F_{n-1} for every ancestor of the target.
  std::vector<double> evaluate(const StepTarget<State>& target) const {
    const std::size_t count = target.ancestor_count();
    std::vector<double> out(count, 0.0);
    if (target.time() == 1) return out;
    for (std::size_t j = 0; j < count; ++j) {
      switch (kind_) {
        case Kind::uniform:
          break;
        case Kind::potential:
          out[j] = target.ancestor_log_potential(j);
          break;
        case Kind::custom:
          out[j] = log_f_(target.time() - 1, target.ancestor(j));
          break;
      }
      if (std::isinf(out[j]) && out[j] < 0.0 && target.ancestor_mass(j) > 0.0) {
        throw ConfigError("ancestor weight F must be positive wherever G is");
      }
    }
    return out;
  }

 private:
  AncestorWeight(Kind kind, LogFn f) : kind_(kind), log_f_(std::move(f)) {}
  Kind kind_;
  LogFn log_f_;
};

/// A kernel K_n^mu bound to its step target.
template <class State>
class BoundKernel {
 public:
  virtual ~BoundKernel() = default;
  virtual PathParticle<State> step(const PathParticle<State>& current, Rng& rng) = 0;

  /// Row-stochastic matrix over the finite product space (see StepTarget).
  virtual Eigen::MatrixXd transition_matrix(std::span<const State> support) const = 0;

  std::uint64_t proposals() const { return proposals_; }
  std::uint64_t acceptances() const { return accepted_; }

 protected:
  std::uint64_t proposals_ = 0;
  std::uint64_t accepted_ = 0;
};

/// A mu-indexed family of MCMC kernels, each invariant for its step target.
template <class State>
class MarkovKernel {
 public:
  virtual ~MarkovKernel() = default;
  virtual std::unique_ptr<BoundKernel<State>> bind(const StepTarget<State>& target) const = 0;
  /// Surfaces kernel/flow incompatibilities before any sampling.
  virtual void validate(const FeynmanKacFlow<State>& /*flow*/) const {}
  virtual std::string name() const = 0;
};

/// K = epsilon * identity + (1 - epsilon) * Phi_n(mu). epsilon = 0 is the
/// perfectly mixing kernel of a standard particle filter.
template <class State>
class LazyMixtureKernel final : public MarkovKernel<State> {
 public:
  explicit LazyMixtureKernel(double epsilon) : epsilon_(epsilon) {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("lazy mixture needs epsilon in [0,1)");
  }
  double epsilon() const { return epsilon_; }
  std::string name() const override {
    return epsilon_ == 0.0 ? "perfect" : "lazy(" + std::to_string(epsilon_) + ")";
  }

  std::unique_ptr<BoundKernel<State>> bind(const StepTarget<State>& target) const override {
    return std::make_unique<Bound>(target, epsilon_);
  }

 private:
  class Bound final : public BoundKernel<State> {
   public:
    Bound(const StepTarget<State>& target, double epsilon) : target_(target), epsilon_(epsilon) {}

    PathParticle<State> step(const PathParticle<State>& current, Rng& rng) override {
      ++this->proposals_;
      if (epsilon_ > 0.0 && uniform01(rng) < epsilon_) return current;
      ++this->accepted_;
      return target_.sample(rng);
    }

    Eigen::MatrixXd transition_matrix(std::span<const State> support) const override {
      const Eigen::VectorXd eta = target_.probabilities(support);
      const auto size = eta.size();
      Eigen::MatrixXd k = (1.0 - epsilon_) * Eigen::VectorXd::Ones(size) * eta.transpose();
      k.diagonal().array() += epsilon_;
      return k;
    }

   private:
    const StepTarget<State>& target_;
    double epsilon_;
  };

  double epsilon_;
};

template <class State>
class PerfectMixingKernel final : public MarkovKernel<State> {
 public:
  std::string name() const override { return "perfect"; }
  std::unique_ptr<BoundKernel<State>> bind(const StepTarget<State>& target) const override {
    return LazyMixtureKernel<State>(0.0).bind(target);
  }
};

namespace detail {

inline double mh_acceptance(double log_w_from, double log_w_to) {
  if (log_w_from == -std::numeric_limits<double>::infinity()) return 1.0;
  if (std::isnan(log_w_to)) return 0.0;
  const double r = log_w_to - log_w_from;
  return r >= 0.0 ? 1.0 : std::exp(r);
}

/// Shared machinery of the two MH kernels: ancestor proposals from F_{n-1}
/// and the unnormalised target G_{n-1} m_n / F_{n-1}.
template <class State>
class MhBound : public BoundKernel<State> {
 public:
  MhBound(const StepTarget<State>& target, const AncestorWeight<State>& weight)
      : target_(target), log_f_(weight.evaluate(target)) {
    if (target.time() > 1) {
      std::vector<double> lw(log_f_.size());
      for (std::size_t j = 0; j < lw.size(); ++j) {
        lw[j] = log_f_[j] + std::log(target.ancestor_mass(j));
      }
      f_selector_ = DiscreteSampler(lw);
    }
  }

 protected:
  std::size_t time() const { return target_.time(); }

  double log_target(const PathParticle<State>& p) const {
    const auto anc = target_.ancestor(p.ancestor);
    const double lw = target_.flow().log_weighted_mutation(time(), anc, p.state);
    return time() == 1 ? lw : lw - log_f_[p.ancestor];
  }

  std::size_t propose_ancestor(Rng& rng) const { return time() == 1 ? 0 : f_selector_(rng); }

  double ancestor_proposal_probability(std::size_t j) const {
    return time() == 1 ? 1.0 : f_selector_.probability(j);
  }

  PathParticle<State> accept_or_reject(const PathParticle<State>& current,
                                       PathParticle<State> proposal, double log_w_current,
                                       double log_w_proposal, Rng& rng) {
    if (log_w_current == -std::numeric_limits<double>::infinity() || std::isnan(log_w_current)) {
      throw NumericalError("MH chain sits on a state with zero target density");
    }
    ++this->proposals_;
    const double a = mh_acceptance(log_w_current, log_w_proposal);
    if (a >= 1.0 || uniform01(rng) < a) {
      ++this->accepted_;
      return proposal;
    }
    return current;
  }

  template <class ProposalProbability, class LogWeight>
  Eigen::MatrixXd mh_matrix(std::span<const State> support, ProposalProbability&& q,
                            LogWeight&& log_w) const {
    const std::size_t size = target_.space_size(support);
    std::vector<PathParticle<State>> points(size);
    std::vector<double> lw(size);
    for (std::size_t i = 0; i < size; ++i) {
      points[i] = target_.particle_at(i, support);
      lw[i] = log_w(points[i]);
    }
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size),
                                              static_cast<Eigen::Index>(size));
    for (std::size_t a = 0; a < size; ++a) {
      double off = 0.0;
      for (std::size_t b = 0; b < size; ++b) {
        if (a == b) continue;
        const double qab = q(points[a], points[b]);
        if (qab <= 0.0) continue;
        const double v = qab * mh_acceptance(lw[a], lw[b]);
        k(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
        off += v;
      }
      k(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = 1.0 - off;
    }
    return k;
  }

  const StepTarget<State>& target_;
  std::vector<double> log_f_;
  DiscreteSampler f_selector_;
};

}  // namespace detail

/// Independent MH: propose ancestor j ~ F_{n-1}, x ~ R_n(path^j, .) and
/// accept with 1 ^ (G/F)(new) dM/dR(new) / [(G/F)(old) dM/dR(old)].
template <class State>
class IndependentMhKernel final : public MarkovKernel<State> {
 public:
  IndependentMhKernel(AncestorWeight<State> weight, std::shared_ptr<const Proposal<State>> proposal)
      : weight_(std::move(weight)), proposal_(std::move(proposal)) {
    if (!proposal_) throw ConfigError("independent MH needs a proposal kernel");
  }

  std::string name() const override { return "imh"; }

  void validate(const FeynmanKacFlow<State>& flow) const override {
    if (!flow.has_densities()) {
      throw ConfigError("independent MH needs mutation densities from the flow");
    }
  }

  std::unique_ptr<BoundKernel<State>> bind(const StepTarget<State>& target) const override {
    validate(target.flow());
    return std::make_unique<Bound>(target, weight_, *proposal_);
  }

 private:
  class Bound final : public detail::MhBound<State> {
   public:
    Bound(const StepTarget<State>& target, const AncestorWeight<State>& weight,
          const Proposal<State>& proposal)
        : detail::MhBound<State>(target, weight), proposal_(proposal) {}

    PathParticle<State> step(const PathParticle<State>& current, Rng& rng) override {
      const std::size_t n = this->time();
      PathParticle<State> y;
      y.ancestor = this->propose_ancestor(rng);
      y.state = proposal_.sample(n, this->target_.ancestor(y.ancestor), rng);
      return this->accept_or_reject(current, y, log_w(current), log_w(y), rng);
    }

    Eigen::MatrixXd transition_matrix(std::span<const State> support) const override {
      const std::size_t n = this->time();
      return this->mh_matrix(
          support,
          [&](const PathParticle<State>&, const PathParticle<State>& to) {
            return this->ancestor_proposal_probability(to.ancestor) *
                   std::exp(proposal_.log_density(n, this->target_.ancestor(to.ancestor), to.state));
          },
          [&](const PathParticle<State>& p) { return log_w(p); });
    }

   private:
    double log_w(const PathParticle<State>& p) const {
      const double lr = proposal_.log_density(this->time(), this->target_.ancestor(p.ancestor), p.state);
      return this->log_target(p) - lr;
    }

    const Proposal<State>& proposal_;
  };

  AncestorWeight<State> weight_;
  std::shared_ptr<const Proposal<State>> proposal_;
};

/// MH on (ancestor, x_n): propose ancestor j' ~ F_{n-1} and x' ~ R(x_n, .)
/// with R a symmetric random walk; accept with
/// 1 ^ G(j') m(j', x') F(j) / [G(j) m(j, x) F(j')].
template <class State>
class AncestorRandomWalkKernel final : public MarkovKernel<State> {
 public:
  AncestorRandomWalkKernel(AncestorWeight<State> weight, std::shared_ptr<const RandomWalk<State>> walk)
      : weight_(std::move(weight)), walk_(std::move(walk)) {
    if (!walk_) throw ConfigError("random-walk kernel needs a walk");
    if (!walk_->symmetric()) {
      throw ConfigError("random-walk MH acceptance assumes a symmetric proposal");
    }
  }

  std::string name() const override { return "rw"; }

  void validate(const FeynmanKacFlow<State>& flow) const override {
    if (!flow.has_densities()) {
      throw ConfigError("random-walk MH needs mutation densities from the flow");
    }
  }

  std::unique_ptr<BoundKernel<State>> bind(const StepTarget<State>& target) const override {
    validate(target.flow());
    return std::make_unique<Bound>(target, weight_, *walk_);
  }

 private:
  class Bound final : public detail::MhBound<State> {
   public:
    Bound(const StepTarget<State>& target, const AncestorWeight<State>& weight,
          const RandomWalk<State>& walk)
        : detail::MhBound<State>(target, weight), walk_(walk) {}

    PathParticle<State> step(const PathParticle<State>& current, Rng& rng) override {
      PathParticle<State> y;
      y.ancestor = this->propose_ancestor(rng);
      y.state = walk_.sample(current.state, rng);
      return this->accept_or_reject(current, y, this->log_target(current), this->log_target(y), rng);
    }

    Eigen::MatrixXd transition_matrix(std::span<const State> support) const override {
      return this->mh_matrix(
          support,
          [&](const PathParticle<State>& from, const PathParticle<State>& to) {
            return this->ancestor_proposal_probability(to.ancestor) *
                   std::exp(walk_.log_density(from.state, to.state));
          },
          [&](const PathParticle<State>& p) { return this->log_target(p); });
    }

   private:
    const RandomWalk<State>& walk_;
  };

  AncestorWeight<State> weight_;
  std::shared_ptr<const RandomWalk<State>> walk_;
};

/// How the first particle of each step's chain is drawn.
template <class State>
struct InitPolicy {
  enum class Kind { stationary, burnin };
  Kind kind = Kind::stationary;
  std::shared_ptr<const Proposal<State>> approximation;  // M'_n for burn-in
  std::size_t burnin_steps = 0;

  static InitPolicy stationary() { return {}; }
  static InitPolicy burnin(std::shared_ptr<const Proposal<State>> approx, std::size_t steps) {
    return {Kind::burnin, std::move(approx), steps};
  }

  void validate() const {
    if (kind != Kind::burnin) return;
    if (burnin_steps < 1) throw ConfigError("burn-in needs at least one kernel iteration");
    if (!approximation) throw ConfigError("burn-in needs an approximate mutation kernel");
  }
};

/// kappa_n^mu: an exact draw from Phi_n(mu), or a draw from mu (x) M'_n moved
/// by `burnin_steps` kernel iterations whose intermediate states are dropped.
/// At n = 1 the target is M_1 itself and is always sampled exactly.
template <class State>
PathParticle<State> init_chain(const StepTarget<State>& target, BoundKernel<State>& kernel,
                               const InitPolicy<State>& policy, Rng& rng) {
  policy.validate();
  if (policy.kind == InitPolicy<State>::Kind::stationary || target.time() == 1) {
    return target.sample(rng);
  }
  const std::size_t n = target.time();
  PathParticle<State> p;
  p.ancestor = target.sample_from_mass(rng);
  p.state = policy.approximation->sample(n, target.ancestor(p.ancestor), rng);
  for (std::size_t k = 0; k < policy.burnin_steps; ++k) p = kernel.step(p, rng);
  return p;
}

/// Exact law of init_chain's output over the finite product space.
template <class State>
Eigen::VectorXd init_distribution(const StepTarget<State>& target, const BoundKernel<State>& kernel,
                                  const InitPolicy<State>& policy, const std::vector<State>& support) {
  policy.validate();
  if (policy.kind == InitPolicy<State>::Kind::stationary || target.time() == 1) {
    return target.probabilities(support);
  }
  const std::size_t n = target.time();
  const std::size_t s = support.size();
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(target.space_size(support)));
  for (std::size_t j = 0; j < target.ancestor_count(); ++j) {
    const auto anc = target.ancestor(j);
    for (std::size_t k = 0; k < s; ++k) {
      v(static_cast<Eigen::Index>(j * s + k)) =
          target.ancestor_mass(j) * std::exp(policy.approximation->log_density(n, anc, support[k]));
    }
  }
  const Eigen::MatrixXd k = kernel.transition_matrix(support);
  for (std::size_t i = 0; i < policy.burnin_steps; ++i) v = v * k;
  return v.transpose();
}

}  // namespace seqmc
