#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "oracles.hpp"
#include "seqmc/analysis.hpp"
#include "seqmc/engine.hpp"
#include "seqmc/kernels.hpp"
#include "seqmc/ssm.hpp"

using namespace seqmc;

namespace {

using KernelPtr = std::shared_ptr<const MarkovKernel<int>>;

std::shared_ptr<const FiniteSsm> binary_model(double alpha) {
  return std::make_shared<const FiniteSsm>(binary_toy_model(alpha));
}

std::shared_ptr<const SsmFlow<int>> flow_of(std::shared_ptr<const FiniteSsm> model, FlowKind kind) {
  return std::make_shared<const SsmFlow<int>>(model, kind);
}

/// Random probability vector with strictly positive entries.
std::vector<double> random_mass(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> m(size);
  double total = 0.0;
  for (auto& v : m) {
    v = 0.05 + uniform01(rng);
    total += v;
  }
  for (auto& v : m) v /= total;
  return m;
}

std::vector<KernelPtr> all_kernels(std::shared_ptr<const StateSpaceModel<int>> model, int states) {
  auto walk = std::make_shared<DiscreteRandomWalk>(states, std::vector<double>{0.6, 0.4});
  return {
      std::make_shared<PerfectMixingKernel<int>>(),
      std::make_shared<LazyMixtureKernel<int>>(0.3),
      std::make_shared<IndependentMhKernel<int>>(AncestorWeight<int>::uniform(),
                                                 std::make_shared<TransitionProposal<int>>(model)),
      std::make_shared<IndependentMhKernel<int>>(AncestorWeight<int>::potential(),
                                                 std::make_shared<TransitionProposal<int>>(model)),
      std::make_shared<AncestorRandomWalkKernel<int>>(AncestorWeight<int>::potential(), walk),
      std::make_shared<AncestorRandomWalkKernel<int>>(AncestorWeight<int>::uniform(), walk),
  };
}

class AsymmetricWalk final : public RandomWalk<int> {
 public:
  int sample(const int& from, Rng&) const override { return from + 1; }
  double log_density(const int&, const int&) const override { return 0.0; }
  bool symmetric() const override { return false; }
};

}  // namespace

TEST(StepTarget, TimeOneDrawsFromInitialLaw) {
  auto flow = flow_of(binary_model(0.9), FlowKind::bootstrap);
  StepTarget<int> target(*flow, 1);
  Rng rng(1);
  int zeros = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto p = sample_step_target(target, rng);
    EXPECT_EQ(p.ancestor, 0u);
    zeros += p.state == 0;
  }
  EXPECT_NEAR(zeros / 20000.0, 0.5, 4.0 * std::sqrt(0.25 / 20000));
}

TEST(StepTarget, BinaryAncestorSelection) {
  auto flow = flow_of(binary_model(0.9), FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  StepTarget<int> target(*flow, 2, &ff.paths, {0.5, 0.5});
  EXPECT_NEAR(target.selection_probability(0), 0.99 / (0.99 + 0.01), 1e-15);
  Rng rng(2);
  int zero = 0;
  for (int i = 0; i < 20000; ++i) zero += sample_step_target(target, rng).ancestor == 0;
  EXPECT_NEAR(zero / 20000.0, 0.99, 4.0 * std::sqrt(0.99 * 0.01 / 20000));
}

TEST(StepTarget, DegenerateWeightsPickDominantAncestor) {
  Genealogy<double> g;
  g.push({{0.0, 1.0, 2.0}, {}, {-800.0, 0.0, -750.0}});
  testing_models::DiracFlow flow(0.0, 0.0);
  StepTarget<double> target(flow, 2, &g);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_step_target(target, rng).ancestor, 1u);
}

TEST(StepTarget, RejectsVanishingWeights) {
  Genealogy<double> g;
  const double ninf = -std::numeric_limits<double>::infinity();
  g.push({{0.0, 1.0}, {}, {ninf, ninf}});
  testing_models::DiracFlow flow(0.0, 0.0);
  EXPECT_THROW(StepTarget<double>(flow, 2, &g), ModelError);
}

TEST(Kernels, ExactInvarianceOnBinaryFlows) {
  for (double alpha : {0.05, 0.5, 0.9}) {
    auto model = binary_model(alpha);
    for (auto kind : {FlowKind::bootstrap, FlowKind::fully_adapted}) {
      auto flow = flow_of(model, kind);
      const auto ff = enumerate_flow<int>(flow, 2);
      for (const auto& kernel : all_kernels(model, 2)) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
          StepTarget<int> target(*flow, 2, &ff.paths, random_mass(2, seed));
          const auto bound = kernel->bind(target);
          const KernelMatrix km{bound->transition_matrix(ff.support), target.probabilities(ff.support)};
          EXPECT_LE(stationarity_residual(km), 1e-12) << kernel->name();
          EXPECT_LE((km.transition.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
        }
        const auto km1 = kernel_matrix(ff, *kernel, 1);
        EXPECT_LE(stationarity_residual(km1), 1e-12) << kernel->name();
      }
    }
  }
}

TEST(Kernels, ExactInvarianceOnDiscretisedLinearGaussian) {
  auto model = std::make_shared<const FiniteSsm>(discretised_linear_gaussian({0.4, -1.1}));
  for (auto kind : {FlowKind::bootstrap, FlowKind::fully_adapted}) {
    auto flow = flow_of(model, kind);
    // a small cloud of 5 ancestors with random mass
    Generation<int> cloud{{3, 12, 20, 27, 38}, {}, {}};
    for (int x : cloud.states) cloud.log_potential.push_back(flow->log_potential(1, PathView<int>::from_span(std::span<const int>(&x, 1))));
    Genealogy<int> small;
    small.push(cloud);
    const auto support = *flow->finite_support();
    for (const auto& kernel : all_kernels(model, 41)) {
      StepTarget<int> target(*flow, 2, &small, random_mass(5, 9));
      const auto bound = kernel->bind(target);
      const KernelMatrix km{bound->transition_matrix(support), target.probabilities(support)};
      EXPECT_LE(stationarity_residual(km), 1e-10) << kernel->name();
    }
  }
}

TEST(IndependentMh, PotentialWeightsAndMutationProposalAlwaysAccept) {
  auto model = binary_model(0.7);
  std::shared_ptr<const FeynmanKacFlow<int>> flow = flow_of(model, FlowKind::bootstrap);
  IndependentMhKernel<int> kernel(AncestorWeight<int>::potential(), std::make_shared<MutationProposal<int>>(flow));
  RunConfig<int> cfg;
  cfg.flow = flow;
  cfg.kernel = std::make_shared<IndependentMhKernel<int>>(kernel);
  cfg.particles = 500;
  cfg.horizon = 2;
  const auto run = run_mcmc_pf(cfg);
  EXPECT_EQ(run.acceptance_rate(1), 1.0);
  EXPECT_EQ(run.acceptance_rate(2), 1.0);
}

TEST(IndependentMh, FullyAdaptedAcceptanceIsLikelihoodRatio) {
  const double alpha = 0.8;
  auto model = binary_model(alpha);
  auto flow = flow_of(model, FlowKind::fully_adapted);
  const auto ff = enumerate_flow<int>(flow, 2);
  IndependentMhKernel<int> kernel(AncestorWeight<int>::uniform(), std::make_shared<TransitionProposal<int>>(model));
  const auto mu = random_mass(2, 4);
  StepTarget<int> target(*flow, 2, &ff.paths, mu);
  const auto k = kernel.bind(target)->transition_matrix(ff.support);
  oracle::BinaryPaths b{alpha};
  for (int a = 0; a < 4; ++a) {
    for (int c = 0; c < 4; ++c) {
      if (a == c) continue;
      const int xa = a % 2, jc = c / 2, xc = c % 2;
      const double q = mu[static_cast<std::size_t>(jc)] * b.l2(jc, xc);
      EXPECT_NEAR(k(a, c), q * std::min(1.0, b.g(xc) / b.g(xa)), 1e-15);
    }
  }
}

TEST(IndependentMh, ZeroDensityCurrentStateIsReported) {
  auto model = binary_model(1.0);
  auto flow = flow_of(model, FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  StepTarget<int> target(*flow, 2, &ff.paths, {0.5, 0.5});
  IndependentMhKernel<int> kernel(AncestorWeight<int>::uniform(), std::make_shared<TransitionProposal<int>>(model));
  auto bound = kernel.bind(target);
  Rng rng(5);
  // ancestor 0 never moves to state 1 when alpha = 1
  EXPECT_THROW(bound->step({0, 1}, rng), NumericalError);
}

TEST(IndependentMh, NeedsDensities) {
  auto flow = std::make_shared<const testing_models::DiracFlow>(0.0, 0.0);
  RunConfig<double> cfg;
  cfg.flow = flow;
  cfg.kernel = std::make_shared<IndependentMhKernel<double>>(AncestorWeight<double>::uniform(),
                                                              std::make_shared<MutationProposal<double>>(flow));
  cfg.particles = 3;
  cfg.horizon = 2;
  EXPECT_THROW(run_mcmc_pf(cfg), ConfigError);
}

TEST(IndependentMh, RatioBoundControlsAcceptance) {
  auto model = std::make_shared<const FiniteSsm>(discretised_linear_gaussian({1.3}));
  auto flow = flow_of(model, FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 1);
  for (auto proposal : std::vector<std::shared_ptr<const Proposal<int>>>{
           std::make_shared<TransitionProposal<int>>(model), std::make_shared<MutationProposal<int>>(flow)}) {
    const auto d = imh_diagnostic(ff, AncestorWeight<int>::uniform(), *proposal, 1);
    ASSERT_TRUE(std::isfinite(d.ratio_bound));
    EXPECT_GE(d.acceptance_rate, 1.0 / d.ratio_bound);
    EXPECT_LE(d.acceptance_rate, 1.0 + 1e-12);
  }
}

TEST(AncestorRandomWalk, PotentialWeightsLeaveMutationRatio) {
  auto model = std::make_shared<const FiniteSsm>(discretised_linear_gaussian({0.2, 0.7}, 9, -3.0, 3.0));
  auto flow = flow_of(model, FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  auto walk = std::make_shared<DiscreteRandomWalk>(9, std::vector<double>{1.0});
  AncestorRandomWalkKernel<int> kernel(AncestorWeight<int>::potential(), walk);
  const auto mu = random_mass(9, 6);
  StepTarget<int> target(*flow, 2, &ff.paths, mu);
  const auto k = kernel.bind(target)->transition_matrix(ff.support);
  const auto& l = model->transition();
  double total_g = 0.0;
  for (int j = 0; j < 9; ++j) total_g += mu[static_cast<std::size_t>(j)] * model->likelihood(1, j);
  for (int a = 0; a < 81; ++a) {
    for (int c = 0; c < 81; ++c) {
      if (a == c) continue;
      const int ja = a / 9, xa = a % 9, jc = c / 9, xc = c % 9;
      const double sel = mu[static_cast<std::size_t>(jc)] * model->likelihood(1, jc) / total_g;
      const double step = walk->probability(xa, xc);
      const double ratio = l[static_cast<std::size_t>(jc)][static_cast<std::size_t>(xc)] /
                           l[static_cast<std::size_t>(ja)][static_cast<std::size_t>(xa)];
      EXPECT_NEAR(k(a, c), sel * step * std::min(1.0, ratio), 1e-15);
    }
  }
  const KernelMatrix km{k, target.probabilities(ff.support)};
  EXPECT_LE(stationarity_residual(km), 1e-10);
}

TEST(AncestorRandomWalk, ZeroStepSameAncestorAccepts) {
  auto model = binary_model(0.6);
  auto flow = flow_of(model, FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  StepTarget<int> target(*flow, 2, &ff.paths, {1.0, 1e-300});
  // a walk that never moves: every proposal is (same ancestor, same state)
  auto still = std::make_shared<DiscreteRandomWalk>(2, std::vector<double>{0.0, 1.0});
  AncestorRandomWalkKernel<int> kernel(AncestorWeight<int>::uniform(), still);
  auto bound = kernel.bind(target);
  Rng rng(7);
  PathParticle<int> p{0, 1};
  for (int i = 0; i < 100; ++i) p = bound->step(p, rng);
  EXPECT_EQ(bound->acceptances(), bound->proposals());
}

TEST(AncestorRandomWalk, RejectsAsymmetricProposal) {
  EXPECT_THROW(AncestorRandomWalkKernel<int>(AncestorWeight<int>::uniform(), std::make_shared<AsymmetricWalk>()),
               ConfigError);
}

TEST(AncestorRandomWalk, NeedsPositiveWeightWhereMassLives) {
  auto flow = flow_of(binary_model(0.6), FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  StepTarget<int> target(*flow, 2, &ff.paths, {0.5, 0.5});
  auto zero_f = AncestorWeight<int>::custom([](std::size_t, const PathView<int>& p) {
    return p.back() == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  });
  AncestorRandomWalkKernel<int> kernel(zero_f, std::make_shared<DiscreteRandomWalk>(2, std::vector<double>{1.0}));
  EXPECT_THROW(kernel.bind(target), ConfigError);
}

TEST(LazyMixture, EpsilonZeroIsTheStepTarget) {
  auto flow = flow_of(binary_model(0.3), FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  const auto km = kernel_matrix(ff, LazyMixtureKernel<int>(0.0), 2);
  for (Eigen::Index r = 0; r < km.transition.rows(); ++r) {
    EXPECT_LE((km.transition.row(r).transpose() - km.stationary).cwiseAbs().maxCoeff(), 1e-16);
  }
  EXPECT_NEAR(dobrushin(km), 0.0, 1e-15);
}

TEST(LazyMixture, GeometricAutocorrelationAndDobrushin) {
  auto flow = flow_of(binary_model(0.3), FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  for (double eps : {0.25, 0.5, 0.9}) {
    const auto km = kernel_matrix(ff, LazyMixtureKernel<int>(eps), 2);
    EXPECT_NEAR(dobrushin(km), eps, 1e-14);
    Eigen::VectorXd f(4);
    f << 0.3, -1.0, 2.0, 0.5;
    const double m = km.stationary.dot(f);
    const Eigen::ArrayXd c = f.array() - m;
    const double var = km.stationary.dot((c * c).matrix());
    Eigen::VectorXd kj = f;
    for (int j = 1; j <= 6; ++j) {
      kj = km.transition * kj;
      const double corr = km.stationary.dot((c * (kj.array() - m)).matrix()) / var;
      EXPECT_NEAR(corr, std::pow(eps, j), 1e-13);
    }
  }
  EXPECT_THROW(LazyMixtureKernel<int>(1.0), ConfigError);
  EXPECT_THROW(LazyMixtureKernel<int>(-0.1), ConfigError);
}

TEST(LazyMixture, EmpiricalStayFrequency) {
  auto flow = flow_of(binary_model(0.3), FlowKind::bootstrap);
  RunConfig<int> cfg;
  cfg.flow = flow;
  cfg.kernel = std::make_shared<LazyMixtureKernel<int>>(0.5);
  cfg.particles = 20000;
  cfg.horizon = 2;
  const auto run = run_mcmc_pf(cfg);
  EXPECT_NEAR(run.acceptance_rate(2), 0.5, 4.0 * std::sqrt(0.25 / 20000));
}

TEST(InitChain, BurnInDistanceDecaysGeometrically) {
  auto model = binary_model(0.3);
  auto flow = flow_of(model, FlowKind::fully_adapted);
  const auto ff = enumerate_flow<int>(flow, 2);
  StepTarget<int> target(*flow, 2, &ff.paths, {0.5, 0.5});
  const double eps = 0.6;
  LazyMixtureKernel<int> kernel(eps);
  auto bound = kernel.bind(target);
  auto proposal = std::make_shared<TransitionProposal<int>>(model);
  const Eigen::VectorXd eta = target.probabilities(ff.support);
  const Eigen::VectorXd start = init_distribution(target, *bound, InitPolicy<int>::burnin(proposal, 1), ff.support);
  // the law before any kernel step
  Eigen::VectorXd v0(4);
  for (int j = 0; j < 2; ++j)
    for (int x = 0; x < 2; ++x) v0(2 * j + x) = 0.5 * model->transition()[static_cast<std::size_t>(j)][static_cast<std::size_t>(x)];
  EXPECT_NEAR(tv_distance(start, eta), eps * tv_distance(v0, eta), 1e-14);
  for (std::size_t nb : {2u, 5u, 20u}) {
    const auto v = init_distribution(target, *bound, InitPolicy<int>::burnin(proposal, nb), ff.support);
    EXPECT_NEAR(tv_distance(v, eta), std::pow(eps, static_cast<double>(nb)) * tv_distance(v0, eta), 1e-13);
  }
}

TEST(InitChain, BurnInSamplesMatchExactLaw) {
  auto model = binary_model(0.3);
  auto flow = flow_of(model, FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  StepTarget<int> target(*flow, 2, &ff.paths, {0.5, 0.5});
  LazyMixtureKernel<int> kernel(0.7);
  auto bound = kernel.bind(target);
  const auto policy = InitPolicy<int>::burnin(std::make_shared<TransitionProposal<int>>(model), 2);
  const auto exact = init_distribution(target, *bound, policy, ff.support);
  Rng rng(8);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) {
    const auto p = init_chain(target, *bound, policy, rng);
    counts(static_cast<Eigen::Index>(2 * p.ancestor + static_cast<std::size_t>(p.state))) += 1.0;
  }
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(counts(i) / draws, exact(i), 4.0 * std::sqrt(exact(i) * (1 - exact(i)) / draws) + 1e-12);
  }
}

TEST(InitChain, PolicyValidation) {
  auto model = binary_model(0.3);
  EXPECT_THROW(InitPolicy<int>::burnin(std::make_shared<TransitionProposal<int>>(model), 0).validate(), ConfigError);
  EXPECT_THROW(InitPolicy<int>::burnin(nullptr, 10).validate(), ConfigError);
  EXPECT_NO_THROW(InitPolicy<int>::stationary().validate());
}

TEST(InitChain, StationaryPolicyDelegatesToStepTarget) {
  auto flow = flow_of(binary_model(0.3), FlowKind::bootstrap);
  const auto ff = enumerate_flow<int>(flow, 2);
  StepTarget<int> target(*flow, 2, &ff.paths, {0.5, 0.5});
  LazyMixtureKernel<int> kernel(0.5);
  auto bound = kernel.bind(target);
  Rng a(9), b(9);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(init_chain(target, *bound, InitPolicy<int>::stationary(), a), sample_step_target(target, b));
  }
}
