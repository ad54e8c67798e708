#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "seqmc/errors.hpp"
#include "seqmc/flow.hpp"
#include "seqmc/kernels.hpp"
#include "seqmc/path.hpp"
#include "seqmc/ssm.hpp"

namespace seqmc {

inline constexpr std::size_t kDefaultPathCap = 1'000'000;
inline constexpr double kPoissonTolerance = 1e-10;

/// Exhaustive enumeration of a finite flow up to time n. Generation p of
/// `paths` lists all |S|^p paths; path i extends path i / |S| of generation
/// p-1 by support[i % |S|], which is also the indexing of kernel matrices.
template <class State>
struct FiniteFlow {
  std::shared_ptr<const FeynmanKacFlow<State>> flow;
  std::vector<State> support;
  std::size_t horizon = 0;
  Genealogy<State> paths;
  std::vector<Eigen::VectorXd> eta;     // eta_p, p = 1..n
  std::vector<Eigen::VectorXd> log_m;   // log m_p(parent, x_p) per path
  std::vector<double> log_z;            // log Z_p, p = 1..n

  const Eigen::VectorXd& eta_at(std::size_t p) const { return eta.at(p - 1); }
  std::size_t path_count(std::size_t p) const { return paths.generation(p).size(); }

  Eigen::VectorXd potential(std::size_t p) const {
    const auto& lg = paths.generation(p).log_potential;
    Eigen::VectorXd g(static_cast<Eigen::Index>(lg.size()));
    for (std::size_t i = 0; i < lg.size(); ++i) g(static_cast<Eigen::Index>(i)) = std::exp(lg[i]);
    return g;
  }
};

template <class State>
FiniteFlow<State> enumerate_flow(std::shared_ptr<const FeynmanKacFlow<State>> flow, std::size_t n,
                                 std::size_t cap = kDefaultPathCap) {
  if (!flow) throw ConfigError("enumeration needs a flow");
  check_time_index(*flow, n);
  auto support = flow->finite_support();
  if (!support || support->empty()) throw ConfigError("flow has no finite support");
  if (!flow->has_densities()) throw ConfigError("enumeration needs mutation densities");
  const std::size_t s = support->size();
  std::size_t count = 1;
  for (std::size_t p = 0; p < n; ++p) {
    if (count > cap / s) throw SizeError("path count exceeds the enumeration cap");
    count *= s;
  }

  FiniteFlow<State> ff;
  ff.flow = flow;
  ff.support = *support;
  ff.horizon = n;
  ff.log_z.push_back(0.0);
  for (std::size_t p = 1; p <= n; ++p) {
    const std::size_t parents = p == 1 ? 1 : ff.path_count(p - 1);
    Generation<State> gen;
    gen.states.reserve(parents * s);
    Eigen::VectorXd lm(static_cast<Eigen::Index>(parents * s));
    for (std::size_t j = 0; j < parents; ++j) {
      const auto parent = p == 1 ? PathView<State>{} : ff.paths.path(p - 1, j);
      for (std::size_t k = 0; k < s; ++k) {
        gen.states.push_back(ff.support[k]);
        if (p > 1) gen.parents.push_back(j);
        lm(static_cast<Eigen::Index>(j * s + k)) = flow->log_mutation_density(p, parent, ff.support[k]);
      }
    }
    if (p > 1) {
      const StepTarget<State> target(*flow, p, &ff.paths,
                                     std::vector<double>(ff.eta.back().data(),
                                                         ff.eta.back().data() + ff.eta.back().size()));
      ff.eta.push_back(target.probabilities(ff.support));
      const Eigen::VectorXd g = ff.potential(p - 1);
      ff.log_z.push_back(ff.log_z.back() + std::log(ff.eta[p - 2].dot(g)));
    } else {
      const StepTarget<State> target(*flow, 1);
      ff.eta.push_back(target.probabilities(ff.support));
    }
    ff.paths.push(std::move(gen));
    auto& stored = ff.paths.mutable_generation(p);
    stored.log_potential.resize(stored.size());
    for (std::size_t i = 0; i < stored.size(); ++i) {
      stored.log_potential[i] = log_potential(*flow, p, ff.paths.path(p, i));
    }
    ff.log_m.push_back(lm);
  }
  return ff;
}

/// f evaluated on every path of generation p.
template <class State>
Eigen::VectorXd tabulate(const FiniteFlow<State>& ff, std::size_t p, const TestFunction<State>& f) {
  const std::size_t count = ff.path_count(p);
  Eigen::VectorXd v(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) v(static_cast<Eigen::Index>(i)) = f(ff.paths.path(p, i));
  return v;
}

/// Q_{p+1}(h) on generation p, for h on generation p+1:
/// (Q h)(path_p) = G_p(path_p) sum_x m_{p+1}(path_p, x) h(path_p, x).
template <class State>
Eigen::VectorXd apply_q(const FiniteFlow<State>& ff, std::size_t p, const Eigen::VectorXd& h) {
  const std::size_t s = ff.support.size();
  const std::size_t count = ff.path_count(p);
  const auto& lm = ff.log_m.at(p);
  const auto& lg = ff.paths.generation(p).log_potential;
  Eigen::VectorXd out(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < s; ++k) {
      const auto idx = static_cast<Eigen::Index>(i * s + k);
      acc += std::exp(lm(idx)) * h(idx);
    }
    out(static_cast<Eigen::Index>(i)) = std::exp(lg[i]) * acc;
  }
  return out;
}

/// Q-bar_{p,n}(h) = Q_{p,n}(h) / eta_p(Q_{p,n}(1)), by backward recursion.
template <class State>
Eigen::VectorXd normalized_semigroup(const FiniteFlow<State>& ff, std::size_t p, std::size_t n,
                                     const Eigen::VectorXd& h) {
  if (p < 1 || p > n || n > ff.horizon) throw ConfigError("semigroup indices out of range");
  Eigen::VectorXd v = h;
  Eigen::VectorXd one = Eigen::VectorXd::Ones(h.size());
  for (std::size_t q = n; q > p; --q) {
    v = apply_q(ff, q - 1, v);
    one = apply_q(ff, q - 1, one);
  }
  return v / ff.eta_at(p).dot(one);
}

struct KernelMatrix {
  Eigen::MatrixXd transition;
  Eigen::VectorXd stationary;
};

/// K_p^{eta_{p-1}} over generation p, with stationary vector eta_p.
template <class State>
KernelMatrix kernel_matrix(const FiniteFlow<State>& ff, const MarkovKernel<State>& kernel,
                           std::size_t p) {
  if (p < 1 || p > ff.horizon) throw ConfigError("kernel step out of range");
  std::vector<double> mass;
  if (p > 1) {
    const auto& e = ff.eta_at(p - 1);
    mass.assign(e.data(), e.data() + e.size());
  }
  const StepTarget<State> target(*ff.flow, p, p == 1 ? nullptr : &ff.paths, std::move(mass));
  const auto bound = kernel.bind(target);
  KernelMatrix km{bound->transition_matrix(ff.support), target.probabilities(ff.support)};
  const Eigen::VectorXd rows = km.transition.rowwise().sum();
  if ((rows.array() - 1.0).abs().maxCoeff() > 1e-12) throw AnalysisError("kernel rows do not sum to 1");
  if ((km.transition.array() < -1e-15).any()) throw AnalysisError("negative kernel entries");
  return km;
}

inline double tv_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return 0.5 * (a - b).cwiseAbs().sum();
}

/// ||eta K - eta||_TV
inline double stationarity_residual(const KernelMatrix& km) {
  return tv_distance(km.transition.transpose() * km.stationary, km.stationary);
}

/// Dobrushin coefficient: the largest total-variation distance between rows.
inline double dobrushin(const Eigen::MatrixXd& k) {
  double beta = 0.0;
  for (Eigen::Index a = 0; a < k.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < k.rows(); ++b) {
      beta = std::max(beta, 0.5 * (k.row(a) - k.row(b)).cwiseAbs().sum());
    }
  }
  return beta;
}

inline double dobrushin(const KernelMatrix& km) { return dobrushin(km.transition); }

/// Matrices up to this size get the explicit beta(K^64) < 1 check.
inline constexpr Eigen::Index kErgodicityCheckLimit = 256;

inline void check_ergodic(const KernelMatrix& km) {
  if (km.transition.rows() > kErgodicityCheckLimit) return;
  Eigen::MatrixXd p = km.transition;
  for (int i = 0; i < 6; ++i) p = p * p;
  if (!(dobrushin(p) < 1.0)) throw AnalysisError("kernel is not ergodic");
}

/// T(f) = sum_j (K^j - eta)(f): the solution of (I - K) h = f - eta(f)
/// with eta(h) = 0, obtained from the nonsingular system
/// (I - K + 1 eta^T) h = f - eta(f).
inline Eigen::VectorXd resolvent_apply(const KernelMatrix& km, const Eigen::VectorXd& f) {
  check_ergodic(km);
  const auto& k = km.transition;
  const auto& eta = km.stationary;
  const Eigen::Index m = k.rows();
  const double ef = eta.dot(f);
  const Eigen::VectorXd rhs = f.array() - ef;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m) - k + Eigen::VectorXd::Ones(m) * eta.transpose();
  Eigen::VectorXd h;
  if (m <= 400) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw AnalysisError("kernel is not ergodic");
    h = lu.solve(rhs);
  } else {
    h = a.partialPivLu().solve(rhs);
  }
  const double scale = std::max(1.0, f.cwiseAbs().maxCoeff());
  const double poisson = ((k * h - h).array() - (ef - f.array())).abs().maxCoeff();
  const double centring = std::abs(eta.dot(h));
  if (!std::isfinite(poisson) || poisson > kPoissonTolerance * scale ||
      centring > kPoissonTolerance * scale) {
    throw AnalysisError("Poisson equation residual too large; kernel not ergodic?");
  }
  return h;
}

/// Gamma(f, g)(x) = sum_y K(x, y) (Tf(y) - KTf(x)) (Tg(y) - KTg(x)).
inline Eigen::VectorXd covariance_function(const KernelMatrix& km, const Eigen::VectorXd& f,
                                           const Eigen::VectorXd& g) {
  const Eigen::VectorXd tf = resolvent_apply(km, f);
  const Eigen::VectorXd tg = f.data() == g.data() ? tf : resolvent_apply(km, g);
  const Eigen::VectorXd ktf = km.transition * tf;
  const Eigen::VectorXd ktg = km.transition * tg;
  const auto& k = km.transition;
  Eigen::VectorXd out(k.rows());
  for (Eigen::Index x = 0; x < k.rows(); ++x) {
    const Eigen::ArrayXd df = tf.array() - ktf(x);
    const Eigen::ArrayXd dg = tg.array() - ktg(x);
    out(x) = (k.row(x).transpose().array() * df * dg).sum();
  }
  return out;
}

inline double stationary_variance(const KernelMatrix& km, const Eigen::VectorXd& f) {
  const double m = km.stationary.dot(f);
  return km.stationary.dot((f.array() - m).square().matrix());
}

/// 1 + 2 sum_{j>=1} corr(f, K^j f) = (2 eta(fbar T f) - var f) / var f.
inline double iact(const KernelMatrix& km, const Eigen::VectorXd& f) {
  const double var = stationary_variance(km, f);
  const double scale = std::max(1.0, f.cwiseAbs().maxCoeff());
  if (!(var > 1e-14 * scale * scale)) throw AnalysisError("IACT undefined for a constant function");
  const Eigen::VectorXd tf = resolvent_apply(km, f);
  const Eigen::ArrayXd centred = f.array() - km.stationary.dot(f);
  const double lag_sum = km.stationary.dot((centred * tf.array()).matrix());
  return (2.0 * lag_sum - var) / var;
}

/// |eta Gamma(f, f) - var_eta(f) iact(f)|
inline double variance_decomposition_check(const KernelMatrix& km, const Eigen::VectorXd& f) {
  const double lhs = km.stationary.dot(covariance_function(km, f, f));
  return std::abs(lhs - stationary_variance(km, f) * iact(km, f));
}

enum class Estimator { predictor, unnormalized, bpf_filter, faapf_filter };

inline std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::predictor:
      return "predictor";
    case Estimator::unnormalized:
      return "unnormalized";
    case Estimator::bpf_filter:
      return "bpf-filter";
    case Estimator::faapf_filter:
      return "faapf-filter";
  }
  return "unknown";
}

struct VarianceTerm {
  double variance = 0.0;  // var_{eta_p}(h_p)
  double iact = 1.0;      // NaN when the variance vanishes
  double contribution = 0.0;  // eta_p Gamma_p(h_p, h_p)
};

struct AsymptoticVariance {
  double total = 0.0;
  std::vector<VarianceTerm> terms;  // p = 1..n
};

/// The integrand at time n whose propagated versions h_p = Q-bar_{p,n}(h_n)
/// enter the variance:
///  predictor, faapf-filter: f - eta_n(f)
///  unnormalized (gamma_n^N(f) / Z_n): f
///  bpf-filter: G_n (f - pi_n f) / eta_n(G_n).
template <class State>
Eigen::VectorXd variance_integrand(const FiniteFlow<State>& ff, std::size_t n,
                                   const Eigen::VectorXd& f, Estimator estimator) {
  const auto& eta = ff.eta_at(n);
  switch (estimator) {
    case Estimator::predictor:
    case Estimator::faapf_filter:
      return (f.array() - eta.dot(f)).matrix();
    case Estimator::unnormalized:
      return f;
    case Estimator::bpf_filter: {
      const Eigen::VectorXd g = ff.potential(n);
      const double eg = eta.dot(g);
      const double pi_f = eta.dot(g.cwiseProduct(f)) / eg;
      return (g.array() * (f.array() - pi_f) / eg).matrix();
    }
  }
  throw ConfigError("unknown estimator");
}

/// sum_{p<=n} eta_p Gamma_p(h_p, h_p) with kernels built at mu = eta_{p-1}.
template <class State>
AsymptoticVariance asymptotic_variance(
    const FiniteFlow<State>& ff, const std::vector<std::shared_ptr<const MarkovKernel<State>>>& kernels,
    std::size_t n, const Eigen::VectorXd& f, Estimator estimator) {
  if (kernels.size() != n) throw ConfigError("need exactly one kernel per time step");
  if (n < 1 || n > ff.horizon) throw ConfigError("time index outside the enumerated flow");
  if (static_cast<std::size_t>(f.size()) != ff.path_count(n)) {
    throw ConfigError("test function has the wrong size");
  }
  const Eigen::VectorXd hn = variance_integrand(ff, n, f, estimator);
  AsymptoticVariance out;
  for (std::size_t p = 1; p <= n; ++p) {
    if (!kernels[p - 1]) throw ConfigError("missing kernel");
    const KernelMatrix km = kernel_matrix(ff, *kernels[p - 1], p);
    const Eigen::VectorXd hp = normalized_semigroup(ff, p, n, hn);
    VarianceTerm term;
    term.variance = stationary_variance(km, hp);
    term.contribution = km.stationary.dot(covariance_function(km, hp, hp));
    const double scale = std::max(1.0, hp.cwiseAbs().maxCoeff());
    term.iact = term.variance > 1e-14 * scale * scale ? iact(km, hp)
                                                       : std::numeric_limits<double>::quiet_NaN();
    out.total += term.contribution;
    out.terms.push_back(term);
  }
  return out;
}

template <class State>
AsymptoticVariance asymptotic_variance(
    const FiniteFlow<State>& ff, const std::vector<std::shared_ptr<const MarkovKernel<State>>>& kernels,
    std::size_t n, const TestFunction<State>& f, Estimator estimator) {
  return asymptotic_variance(ff, kernels, n, tabulate(ff, n, f), estimator);
}

/// S_{p,n}(h)(x_p) = (L_p / L_n) sum_{x_{p+1:n}} prod_{q>p} L_q(x_{q-1}, x_q) g_q(x_q) h(x_n)
/// for h a function of the final state; pi_p S_{p,n} = pi_n.
inline Eigen::VectorXd smoothing_operator(const FiniteSsm& model, std::size_t p, std::size_t n,
                                          const Eigen::VectorXd& h) {
  if (p < 1 || p > n || n > model.horizon()) throw ConfigError("smoothing indices out of range");
  const std::size_t s = model.states();
  if (static_cast<std::size_t>(h.size()) != s) throw ConfigError("function has the wrong size");
  const auto log_l = model.log_marginal_likelihoods();
  Eigen::VectorXd b = h;
  for (std::size_t q = n; q > p; --q) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s));
    for (std::size_t x = 0; x < s; ++x) {
      for (std::size_t y = 0; y < s; ++y) {
        next(static_cast<Eigen::Index>(x)) +=
            model.transition()[x][y] * model.likelihood(q, static_cast<int>(y)) * b(static_cast<Eigen::Index>(y));
      }
    }
    b = next;
  }
  return b * std::exp(log_l[p - 1] - log_l[n - 1]);
}

struct ImhDiagnostic {
  double ratio_bound = 0.0;      // sup Phi / q over the product space
  double acceptance_rate = 0.0;  // stationary probability that a proposal is accepted
};

/// Bounded-ratio diagnostic for an independent MH kernel at step p.
template <class State>
ImhDiagnostic imh_diagnostic(const FiniteFlow<State>& ff, const AncestorWeight<State>& weight,
                             const Proposal<State>& proposal, std::size_t p) {
  std::vector<double> mass;
  if (p > 1) mass.assign(ff.eta_at(p - 1).data(), ff.eta_at(p - 1).data() + ff.eta_at(p - 1).size());
  const StepTarget<State> target(*ff.flow, p, p == 1 ? nullptr : &ff.paths, std::move(mass));
  const Eigen::VectorXd phi = target.probabilities(ff.support);
  const auto log_f = weight.evaluate(target);
  const std::size_t s = ff.support.size();
  Eigen::VectorXd q(phi.size());
  double fz = 0.0;
  for (std::size_t j = 0; j < target.ancestor_count(); ++j) fz += target.ancestor_mass(j) * std::exp(log_f[j]);
  for (std::size_t j = 0; j < target.ancestor_count(); ++j) {
    const double sel = p == 1 ? 1.0 : target.ancestor_mass(j) * std::exp(log_f[j]) / fz;
    for (std::size_t k = 0; k < s; ++k) {
      q(static_cast<Eigen::Index>(j * s + k)) =
          sel * std::exp(proposal.log_density(p, target.ancestor(j), ff.support[k]));
    }
  }
  ImhDiagnostic d;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(phi.size());
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    if (phi(i) > 0.0) {
      if (!(q(i) > 0.0)) {
        d.ratio_bound = std::numeric_limits<double>::infinity();
        continue;
      }
      w(i) = phi(i) / q(i);
      d.ratio_bound = std::max(d.ratio_bound, w(i));
    }
  }
  double acc = 0.0;
  for (Eigen::Index x = 0; x < phi.size(); ++x) {
    if (phi(x) <= 0.0) continue;
    for (Eigen::Index y = 0; y < phi.size(); ++y) {
      if (q(y) <= 0.0) continue;
      acc += phi(x) * q(y) * std::min(1.0, w(y) / w(x));
    }
  }
  d.acceptance_rate = acc;
  return d;
}

}  // namespace seqmc
