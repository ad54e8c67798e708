#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "seqmc/analysis.hpp"
#include "seqmc/engine.hpp"
#include "seqmc/errors.hpp"
#include "seqmc/kernels.hpp"
#include "seqmc/random.hpp"
#include "seqmc/ssm.hpp"

namespace seqmc {

// ---------------------------------------------------------------- threads

/// Worker count: an explicit request, else SEQMC_THREADS, else the
/// hardware concurrency.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SEQMC_THREADS"); env != nullptr && *env != '\0') {
    unsigned v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec != std::errc() || ptr != end || v == 0) {
      throw ConfigError(std::string("SEQMC_THREADS must be a positive integer, got '") + env + "'");
    }
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Evaluates fn(0..count-1) on a worker pool. Results are stored by index,
/// so the output does not depend on scheduling; the exception of the lowest
/// failing index is rethrown.
template <class Fn>
auto parallel_map(std::size_t count, unsigned threads, Fn&& fn) {
  using Result = decltype(fn(std::size_t{}));
  std::vector<Result> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ------------------------------------------------------------------ tables

struct ReplicateRow {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::string algorithm;
  std::size_t particles = 0;
  std::size_t time = 0;
  std::string estimator;
  double value = 0.0;
  double reference = std::numeric_limits<double>::quiet_NaN();
};

struct SummaryRow {
  std::string algorithm;
  std::size_t particles = 0;
  std::size_t time = 0;
  std::string estimator;
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
  double stderr_ = 0.0;
  double reference = std::numeric_limits<double>::quiet_NaN();
};

struct SkippedAlgorithm {
  std::string algorithm;
  std::string reason;
};

class ReplicateTable {
 public:
  void add(ReplicateRow row) { rows_.push_back(std::move(row)); }
  void skip(std::string algorithm, std::string reason) {
    skipped_.push_back({std::move(algorithm), std::move(reason)});
  }

  const std::vector<ReplicateRow>& rows() const { return rows_; }
  const std::vector<SkippedAlgorithm>& skipped() const { return skipped_; }

  std::vector<double> values(const std::string& algorithm, const std::string& estimator = {}) const {
    std::vector<double> out;
    for (const auto& r : rows_) {
      if (r.algorithm == algorithm && (estimator.empty() || r.estimator == estimator)) {
        out.push_back(r.value);
      }
    }
    return out;
  }

  /// One row per (algorithm, N, n, estimator) in order of first appearance.
  /// The reference is reported when it is common to the group, NaN if not.
  std::vector<SummaryRow> summary() const {
    using Key = std::tuple<std::string, std::size_t, std::size_t, std::string>;
    std::map<Key, std::size_t> index;
    std::vector<std::vector<const ReplicateRow*>> groups;
    for (const auto& r : rows_) {
      Key key{r.algorithm, r.particles, r.time, r.estimator};
      auto [it, fresh] = index.emplace(key, groups.size());
      if (fresh) groups.emplace_back();
      groups[it->second].push_back(&r);
    }
    std::vector<SummaryRow> out;
    for (const auto& g : groups) {
      SummaryRow s;
      s.algorithm = g.front()->algorithm;
      s.particles = g.front()->particles;
      s.time = g.front()->time;
      s.estimator = g.front()->estimator;
      s.count = g.size();
      CompensatedSum sum;
      for (const auto* r : g) sum.add(r->value);
      s.mean = sum.value() / static_cast<double>(s.count);
      if (s.count > 1) {
        CompensatedSum sq;
        for (const auto* r : g) sq.add((r->value - s.mean) * (r->value - s.mean));
        s.variance = sq.value() / static_cast<double>(s.count - 1);
      } else {
        s.variance = std::numeric_limits<double>::quiet_NaN();
      }
      s.stderr_ = std::sqrt(s.variance / static_cast<double>(s.count));
      s.reference = g.front()->reference;
      for (const auto* r : g) {
        if (!(r->reference == s.reference)) {
          s.reference = std::numeric_limits<double>::quiet_NaN();
          break;
        }
      }
      out.push_back(std::move(s));
    }
    return out;
  }

 private:
  std::vector<ReplicateRow> rows_;
  std::vector<SkippedAlgorithm> skipped_;
};

/// Shortest round-trip decimal form, independent of the locale.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericalError("cannot format number");
  return std::string(buf, ptr);
}

inline constexpr const char* kCsvHeader = "replicate,seed,algorithm,N,n,estimator,value,reference";
inline constexpr const char* kSummaryHeader =
    "algorithm,N,n,estimator,count,mean,variance,stderr,reference";

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline void write_csv(std::ostream& os, const ReplicateTable& table) {
  os << kCsvHeader << '\n';
  for (const auto& r : table.rows()) {
    os << r.replicate << ',' << r.seed << ',' << csv_field(r.algorithm) << ',' << r.particles << ','
       << r.time << ',' << csv_field(r.estimator) << ',' << format_number(r.value) << ','
       << format_number(r.reference) << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const ReplicateTable& table) {
  os << kSummaryHeader << '\n';
  for (const auto& s : table.summary()) {
    os << csv_field(s.algorithm) << ',' << s.particles << ',' << s.time << ','
       << csv_field(s.estimator) << ',' << s.count << ',' << format_number(s.mean) << ','
       << format_number(s.variance) << ',' << format_number(s.stderr_) << ','
       << format_number(s.reference) << '\n';
  }
}

// ------------------------------------------------------------ binary model

inline std::shared_ptr<const MarkovKernel<int>> lazy_kernel(double eps) {
  if (eps == 0.0) return std::make_shared<PerfectMixingKernel<int>>();
  return std::make_shared<LazyMixtureKernel<int>>(eps);
}

inline TestFunction<int> final_state() {
  return TestFunction<int>::final_coordinate([](int x) { return static_cast<double>(x); });
}

inline std::shared_ptr<const SsmFlow<int>> binary_flow(double alpha, FlowKind kind) {
  auto model = std::make_shared<const FiniteSsm>(binary_toy_model(alpha));
  return std::make_shared<const SsmFlow<int>>(std::move(model), kind);
}

// ---------------------------------------------------------------- figure 1

inline const char* const kFigure1Algorithms[] = {"BPF", "MCMC-BPF", "FA-APF", "MCMC-FA-APF"};

struct Figure1Row {
  double eps = 0.0;
  double sigma2_bpf = 0.0;  // absolute scale of the normalisation
  double bpf = 1.0;
  double mcmc_bpf = 1.0;
  double faapf = 1.0;
  double mcmc_faapf = 1.0;
};

struct Figure1Curves {
  double alpha = 0.0;
  std::vector<Figure1Row> rows;
};

/// Exact asymptotic variances of the filter estimate pi_n^N(f) at n = 2 for
/// lazy kernels at every step, relative to the bootstrap particle filter.
inline Figure1Curves figure1_curves(double alpha, const std::vector<double>& eps_grid,
                                    const TestFunction<int>& f = final_state()) {
  if (eps_grid.empty()) throw ConfigError("figure 1 needs a non-empty epsilon grid");
  const std::size_t n = 2;
  const auto bpf = enumerate_flow<int>(binary_flow(alpha, FlowKind::bootstrap), n);
  const auto fa = enumerate_flow<int>(binary_flow(alpha, FlowKind::fully_adapted), n);
  auto sigma2 = [&](const FiniteFlow<int>& ff, double eps, Estimator est) {
    return asymptotic_variance(ff, {lazy_kernel(eps), lazy_kernel(eps)}, n, f, est).total;
  };
  const double base = sigma2(bpf, 0.0, Estimator::bpf_filter);
  const double base_fa = sigma2(fa, 0.0, Estimator::faapf_filter);
  if (!(base > 0.0)) throw AnalysisError("bootstrap variance vanishes; relative curves undefined");
  Figure1Curves out{alpha, {}};
  for (double eps : eps_grid) {
    if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
    Figure1Row r;
    r.eps = eps;
    r.sigma2_bpf = base;
    r.mcmc_bpf = sigma2(bpf, eps, Estimator::bpf_filter) / base;
    r.faapf = base_fa / base;
    r.mcmc_faapf = sigma2(fa, eps, Estimator::faapf_filter) / base;
    out.rows.push_back(r);
  }
  return out;
}

/// Smallest epsilon at which MCMC-FA-APF stops beating the BPF, by bisection
/// on the exact curve; nullopt if the FA-APF is not better at epsilon = 0.
inline std::optional<double> figure1_crossing(double alpha, double tol = 1e-12) {
  auto excess = [&](double eps) {
    const auto row = figure1_curves(alpha, {eps}).rows.front();
    return row.mcmc_faapf - 1.0;
  };
  if (excess(0.0) >= 0.0) return std::nullopt;
  double lo = 0.0, hi = 0.999;
  if (excess(hi) < 0.0) return std::nullopt;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Figure1Alphas {
  double small_regime = 0.0;  // FA-APF beats the BPF, with an epsilon crossing
  double large_regime = 0.0;  // FA-APF loses to the BPF
  std::vector<std::pair<double, double>> scan;  // (alpha, sigma2_FA-APF / sigma2_BPF)
};

/// Scans alpha over {0.05, 0.10, ..., 0.95}: the regime values are the argmin
/// and argmax of the FA-APF / BPF ratio.
inline Figure1Alphas select_figure1_alphas() {
  Figure1Alphas out;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int k = 1; k <= 19; ++k) {
    const double alpha = 5.0 * k / 100.0;
    const double ratio = figure1_curves(alpha, {0.0}).rows.front().faapf;
    out.scan.emplace_back(alpha, ratio);
    if (ratio < lo) lo = ratio, out.small_regime = alpha;
    if (ratio > hi) hi = ratio, out.large_regime = alpha;
  }
  return out;
}

inline std::vector<double> parse_grid(double from, double to, double step) {
  if (!(step > 0.0) || !(to >= from)) throw ConfigError("grid needs step > 0 and to >= from");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
  for (std::size_t k = 0; k < count; ++k) {
    // round to 12 significant digits so 0.1 * 3 prints as 0.3
    const double v = from + static_cast<double>(k) * step;
    out.push_back(std::round(v * 1e12) / 1e12);
  }
  return out;
}

inline ReplicateTable figure1_table(const std::vector<Figure1Curves>& curves) {
  ReplicateTable table;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
      const auto& r = c.rows[i];
      const double values[] = {r.bpf, r.mcmc_bpf, r.faapf, r.mcmc_faapf};
      const std::string label =
          "relative-variance[alpha=" + format_number(c.alpha) + ";eps=" + format_number(r.eps) + "]";
      for (std::size_t a = 0; a < 4; ++a) {
        table.add({i, 0, kFigure1Algorithms[a], 0, 2, label, values[a], 1.0});
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------- figure 2

struct Figure2Config {
  std::size_t dimension = 1;
  std::size_t particles = 1000;
  std::size_t replicates = 100;
  std::size_t horizon = 10;
  std::size_t burnin = 100;
  bool compensate_burnin = true;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::vector<std::string> algorithms = {"BPF", "MCMC-BPF", "FA-APF", "MCMC-FA-APF"};

  static Figure2Config paper_scale(std::size_t d) {
    Figure2Config c;
    c.dimension = d;
    c.particles = 10000;
    c.replicates = 1000;
    return c;
  }

  void validate() const {
    if (dimension < 1) throw ConfigError("dimension must be at least 1");
    if (particles < 1 || replicates < 1 || horizon < 1) {
      throw ConfigError("figure 2 needs N, replicates and horizon >= 1");
    }
    if (algorithms.empty()) throw ConfigError("figure 2 needs at least one algorithm");
    for (const auto& a : algorithms) {
      if (a != "BPF" && a != "MCMC-BPF" && a != "FA-APF" && a != "MCMC-FA-APF") {
        throw ConfigError("unknown figure 2 algorithm '" + a + "'");
      }
      if (a == "MCMC-FA-APF") {
        if (burnin < 1) throw ConfigError("MCMC-FA-APF needs a burn-in of at least one step");
        if (compensate_burnin && particles <= burnin) {
          throw ConfigError("burn-in compensation needs N > burn-in");
        }
      }
    }
  }
};

/// Relative marginal-likelihood estimates L_n^N / L_n on the linear Gaussian
/// model, one fresh observation sequence per replicate.
inline ReplicateTable figure2_experiment(const Figure2Config& config) {
  config.validate();
  using Vec = std::vector<double>;
  const std::size_t d = config.dimension;
  const std::uint64_t root = derive_seed(config.seed, hash_label("figure2"), d);

  // Feasibility is a property of the model class, checked on a probe.
  const LinearGaussianSsm probe(d, std::vector<Vec>(1, Vec(d, 0.0)));
  std::vector<std::string> active;
  ReplicateTable table;
  for (const auto& a : config.algorithms) {
    if ((a == "FA-APF" || a == "MCMC-FA-APF") && !probe.fully_adaptable()) {
      table.skip(a, "model is not fully adaptable");
    } else {
      active.push_back(a);
    }
  }

  const std::string estimator = "relative-likelihood[d=" + std::to_string(d) + "]";
  auto walk = std::make_shared<const GaussianRandomWalk>(1.0 / std::sqrt(static_cast<double>(d)));
  auto rows = parallel_map(config.replicates, config.threads, [&](std::size_t r) {
    Rng data_rng(derive_seed(root, hash_label("observations"), r));
    auto sample = simulate_linear_gaussian(d, config.horizon, data_rng);
    auto model = std::make_shared<const LinearGaussianSsm>(d, sample.observations);
    const double exact = kalman_log_marginal_likelihood(*model, config.horizon);

    std::vector<ReplicateRow> out;
    for (const auto& a : active) {
      RunConfig<Vec> run;
      run.horizon = config.horizon;
      run.particles = config.particles;
      run.seed = derive_seed(root, hash_label(a), r);
      if (a == "BPF") {
        run.flow = make_bootstrap_flow<Vec>(model);
        run.kernel = std::make_shared<PerfectMixingKernel<Vec>>();
      } else if (a == "MCMC-BPF") {
        run.flow = make_bootstrap_flow<Vec>(model);
        run.kernel = std::make_shared<AncestorRandomWalkKernel<Vec>>(AncestorWeight<Vec>::potential(), walk);
      } else if (a == "FA-APF") {
        run.flow = make_fully_adapted_flow<Vec>(model);
        run.kernel = std::make_shared<PerfectMixingKernel<Vec>>();
      } else {
        run.flow = make_fully_adapted_flow<Vec>(model);
        run.kernel = std::make_shared<AncestorRandomWalkKernel<Vec>>(AncestorWeight<Vec>::uniform(), walk);
        run.init = InitPolicy<Vec>::burnin(std::make_shared<const TransitionProposal<Vec>>(model),
                                           config.burnin);
        if (config.compensate_burnin) run.particles = config.particles - config.burnin;
      }
      const auto result = run_mcmc_pf(run);
      const auto& flow = static_cast<const StateSpaceFlow<Vec>&>(*run.flow);
      const double rel = std::exp(log_likelihood_estimate(result, flow, config.horizon) - exact);
      out.push_back({r, run.seed, a, run.particles, config.horizon, estimator, rel, 1.0});
    }
    return out;
  });
  for (auto& block : rows) {
    for (auto& row : block) table.add(std::move(row));
  }
  return table;
}

// ------------------------------------------------------ statistical checks

/// Common settings of the binary-model Monte Carlo checks.
struct BinaryCheckConfig {
  double alpha = 0.9;
  double eps = 0.0;
  FlowKind flow = FlowKind::bootstrap;
  std::size_t particles = 1000;
  std::size_t replicates = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  TestFunction<int> f = final_state();

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
    if (particles < 1) throw ConfigError("need at least one particle");
    if (replicates < 2) throw ConfigError("need at least two replicates");
    if (flow == FlowKind::auxiliary) throw ConfigError("binary checks use the bootstrap or fully adapted flow");
  }
};

namespace detail {

inline RunConfig<int> binary_run(const BinaryCheckConfig& c,
                                 std::shared_ptr<const FeynmanKacFlow<int>> flow,
                                 std::size_t particles, std::uint64_t seed) {
  RunConfig<int> run;
  run.flow = std::move(flow);
  run.kernel = lazy_kernel(c.eps);
  run.particles = particles;
  run.horizon = 2;
  run.seed = seed;
  return run;
}

}  // namespace detail

struct CltRecord {
  double empirical = 0.0;  // mean of N (eta_n^N(f) - eta_n(f))^2 over replicates
  double exact = 0.0;      // Sigma_n(f)
  double z = 0.0;          // (empirical / exact - 1) / sqrt(2 / R)
  double lower = 0.0;      // 99.99% chi-square band for the empirical value
  double upper = 0.0;
  bool within = false;
  bool degenerate = false;
};

/// Empirical variance of sqrt(N) (eta_2^N - eta_2)(f) against the exact
/// asymptotic variance. The exact mean is known, so R * empirical / exact is
/// approximately chi-square with R degrees of freedom.
inline CltRecord clt_variance_check(const BinaryCheckConfig& c) {
  c.validate();
  const std::size_t n = 2;
  auto flow = binary_flow(c.alpha, c.flow);
  const auto ff = enumerate_flow<int>(flow, n);
  const Eigen::VectorXd fv = tabulate(ff, n, c.f);
  const double target = ff.eta_at(n).dot(fv);

  CltRecord rec;
  rec.exact = asymptotic_variance(ff, {lazy_kernel(c.eps), lazy_kernel(c.eps)}, n, fv,
                                  Estimator::predictor)
                  .total;
  const std::uint64_t root = derive_seed(c.seed, hash_label("clt"));
  const auto errors = parallel_map(c.replicates, c.threads, [&](std::size_t r) {
    const auto run = run_mcmc_pf(detail::binary_run(c, flow, c.particles, derive_seed(root, r)));
    return empirical_integrate(run, n, c.f) - target;
  });
  CompensatedSum sq;
  for (double e : errors) sq.add(e * e);
  const double reps = static_cast<double>(c.replicates);
  rec.empirical = static_cast<double>(c.particles) * sq.value() / reps;

  const double scale = std::max(1.0, fv.cwiseAbs().maxCoeff());
  if (rec.exact <= 1e-14 * scale * scale) {
    rec.degenerate = true;
    rec.exact = 0.0;
    rec.within = rec.empirical <= 1e-20 * scale * scale;
    return rec;
  }
  boost::math::chi_squared chi(reps);
  rec.lower = rec.exact * boost::math::quantile(chi, 0.00005) / reps;
  rec.upper = rec.exact * boost::math::quantile(chi, 0.99995) / reps;
  rec.z = (rec.empirical / rec.exact - 1.0) / std::sqrt(2.0 / reps);
  rec.within = rec.lower <= rec.empirical && rec.empirical <= rec.upper;
  return rec;
}

struct RateRecord {
  std::vector<std::size_t> grid;
  std::vector<double> rmse;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
};

inline std::vector<std::size_t> default_rate_grid() {
  std::vector<std::size_t> g;
  for (std::size_t k = 7; k <= 13; ++k) g.push_back(std::size_t{1} << k);
  return g;
}

/// Least-squares slope of log RMSE against log N for eta_2^N(f).
/// `c.particles` is ignored in favour of the grid.
inline RateRecord l2_rate_check(const BinaryCheckConfig& c, const std::vector<std::size_t>& grid) {
  c.validate();
  if (grid.size() < 3) throw ConfigError("rate check needs at least three grid points");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 1) throw ConfigError("grid sizes must be positive");
    if (i > 0 && grid[i] == grid[i - 1]) throw ConfigError("grid sizes must be distinct");
  }
  const std::size_t n = 2;
  auto flow = binary_flow(c.alpha, c.flow);
  const auto ff = enumerate_flow<int>(flow, n);
  const double target = ff.eta_at(n).dot(tabulate(ff, n, c.f));
  const std::uint64_t root = derive_seed(c.seed, hash_label("rate"));

  RateRecord rec;
  rec.grid = grid;
  const std::size_t reps = c.replicates;
  const auto errors = parallel_map(grid.size() * reps, c.threads, [&](std::size_t k) {
    const std::size_t g = k / reps;
    const std::size_t r = k % reps;
    const auto run = run_mcmc_pf(detail::binary_run(c, flow, grid[g], derive_seed(root, grid[g], r)));
    return empirical_integrate(run, n, c.f) - target;
  });
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CompensatedSum sq;
    for (std::size_t r = 0; r < reps; ++r) sq.add(errors[g * reps + r] * errors[g * reps + r]);
    rec.rmse.push_back(std::sqrt(sq.value() / static_cast<double>(reps)));
  }
  const auto zeros = std::count_if(rec.rmse.begin(), rec.rmse.end(), [](double v) { return v <= 1e-15; });
  if (zeros == static_cast<long>(rec.rmse.size())) {
    rec.degenerate = true;
    return rec;
  }
  if (zeros > 0) throw NumericalError("zero RMSE at some but not all grid points");

  const double m = static_cast<double>(grid.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = std::log(static_cast<double>(grid[g]));
    const double y = std::log(rec.rmse[g]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  rec.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  rec.intercept = (sy - rec.slope * sx) / m;
  return rec;
}

struct MeanCheck {
  double mean = 0.0;
  double stderr_ = 0.0;
  double exact = 0.0;
  double z = 0.0;  // 0 when the estimate has no spread and hits the exact value
};

struct UnbiasednessRecord {
  MeanCheck normconst;   // Z_n^N against Z_n
  MeanCheck likelihood;  // gamma_n^N(G_n) = Z_{n+1}^N against gamma_n(G_n)
};

struct UnbiasednessConfig {
  BinaryCheckConfig base;
  std::shared_ptr<const FeynmanKacFlow<int>> flow;  // overrides the binary flow if set
  std::size_t horizon = 2;
  InitPolicy<int> init = InitPolicy<int>::stationary();
};

namespace detail {

inline MeanCheck mean_check(const std::vector<double>& xs, double exact) {
  MeanCheck m;
  m.exact = exact;
  CompensatedSum s;
  for (double x : xs) s.add(x);
  const double count = static_cast<double>(xs.size());
  m.mean = s.value() / count;
  CompensatedSum sq;
  for (double x : xs) sq.add((x - m.mean) * (x - m.mean));
  m.stderr_ = std::sqrt(sq.value() / (count - 1.0) / count);
  const double diff = m.mean - exact;
  if (m.stderr_ > 0.0) {
    m.z = diff / m.stderr_;
  } else {
    m.z = std::abs(diff) <= 1e-12 * std::max(1.0, std::abs(exact))
              ? 0.0
              : std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  return m;
}

}  // namespace detail

/// Replicate means of Z_n^N and gamma_n^N(G_n) against their exact values.
/// Only stationary initialisation is accepted: with burn-in the estimator is
/// not unbiased.
inline UnbiasednessRecord unbiasedness_check(const UnbiasednessConfig& config) {
  const auto& c = config.base;
  c.validate();
  if (config.init.kind != InitPolicy<int>::Kind::stationary) {
    throw ConfigError("unbiasedness holds for stationary initialisation only");
  }
  const std::shared_ptr<const FeynmanKacFlow<int>> flow =
      config.flow ? config.flow : binary_flow(c.alpha, c.flow);
  const std::size_t n = config.horizon;
  const auto ff = enumerate_flow<int>(flow, n);
  const double z_exact = std::exp(ff.log_z[n - 1]);
  const double lik_exact = z_exact * ff.eta_at(n).dot(ff.potential(n));

  const std::uint64_t root = derive_seed(c.seed, hash_label("unbiasedness"));
  const auto est = parallel_map(c.replicates, c.threads, [&](std::size_t r) {
    auto cfg = detail::binary_run(c, flow, c.particles, derive_seed(root, r));
    cfg.horizon = n;
    cfg.init = config.init;
    const auto run = run_mcmc_pf(cfg);
    return std::pair{std::exp(run.log_normconst(n)), std::exp(run.log_normconst(n + 1))};
  });
  std::vector<double> zs, ls;
  for (const auto& [z, l] : est) zs.push_back(z), ls.push_back(l);
  return {detail::mean_check(zs, z_exact), detail::mean_check(ls, lik_exact)};
}

/// Pearson correlation of eta_2^N(f) between replicates 2k and 2k+1.
inline double replicate_correlation(const BinaryCheckConfig& c, std::size_t pairs) {
  c.validate();
  if (pairs < 2) throw ConfigError("correlation needs at least two pairs");
  auto flow = binary_flow(c.alpha, c.flow);
  const std::uint64_t root = derive_seed(c.seed, hash_label("independence"));
  const auto est = parallel_map(2 * pairs, c.threads, [&](std::size_t r) {
    return empirical_integrate(run_mcmc_pf(detail::binary_run(c, flow, c.particles, derive_seed(root, r))), 2, c.f);
  });
  double ma = 0, mb = 0;
  for (std::size_t k = 0; k < pairs; ++k) ma += est[2 * k], mb += est[2 * k + 1];
  ma /= static_cast<double>(pairs);
  mb /= static_cast<double>(pairs);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const double a = est[2 * k] - ma, b = est[2 * k + 1] - mb;
    sab += a * b, saa += a * a, sbb += b * b;
  }
  if (saa == 0.0 || sbb == 0.0) throw NumericalError("correlation undefined for constant estimates");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace seqmc
