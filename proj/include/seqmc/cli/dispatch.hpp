#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seqmc/analysis.hpp"
#include "seqmc/cli/config.hpp"
#include "seqmc/engine.hpp"
#include "seqmc/errors.hpp"
#include "seqmc/experiments.hpp"
#include "seqmc/kernels.hpp"
#include "seqmc/ssm.hpp"

namespace seqmc::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kContractViolation = 3 };

/// Command-line values; unset options leave the config untouched.
struct Overrides {
  std::string config_path;
  std::string out;
  unsigned threads = 0;
  bool assert_contracts = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> particles;
  std::optional<std::size_t> replicates;
  std::optional<std::size_t> horizon;
  std::optional<double> alpha;
  std::optional<double> eps;
  std::optional<std::string> kernel;
  std::optional<std::string> flow;
  std::optional<std::string> eps_grid;
  std::vector<std::size_t> dimensions;
  std::vector<std::size_t> grid;
  bool paper_scale = false;
};

struct Outcome {
  ReplicateTable table;
  bool contract_ok = true;
  std::vector<std::string> notes;  // printed to stdout
};

namespace detail {

inline std::vector<double> parse_grid_spec(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError("bad grid specification '" + spec + "', expected from:to:step");
    }
    parts.push_back(v);
  }
  if (parts.size() != 3) throw ConfigError("bad grid specification '" + spec + "', expected from:to:step");
  return parse_grid(parts[0], parts[1], parts[2]);
}

inline void apply_overrides(ExperimentConfig& c, const Overrides& o) {
  if (o.seed) c.run.seed = *o.seed;
  if (o.particles) c.run.particles = *o.particles;
  if (o.replicates) c.run.replicates = *o.replicates;
  if (o.horizon) c.model.horizon = *o.horizon;
  if (o.alpha) {
    if (c.command == "figure1") {
      c.figure1.alphas = {*o.alpha};
    } else {
      c.model.alpha = *o.alpha;
    }
  }
  if (o.eps) {
    c.kernel.eps = *o.eps;
    if (!o.kernel && c.kernel.kind == "perfect-mixing" && *o.eps > 0.0) c.kernel.kind = "lazy-mixture";
  }
  if (o.kernel) c.kernel.kind = *o.kernel;
  if (o.flow) c.flow = *o.flow;
  if (o.eps_grid) c.figure1.eps_grid = parse_grid_spec(*o.eps_grid);
  if (!o.dimensions.empty()) c.figure2.dimensions = o.dimensions;
  if (!o.grid.empty()) c.rate.grid = o.grid;
  if (o.paper_scale) c.figure2.paper_scale = true;
}

inline void check_one_of(const std::string& value, const std::string& what,
                         const std::vector<std::string>& allowed) {
  for (const auto& a : allowed) {
    if (value == a) return;
  }
  std::string list;
  for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
  throw ConfigError(what + " '" + value + "' is not one of: " + list);
}

inline FlowKind flow_kind(const std::string& s) {
  check_one_of(s, "flow", {"bootstrap", "fully-adapted"});
  return s == "bootstrap" ? FlowKind::bootstrap : FlowKind::fully_adapted;
}

inline std::string algorithm_label(const ExperimentConfig& c) {
  const std::string base = c.flow == "bootstrap" ? "BPF" : "FA-APF";
  return c.kernel.kind == "perfect-mixing" ? base : "MCMC-" + base;
}

/// Lazy-mixture epsilon for the binary Monte Carlo checks.
inline double check_epsilon(const ExperimentConfig& c) {
  check_one_of(c.kernel.kind, "kernel kind for this check", {"perfect-mixing", "lazy-mixture"});
  return c.kernel.kind == "perfect-mixing" ? 0.0 : c.kernel.eps;
}

inline BinaryCheckConfig binary_check(const ExperimentConfig& c, unsigned threads) {
  if (c.model.type != "binary") throw ConfigError(c.command + " runs on the binary model only");
  if (c.model.horizon != 0 && c.model.horizon != 2) throw ConfigError("the binary model has horizon 2");
  BinaryCheckConfig b;
  b.alpha = c.model.alpha;
  b.eps = check_epsilon(c);
  b.flow = flow_kind(c.flow);
  b.particles = c.run.particles;
  b.replicates = c.run.replicates;
  b.seed = c.run.seed;
  b.threads = threads;
  b.validate();
  return b;
}

inline std::shared_ptr<const FiniteSsm> finite_model(const ModelBlock& m) {
  if (m.type == "binary") {
    if (!(m.alpha > 0.0 && m.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    return std::make_shared<const FiniteSsm>(binary_toy_model(m.alpha));
  }
  if (m.type == "custom-finite") {
    return std::make_shared<const FiniteSsm>(
        FiniteSsm::with_emissions(m.initial, m.transition, m.emission, m.data));
  }
  throw ConfigError("model type '" + m.type + "' is not a finite model");
}

template <class State>
std::shared_ptr<const MarkovKernel<State>> make_kernel(const KernelBlock& k,
                                                       std::shared_ptr<const FeynmanKacFlow<State>> flow,
                                                       std::shared_ptr<const RandomWalk<State>> walk) {
  check_one_of(k.kind, "kernel kind", {"perfect-mixing", "lazy-mixture", "independent-mh", "ancestor-rw"});
  if (k.kind == "perfect-mixing") return std::make_shared<PerfectMixingKernel<State>>();
  if (k.kind == "lazy-mixture") return std::make_shared<LazyMixtureKernel<State>>(k.eps);
  check_one_of(k.weight, "ancestor weight", {"uniform", "potential"});
  auto weight = k.weight == "uniform" ? AncestorWeight<State>::uniform() : AncestorWeight<State>::potential();
  if (k.kind == "independent-mh") {
    return std::make_shared<IndependentMhKernel<State>>(weight,
                                                        std::make_shared<MutationProposal<State>>(flow));
  }
  return std::make_shared<AncestorRandomWalkKernel<State>>(weight, walk);
}

struct FilterReferences {
  std::vector<double> log_likelihood;  // log L_p, p = 1..n
  std::vector<double> filter_mean;     // pi_p(x), NaN if unavailable
};

template <class State>
Outcome run_filter_on(const ExperimentConfig& c, std::shared_ptr<const StateSpaceModel<State>> model,
                      std::shared_ptr<const RandomWalk<State>> walk, const FilterReferences& refs,
                      const TestFunction<State>& f, unsigned threads) {
  const std::size_t n = c.model.horizon;
  const FlowKind kind = flow_kind(c.flow);
  std::shared_ptr<const StateSpaceFlow<State>> flow = std::make_shared<const SsmFlow<State>>(model, kind);
  check_one_of(c.run.init, "init policy", {"stationary", "burnin"});
  check_one_of(c.run.storage, "storage mode", {"marginal", "path"});
  for (const auto& e : c.run.estimators) {
    check_one_of(e, "estimator", {"normconst", "log-likelihood", "filter-mean", "acceptance-rate"});
  }
  if (c.run.replicates < 1) throw ConfigError("need at least one replicate");

  RunConfig<State> base;
  base.flow = flow;
  base.kernel = make_kernel<State>(c.kernel, flow, walk);
  base.particles = c.run.particles;
  base.horizon = n;
  base.storage = c.run.storage == "path" ? StorageMode::path : StorageMode::marginal;
  if (c.run.init == "burnin") {
    base.init = InitPolicy<State>::burnin(std::make_shared<const TransitionProposal<State>>(model), c.run.burnin);
  }
  base.validate();

  const auto log_l = [&](std::size_t p) { return p == 0 ? 0.0 : refs.log_likelihood[p - 1]; };
  const double log_z_exact = kind == FlowKind::bootstrap ? log_l(n - 1) : log_l(n) - log_l(1);
  const std::string label = algorithm_label(c);
  const std::uint64_t root = derive_seed(c.run.seed, hash_label("run-filter"));

  auto blocks = parallel_map(c.run.replicates, threads, [&](std::size_t r) {
    auto cfg = base;
    cfg.seed = derive_seed(root, r);
    const auto run = run_mcmc_pf(cfg);
    std::vector<ReplicateRow> rows;
    for (const auto& e : c.run.estimators) {
      ReplicateRow row{r, cfg.seed, label, cfg.particles, n, e, 0.0, 0.0};
      if (e == "normconst") {
        row.value = std::exp(run.log_normconst(n));
        row.reference = std::exp(log_z_exact);
      } else if (e == "log-likelihood") {
        row.value = log_likelihood_estimate(run, *flow, n);
        row.reference = log_l(n);
      } else if (e == "filter-mean") {
        row.value = filter_estimate(run, *flow, n, f);
        row.reference = refs.filter_mean[n - 1];
      } else {
        row.value = n == 1 ? std::numeric_limits<double>::quiet_NaN() : run.acceptance_rate(n);
        row.reference = std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(std::move(row));
    }
    return rows;
  });
  Outcome out;
  for (auto& b : blocks) {
    for (auto& row : b) out.table.add(std::move(row));
  }
  return out;
}

inline Outcome run_filter(ExperimentConfig& c, unsigned threads) {
  check_one_of(c.model.type, "model type", {"binary", "linear-gaussian", "custom-finite"});
  if (c.model.type == "linear-gaussian") {
    using Vec = std::vector<double>;
    if (c.model.horizon == 0) c.model.horizon = 10;
    if (c.model.d < 1) throw ConfigError("dimension must be at least 1");
    auto ys = c.model.observations;
    if (ys.empty()) {
      Rng rng(derive_seed(c.run.seed, hash_label("observations")));
      ys = simulate_linear_gaussian(c.model.d, c.model.horizon, rng).observations;
    }
    auto model = std::make_shared<const LinearGaussianSsm>(c.model.d, ys);
    model->check_time(c.model.horizon);
    FilterReferences refs;
    for (std::size_t p = 1; p <= c.model.horizon; ++p) {
      refs.log_likelihood.push_back(kalman_log_marginal_likelihood(*model, p));
      refs.filter_mean.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    const double scale = c.kernel.scale > 0.0 ? c.kernel.scale : 1.0 / std::sqrt(static_cast<double>(c.model.d));
    auto walk = std::make_shared<const GaussianRandomWalk>(scale);
    const auto f = TestFunction<Vec>::final_coordinate([](const Vec& x) { return x[0]; });
    return run_filter_on<Vec>(c, model, walk, refs, f, threads);
  }
  auto model = finite_model(c.model);
  if (c.model.horizon == 0) c.model.horizon = model->horizon();
  model->check_time(c.model.horizon);
  const auto q = exact_quantities(*model);
  FilterReferences refs;
  for (std::size_t p = 0; p < model->horizon(); ++p) {
    refs.log_likelihood.push_back(std::log(q.likelihood[p]));
    double m = 0.0;
    for (std::size_t x = 0; x < q.filter[p].size(); ++x) m += static_cast<double>(x) * q.filter[p][x];
    refs.filter_mean.push_back(m);
  }
  auto walk = std::make_shared<const DiscreteRandomWalk>(static_cast<int>(model->states()),
                                                         std::vector<double>{1.0});
  const auto f = TestFunction<int>::final_coordinate([](int x) { return static_cast<double>(x); });
  return run_filter_on<int>(c, model, walk, refs, f, threads);
}

inline Outcome figure1(ExperimentConfig& c) {
  Outcome out;
  const bool defaulted = c.figure1.alphas.empty();
  if (defaulted) {
    const auto sel = select_figure1_alphas();
    c.figure1.alphas = {sel.small_regime, sel.large_regime};
    out.notes.push_back("alpha defaults from scan: small-regime " + format_number(sel.small_regime) +
                        ", large-regime " + format_number(sel.large_regime));
  }
  std::vector<Figure1Curves> curves;
  for (double a : c.figure1.alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    curves.push_back(figure1_curves(a, c.figure1.eps_grid));
  }
  out.table = figure1_table(curves);
  for (const auto& cv : curves) {
    for (const auto& r : cv.rows) {
      if (std::abs(r.mcmc_bpf - (1 + r.eps) / (1 - r.eps)) > 1e-10) out.contract_ok = false;
    }
    const auto cross = figure1_crossing(cv.alpha);
    out.notes.push_back("alpha " + format_number(cv.alpha) + ": FA-APF/BPF = " +
                        format_number(cv.rows.front().faapf) +
                        (cross ? ", MCMC-FA-APF crosses BPF at eps " + format_number(*cross) : ""));
  }
  if (defaulted) {
    const bool small_ok = curves[0].rows.front().faapf < 1.0 && figure1_crossing(curves[0].alpha).has_value();
    const bool large_ok = curves[1].rows.front().faapf > 1.0;
    if (!small_ok || !large_ok) out.contract_ok = false;
  }
  return out;
}

inline Outcome figure2(ExperimentConfig& c, unsigned threads) {
  if (c.model.type != "linear-gaussian") throw ConfigError("figure2 runs on the linear-gaussian model");
  if (c.model.horizon == 0) c.model.horizon = 10;
  if (c.figure2.paper_scale) {
    c.run.particles = 10000;
    c.run.replicates = 1000;
  }
  if (c.figure2.dimensions.empty()) throw ConfigError("figure2 needs at least one dimension");
  Outcome out;
  for (std::size_t d : c.figure2.dimensions) {
    Figure2Config f;
    f.dimension = d;
    f.particles = c.run.particles;
    f.replicates = c.run.replicates;
    f.horizon = c.model.horizon;
    f.burnin = c.run.burnin;
    f.compensate_burnin = c.run.compensate_burnin;
    f.seed = c.run.seed;
    f.threads = threads;
    f.algorithms = c.figure2.algorithms;
    const auto t = figure2_experiment(f);
    for (const auto& s : t.skipped()) out.notes.push_back("d=" + std::to_string(d) + ": skipped " + s.algorithm + ": " + s.reason);
    double var_bpf = -1, var_mcmc_fa = -1;
    for (const auto& s : t.summary()) {
      if (!(std::abs(s.mean - 1.0) <= 3.0 * s.stderr_)) out.contract_ok = false;
      if (s.algorithm == "BPF") var_bpf = s.variance;
      if (s.algorithm == "MCMC-FA-APF") var_mcmc_fa = s.variance;
      out.notes.push_back("d=" + std::to_string(d) + " " + s.algorithm + ": mean " + format_number(s.mean) +
                          ", variance " + format_number(s.variance));
    }
    if (d == 5 && var_bpf >= 0 && var_mcmc_fa >= 0 && !(var_mcmc_fa < var_bpf)) out.contract_ok = false;
    for (const auto& row : t.rows()) out.table.add(row);
  }
  return out;
}

inline Outcome clt_check(ExperimentConfig& c, unsigned threads) {
  const auto b = binary_check(c, threads);
  const auto rec = clt_variance_check(b);
  Outcome out;
  const std::string label = algorithm_label(c);
  const auto row = [&](const std::string& est, double v, double ref) {
    out.table.add({0, c.run.seed, label, b.particles, 2, est, v, ref});
  };
  row("empirical-variance", rec.empirical, rec.exact);
  row("z", rec.z, 0.0);
  row("band-lower", rec.lower, rec.exact);
  row("band-upper", rec.upper, rec.exact);
  out.contract_ok = rec.within;
  out.notes.push_back("empirical " + format_number(rec.empirical) + ", exact " + format_number(rec.exact) +
                      ", z " + format_number(rec.z) + (rec.degenerate ? " (degenerate)" : ""));
  return out;
}

inline Outcome rate_check(ExperimentConfig& c, unsigned threads) {
  auto b = binary_check(c, threads);
  const auto rec = l2_rate_check(b, c.rate.grid);
  Outcome out;
  const std::string label = algorithm_label(c);
  for (std::size_t g = 0; g < rec.grid.size(); ++g) {
    out.table.add({g, c.run.seed, label, rec.grid[g], 2, "rmse", rec.rmse[g],
                   std::numeric_limits<double>::quiet_NaN()});
  }
  out.table.add({0, c.run.seed, label, 0, 2, "slope", rec.slope, -0.5});
  out.table.add({0, c.run.seed, label, 0, 2, "intercept", rec.intercept,
                 std::numeric_limits<double>::quiet_NaN()});
  if (rec.degenerate) {
    out.notes.push_back("degenerate test function: zero error at every N");
  } else {
    out.contract_ok = c.rate.slope_min <= rec.slope && rec.slope <= c.rate.slope_max;
    out.notes.push_back("slope " + format_number(rec.slope));
  }
  return out;
}

inline Outcome unbiasedness(ExperimentConfig& c, unsigned threads) {
  UnbiasednessConfig u;
  u.base = binary_check(c, threads);
  u.horizon = 2;
  const auto rec = unbiasedness_check(u);
  Outcome out;
  const std::string label = algorithm_label(c);
  const auto rows = [&](const std::string& name, const MeanCheck& m) {
    out.table.add({0, c.run.seed, label, u.base.particles, 2, name + "-mean", m.mean, m.exact});
    out.table.add({0, c.run.seed, label, u.base.particles, 2, name + "-stderr", m.stderr_,
                   std::numeric_limits<double>::quiet_NaN()});
    out.table.add({0, c.run.seed, label, u.base.particles, 2, name + "-z", m.z, 0.0});
    if (!(std::abs(m.z) <= 4.0)) out.contract_ok = false;
    out.notes.push_back(name + ": mean " + format_number(m.mean) + ", exact " + format_number(m.exact) +
                        ", z " + format_number(m.z));
  };
  rows("normconst", rec.normconst);
  rows("likelihood", rec.likelihood);
  return out;
}

inline Estimator parse_estimator(const std::string& s) {
  check_one_of(s, "estimator", {"predictor", "unnormalized", "bpf-filter", "faapf-filter"});
  if (s == "predictor") return Estimator::predictor;
  if (s == "unnormalized") return Estimator::unnormalized;
  if (s == "bpf-filter") return Estimator::bpf_filter;
  return Estimator::faapf_filter;
}

inline Outcome exact_analyze(ExperimentConfig& c) {
  auto model = finite_model(c.model);
  if (c.model.horizon == 0) c.model.horizon = model->horizon();
  if (c.analysis.time == 0) c.analysis.time = c.model.horizon;
  model->check_time(c.model.horizon);
  if (c.analysis.time > c.model.horizon) throw ConfigError("analysis time beyond the horizon");
  const Estimator est = parse_estimator(c.analysis.estimator);
  const FlowKind kind = flow_kind(c.flow);
  if (est == Estimator::bpf_filter && kind != FlowKind::bootstrap) {
    throw ConfigError("bpf-filter variance needs the bootstrap flow");
  }
  if (est == Estimator::faapf_filter && kind != FlowKind::fully_adapted) {
    throw ConfigError("faapf-filter variance needs the fully-adapted flow");
  }
  const std::size_t n = c.analysis.time;
  std::shared_ptr<const FeynmanKacFlow<int>> flow = std::make_shared<const SsmFlow<int>>(model, kind);
  const auto ff = enumerate_flow<int>(flow, n);
  auto walk = std::make_shared<const DiscreteRandomWalk>(static_cast<int>(model->states()),
                                                         std::vector<double>{1.0});
  const auto kernel = make_kernel<int>(c.kernel, flow, walk);
  const std::vector<std::shared_ptr<const MarkovKernel<int>>> kernels(n, kernel);
  const auto f = TestFunction<int>::final_coordinate([](int x) { return static_cast<double>(x); });
  const auto av = asymptotic_variance(ff, kernels, n, f, est);

  Outcome out;
  const std::string label = algorithm_label(c);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t p = 1; p <= n; ++p) {
    const auto& t = av.terms[p - 1];
    const double beta = dobrushin(kernel_matrix(ff, *kernel, p));
    out.table.add({p, 0, label, 0, p, "variance", t.variance, nan});
    out.table.add({p, 0, label, 0, p, "iact", t.iact, nan});
    out.table.add({p, 0, label, 0, p, "contribution", t.contribution, nan});
    out.table.add({p, 0, label, 0, p, "dobrushin", beta, nan});
  }
  out.table.add({0, 0, label, 0, n, "asymptotic-variance[" + c.analysis.estimator + "]", av.total, nan});
  out.notes.push_back("asymptotic variance " + format_number(av.total));
  return out;
}

inline std::string strip_csv(const std::string& path) {
  const std::string ext = ".csv";
  if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
    return path.substr(0, path.size() - ext.size());
  }
  return path;
}

}  // namespace detail

/// Output file names: <out>, <stem>.summary.csv and <stem>.config.json where
/// <stem> is <out> without a trailing ".csv".
struct OutputPaths {
  std::string csv, summary, sidecar;
  explicit OutputPaths(const std::string& out)
      : csv(out),
        summary(detail::strip_csv(out) + ".summary.csv"),
        sidecar(detail::strip_csv(out) + ".config.json") {}
};

inline Outcome run_command(ExperimentConfig& c, unsigned threads) {
  const auto& cmd = c.command;
  if (cmd == "run-filter") return detail::run_filter(c, threads);
  if (cmd == "figure1") return detail::figure1(c);
  if (cmd == "figure2") return detail::figure2(c, threads);
  if (cmd == "clt-check") return detail::clt_check(c, threads);
  if (cmd == "rate-check") return detail::rate_check(c, threads);
  if (cmd == "unbiasedness") return detail::unbiasedness(c, threads);
  if (cmd == "exact-analyze") return detail::exact_analyze(c);
  throw ConfigError("unknown subcommand '" + cmd + "'");
}

inline void add_common_options(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_path, "JSON config file");
  sub->add_option("--out", o.out, "output CSV path (default <command>.csv)");
  sub->add_option("--threads", o.threads, "worker threads (default SEQMC_THREADS or all cores)");
  sub->add_flag("--assert", o.assert_contracts, "exit 3 if the experiment's contract fails");
  sub->add_option("--seed", o.seed, "root seed");
  sub->add_option("--N", o.particles, "particles");
  sub->add_option("--replicates", o.replicates, "independent replicates");
  sub->add_option("--horizon", o.horizon, "time horizon n");
  sub->add_option("--alpha", o.alpha, "binary model persistence alpha");
  sub->add_option("--eps", o.eps, "lazy-mixture epsilon");
  sub->add_option("--kernel", o.kernel, "perfect-mixing | lazy-mixture | independent-mh | ancestor-rw");
  sub->add_option("--flow", o.flow, "bootstrap | fully-adapted");
}

/// Parses argv, runs the subcommand and writes its outputs.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Sequential Monte Carlo experiments", "seqmc"};
  app.require_subcommand(1, 1);
  Overrides o;
  const std::vector<std::pair<std::string, std::string>> help = {
      {"run-filter", "run a (MCMC) particle filter and report estimates per replicate"},
      {"figure1", "exact relative asymptotic variances on the binary model"},
      {"figure2", "relative marginal-likelihood estimates on the linear Gaussian model"},
      {"clt-check", "empirical vs exact asymptotic variance"},
      {"rate-check", "slope of log RMSE against log N"},
      {"unbiasedness", "replicate mean of the normalising constant estimate"},
      {"exact-analyze", "exact variance terms, IACT and Dobrushin coefficients"}};
  for (const auto& [name, desc] : help) {
    auto* sub = app.add_subcommand(name, desc);
    add_common_options(sub, o);
    if (name == "figure1") sub->add_option("--eps-grid", o.eps_grid, "epsilon grid from:to:step");
    if (name == "figure2") {
      sub->add_option("--d", o.dimensions, "state dimensions");
      sub->add_flag("--paper-scale", o.paper_scale, "N = 10000 and 1000 replicates");
    }
    if (name == "rate-check") sub->add_option("--grid", o.grid, "particle counts");
  }

  if (argc > 1 && argv[1][0] != '-') {
    const std::string name = argv[1];
    bool known = false;
    for (const auto& c : commands()) known = known || c == name;
    if (!known) {
      err << "error: unknown subcommand '" << name << "'\n" << app.help();
      return kConfigError;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  ExperimentConfig config;
  unsigned threads = 0;
  try {
    config = default_config(command);
    if (!o.config_path.empty()) apply_json(config, load_json(o.config_path));
    detail::apply_overrides(config, o);
    threads = resolve_threads(o.threads);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  const OutputPaths paths(o.out.empty() ? command + ".csv" : o.out);
  std::ofstream csv(paths.csv), summary(paths.summary), sidecar(paths.sidecar);
  const auto discard = [&] {
    csv.close(), summary.close(), sidecar.close();
    std::error_code ec;
    for (const auto* p : {&paths.csv, &paths.summary, &paths.sidecar}) std::filesystem::remove(*p, ec);
  };
  if (!csv || !summary || !sidecar) {
    discard();
    err << "error: cannot write output '" << paths.csv << "'\n";
    return kConfigError;
  }

  Outcome result;
  try {
    result = run_command(config, threads);
  } catch (const ConfigError& e) {
    discard();
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InputError& e) {
    discard();
    err << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    discard();
    err << "error: " << e.what() << "\n";
    return kFailure;
  }

  write_csv(csv, result.table);
  write_summary_csv(summary, result.table);
  sidecar << to_json(config).dump(2) << '\n';
  csv.close(), summary.close(), sidecar.close();
  if (!csv || !summary || !sidecar) {
    err << "error: failed writing outputs\n";
    return kConfigError;
  }
  for (const auto& note : result.notes) out << note << '\n';
  out << "wrote " << paths.csv << ", " << paths.summary << ", " << paths.sidecar << '\n';
  if (!result.contract_ok) {
    err << "contract violated\n";
    if (o.assert_contracts) return kContractViolation;
  }
  return kOk;
}

}  // namespace seqmc::cli
