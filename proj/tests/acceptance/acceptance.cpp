// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1). Usage: acceptance [path-to-seqmc]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "seqmc/cli/dispatch.hpp"
#include "seqmc/seqmc.hpp"

using namespace seqmc;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool ok = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Verdict()> check;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

const double kEps[] = {0.0, 0.25, 0.5, 0.75, 0.9};

std::shared_ptr<const FiniteSsm> binary(double alpha) {
  return std::make_shared<const FiniteSsm>(binary_toy_model(alpha));
}

const TestFunction<int> kX2 = TestFunction<int>::final_coordinate([](int x) { return static_cast<double>(x); });

Verdict variance_decomposition() {
  double worst = 0.0, worst_oracle = 0.0;
  for (double alpha : {0.1, 0.5, 0.9}) {
    for (auto flow : {make_bootstrap_flow<int>(binary(alpha)), make_fully_adapted_flow<int>(binary(alpha))}) {
      const auto ff = enumerate_flow<int>(flow, 2);
      const Eigen::VectorXd f = tabulate(ff, 2, kX2);
      for (double eps : kEps) {
        const auto km = kernel_matrix(ff, LazyMixtureKernel<int>(eps), 2);
        worst = std::max(worst, variance_decomposition_check(km, f));
        const double eta_gamma = km.stationary.dot(oracle::truncated_gamma(km.transition, km.stationary, f, 1000));
        worst_oracle = std::max(worst_oracle, std::abs(km.stationary.dot(covariance_function(km, f, f)) - eta_gamma));
      }
    }
  }
  return {worst <= 1e-10 && worst_oracle <= 1e-10,
          "max |eta Gamma - var iact| = " + num(worst) + ", vs truncated series " + num(worst_oracle)};
}

Verdict lazy_iact() {
  const auto ff = enumerate_flow<int>(make_bootstrap_flow<int>(binary(0.9)), 2);
  std::vector<Eigen::VectorXd> fs_;
  fs_.push_back(tabulate(ff, 2, kX2));
  Eigen::VectorXd f(4);
  f << 1.0, -2.0, 0.5, 3.0;
  fs_.push_back(f);
  f << 0.0, 0.0, 0.0, 1.0;
  fs_.push_back(f);
  Rng rng(17);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 4; ++k) f(k) = standard_normal(rng);
    fs_.push_back(f);
  }
  double worst = 0.0;
  for (double eps : kEps) {
    const auto km = kernel_matrix(ff, LazyMixtureKernel<int>(eps), 2);
    for (const auto& g : fs_) worst = std::max(worst, std::abs(iact(km, g) - (1 + eps) / (1 - eps)));
  }
  return {worst <= 1e-10, "max |iact - (1+eps)/(1-eps)| = " + num(worst) + " over " + std::to_string(fs_.size()) + " functions"};
}

Verdict figure1_reproduction() {
  const auto grid = parse_grid(0.0, 0.9, 0.1);
  const auto alphas = select_figure1_alphas();
  double worst = 0.0;
  std::vector<Figure1Curves> curves;
  for (double a : {alphas.small_regime, alphas.large_regime}) curves.push_back(figure1_curves(a, grid));
  for (const auto& c : curves) {
    for (const auto& r : c.rows) {
      const double factor = (1 + r.eps) / (1 - r.eps);
      worst = std::max(worst, std::abs(r.mcmc_bpf / r.bpf - factor));
      worst = std::max(worst, std::abs(r.mcmc_faapf / r.faapf - factor));
    }
  }
  const auto& small = curves[0].rows;
  const auto& large = curves[1].rows;
  const bool small_regime = small.front().faapf < 1.0 && small.front().mcmc_faapf < 1.0 && small.back().mcmc_faapf > 1.0;
  const bool large_regime = large.front().faapf > 1.0;
  const auto cross = figure1_crossing(alphas.small_regime);
  return {worst <= 1e-10 && small_regime && large_regime && cross.has_value(),
          "ratio error " + num(worst) + "; alpha " + num(alphas.small_regime) + ": FA-APF/BPF " +
              num(small.front().faapf) + ", crossing eps " + (cross ? num(*cross) : "none") + "; alpha " +
              num(alphas.large_regime) + ": FA-APF/BPF " + num(large.front().faapf)};
}

Verdict clt() {
  std::string detail;
  bool ok = true;
  for (double eps : {0.0, 0.5}) {
    BinaryCheckConfig c;
    c.alpha = 0.9;
    c.eps = eps;
    c.particles = 1000;
    c.replicates = 10000;
    c.seed = 2024;
    const auto rec = clt_variance_check(c);
    const double oracle_sigma2 = oracle::binary_predictor_variance(c.alpha) * (1 + eps) / (1 - eps);
    const bool exact_ok = std::abs(rec.exact - oracle_sigma2) <= 1e-12 * oracle_sigma2;
    ok = ok && rec.within && exact_ok;
    detail += (detail.empty() ? "" : "; ") + std::string("eps ") + num(eps) + ": empirical " + num(rec.empirical) +
              " in [" + num(rec.lower) + ", " + num(rec.upper) + "]" + (exact_ok ? "" : " (exact mismatch)");
  }
  return {ok, detail};
}

Verdict l2_rate() {
  std::string detail;
  bool ok = true;
  for (double eps : {0.0, 0.5}) {
    BinaryCheckConfig c;
    c.eps = eps;
    c.replicates = 500;
    c.seed = 11;
    const auto rec = l2_rate_check(c, default_rate_grid());
    ok = ok && !rec.degenerate && rec.slope >= -0.6 && rec.slope <= -0.4;
    detail += (detail.empty() ? "" : "; ") + std::string("eps ") + num(eps) + ": slope " + num(rec.slope);
  }
  return {ok, detail};
}

Verdict unbiasedness() {
  UnbiasednessConfig c;
  c.base.eps = 0.5;
  c.base.particles = 64;
  c.base.replicates = 10000;
  c.base.seed = 99;
  const auto rec = unbiasedness_check(c);
  const double exact = 0.5 * (oracle::BinaryPaths::g(0) + oracle::BinaryPaths::g(1));
  const bool exact_ok = std::abs(rec.normconst.exact - exact) <= 1e-15;
  return {exact_ok && std::abs(rec.normconst.z) <= 4.0,
          "mean " + num(rec.normconst.mean) + ", exact " + num(exact) + ", z " + num(rec.normconst.z)};
}

Verdict figure2_reproduction() {
  bool ok = true;
  std::string detail;
  for (std::size_t d : {1u, 5u}) {
    Figure2Config c;
    c.dimension = d;
    c.seed = 7;
    const auto t = figure2_experiment(c);
    double var_bpf = 0, var_fa = 0;
    for (const auto& s : t.summary()) {
      const bool in = std::abs(s.mean - 1.0) <= 3.0 * s.stderr_;
      ok = ok && in;
      if (!in) detail += " d=" + std::to_string(d) + " " + s.algorithm + " mean " + num(s.mean) + " outside 1 +- " + num(3 * s.stderr_) + ";";
      if (s.algorithm == "BPF") var_bpf = s.variance;
      if (s.algorithm == "MCMC-FA-APF") var_fa = s.variance;
    }
    if (d == 5) {
      ok = ok && var_fa < var_bpf;
      detail += " d=5 var MCMC-FA-APF " + num(var_fa) + " vs BPF " + num(var_bpf);
    }
  }
  return {ok, "all means within 1 +- 3 stderr;" + detail};
}

/// Exact filter mean and log-likelihood at n read off an enumerated flow.
std::pair<double, double> exact_from_flow(const std::shared_ptr<const SsmFlow<int>>& flow, std::size_t n) {
  const auto ff = enumerate_flow<int>(flow, n);
  double num_ = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ff.path_count(n); ++i) {
    const auto path = ff.paths.path(n, i);
    const double w = ff.eta_at(n)(static_cast<Eigen::Index>(i)) * std::exp(flow->log_filter_weight(n, path));
    num_ += w * path.back();
    den += w;
  }
  return {num_ / den, ff.log_z[n - 1] + std::log(den) + flow->log_likelihood_offset()};
}

Verdict oracle_equivalences() {
  std::vector<std::shared_ptr<const FiniteSsm>> models = {binary(0.1), binary(0.5), binary(0.9)};
  models.push_back(std::make_shared<const FiniteSsm>(FiniteSsm::with_emissions(
      {0.2, 0.3, 0.5}, {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}},
      {{0.9, 0.1}, {0.5, 0.5}, {0.1, 0.9}}, {0, 1, 1, 0})));
  models.push_back(std::make_shared<const FiniteSsm>(discretised_linear_gaussian({0.4, -1.2, 0.7}, 21)));
  double filter_gap = 0.0, lik_gap = 0.0, behaviour_gap = 0.0;
  for (const auto& m : models) {
    const auto q = exact_quantities(*m);
    for (std::size_t n = 1; n <= m->horizon(); ++n) {
      double fwd_mean = 0.0;
      for (std::size_t x = 0; x < m->states(); ++x) fwd_mean += static_cast<double>(x) * q.filter[n - 1][x];
      const double fwd_lik = std::log(q.likelihood[n - 1]);
      const std::vector<std::shared_ptr<const SsmFlow<int>>> flows = {
          make_bootstrap_flow<int>(m), make_fully_adapted_flow<int>(m),
          make_auxiliary_flow<int>(m, bootstrap_auxiliary<int>(m)),
          make_auxiliary_flow<int>(m, adapted_auxiliary<int>(m))};
      for (const auto& flow : flows) {
        const auto [mean, lik] = exact_from_flow(flow, n);
        filter_gap = std::max(filter_gap, std::abs(mean - fwd_mean));
        lik_gap = std::max(lik_gap, std::abs(lik - fwd_lik));
      }
    }
    // same seed, same particles: the APF special cases behave as their targets
    const std::size_t n = m->horizon();
    const auto f = TestFunction<int>::final_coordinate([](int x) { return static_cast<double>(x); });
    const std::pair<std::shared_ptr<const SsmFlow<int>>, std::shared_ptr<const SsmFlow<int>>> pairs[] = {
        {make_bootstrap_flow<int>(m), make_auxiliary_flow<int>(m, bootstrap_auxiliary<int>(m))},
        {make_fully_adapted_flow<int>(m), make_auxiliary_flow<int>(m, adapted_auxiliary<int>(m))}};
    for (const auto& [target, apf] : pairs) {
      RunConfig<int> cfg;
      cfg.kernel = std::make_shared<PerfectMixingKernel<int>>();
      cfg.particles = 200;
      cfg.horizon = n;
      cfg.seed = 5;
      cfg.flow = target;
      const auto a = run_mcmc_pf(cfg);
      cfg.flow = apf;
      const auto b = run_mcmc_pf(cfg);
      if (a.cloud(n).states != b.cloud(n).states) behaviour_gap = std::max(behaviour_gap, 1.0);
      behaviour_gap = std::max(behaviour_gap, std::abs(log_likelihood_estimate(a, *target, n) -
                                                       log_likelihood_estimate(b, *apf, n)));
      behaviour_gap = std::max(behaviour_gap, std::abs(filter_estimate(a, *target, n, f) -
                                                       filter_estimate(b, *apf, n, f)));
    }
  }
  double kalman_gap = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const auto sample = simulate_linear_gaussian(1, 3, rng);
    for (std::size_t n = 1; n <= 3; ++n) {
      std::vector<double> ys;
      std::vector<std::vector<double>> yv;
      for (std::size_t t = 0; t < n; ++t) ys.push_back(sample.observations[t][0]), yv.push_back(sample.observations[t]);
      kalman_gap = std::max(kalman_gap, std::abs(kalman_log_marginal_likelihood(1, yv) - oracle::quadrature_log_likelihood(ys)));
    }
  }
  return {filter_gap <= 1e-10 && lik_gap <= 1e-10 && behaviour_gap <= 1e-10 && kalman_gap <= 1e-6,
          "filter gap " + num(filter_gap) + ", log-likelihood gap " + num(lik_gap) + ", APF reduction gap " +
              num(behaviour_gap) + ", Kalman vs quadrature " + num(kalman_gap)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism(const std::string& binary_path) {
  const fs::path dir = fs::temp_directory_path() / "seqmc_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"run-filter", "--N 200 --replicates 5 --seed 3 --eps 0.5"},
      {"figure1", "--eps-grid 0:0.9:0.1"},
      {"figure2", "--d 1 --N 1000 --replicates 100 --seed 7"},
      {"clt-check", "--N 200 --replicates 500 --seed 1"},
      {"rate-check", "--grid 32 64 128 --replicates 50 --seed 1"},
      {"unbiasedness", "--replicates 500 --seed 1"},
      {"exact-analyze", "--eps 0.25"}};
  auto invoke = [&](const std::string& cmd, const std::string& args, const fs::path& out) {
    if (!binary_path.empty()) {
      const std::string line = "\"" + binary_path + "\" " + cmd + " " + args + " --out \"" + out.string() + "\" > /dev/null 2>&1";
      return std::system(line.c_str()) == 0;
    }
    std::vector<std::string> argv = {"seqmc", cmd};
    std::istringstream ss(args);
    for (std::string a; ss >> a;) argv.push_back(a);
    argv.push_back("--out");
    argv.push_back(out.string());
    std::vector<const char*> ptrs;
    for (const auto& a : argv) ptrs.push_back(a.c_str());
    std::ostringstream sink;
    return cli::dispatch(static_cast<int>(ptrs.size()), ptrs.data(), sink, sink) == 0;
  };
  std::string failures;
  for (const auto& [cmd, args] : runs) {
    const auto a = dir / (cmd + "-a.csv"), b = dir / (cmd + "-b.csv"), c = dir / (cmd + "-c.csv");
    const bool ran = invoke(cmd, args, a) && invoke(cmd, args + " --threads 1", b) &&
                     invoke(cmd, "--config " + (dir / (cmd + "-a.config.json")).string(), c);
    const std::string ref = slurp(a);
    if (!ran || ref.empty() || ref != slurp(b) || ref != slurp(c)) failures += " " + cmd;
  }
  fs::remove_all(dir);
  return {failures.empty(), failures.empty() ? std::to_string(runs.size()) + " subcommands byte-identical across reruns, thread counts and sidecar replay"
                                             : "differences in:" + failures};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string binary_path = argc > 1 ? argv[1] : "";
  const std::vector<Criterion> criteria = {
      {1, "exact variance decomposition", 1.0, variance_decomposition},
      {2, "lazy-kernel IACT", 1.0, lazy_iact},
      {3, "figure 1 exact curves", 5.0, figure1_reproduction},
      {4, "CLT variance", 120.0, clt},
      {5, "L2 rate", 300.0, l2_rate},
      {6, "unbiasedness of Z_n", 60.0, unbiasedness},
      {7, "figure 2 desk scale", 600.0, figure2_reproduction},
      {8, "oracle equivalences", 30.0, oracle_equivalences},
      {9, "CLI determinism", 600.0, [&] { return determinism(binary_path); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool ok = v.ok && in_time;
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << v.detail << " ("
              << num(secs) << " s" << (in_time ? "" : ", over the " + num(c.limit_seconds) + " s limit") << ")"
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
