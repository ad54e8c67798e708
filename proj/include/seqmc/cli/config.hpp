#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqmc/errors.hpp"
#include "seqmc/experiments.hpp"

namespace seqmc::cli {

using Json = nlohmann::json;

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"run-filter",   "figure1",      "figure2",
                                                  "clt-check",    "rate-check",   "unbiasedness",
                                                  "exact-analyze"};
  return names;
}

struct ModelBlock {
  std::string type = "binary";  // binary | linear-gaussian | custom-finite
  double alpha = 0.9;
  std::size_t d = 1;
  std::size_t horizon = 0;      // 0: the model's own horizon (10 for linear-gaussian)
  std::vector<std::vector<double>> observations;  // linear-gaussian; simulated if empty
  std::vector<double> initial;                    // custom-finite
  std::vector<std::vector<double>> transition;
  std::vector<std::vector<double>> emission;
  std::vector<int> data;
};

struct KernelBlock {
  std::string kind = "perfect-mixing";  // perfect-mixing | lazy-mixture | independent-mh | ancestor-rw
  double eps = 0.0;
  std::string weight = "potential";     // ancestor weight F: uniform | potential
  double scale = 0.0;                   // random-walk scale; 0 means 1/sqrt(d)
};

struct RunBlock {
  std::size_t particles = 1000;
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
  std::string init = "stationary";  // stationary | burnin
  std::size_t burnin = 100;
  bool compensate_burnin = false;
  std::string storage = "marginal";  // marginal | path
  std::vector<std::string> estimators = {"normconst"};
};

struct Figure1Block {
  std::vector<double> alphas;  // empty: both regime defaults from the alpha scan
  std::vector<double> eps_grid = parse_grid(0.0, 0.9, 0.1);
};

struct Figure2Block {
  std::vector<std::size_t> dimensions = {1, 5};
  bool paper_scale = false;
  std::vector<std::string> algorithms = {"BPF", "MCMC-BPF", "FA-APF", "MCMC-FA-APF"};
};

struct RateBlock {
  std::vector<std::size_t> grid = default_rate_grid();
  double slope_min = -0.6;
  double slope_max = -0.4;
};

struct AnalysisBlock {
  std::string estimator = "bpf-filter";  // predictor | unnormalized | bpf-filter | faapf-filter
  std::size_t time = 0;                  // 0: the model horizon
};

struct ExperimentConfig {
  std::string command;
  ModelBlock model;
  std::string flow = "bootstrap";  // bootstrap | fully-adapted
  KernelBlock kernel;
  RunBlock run;
  Figure1Block figure1;
  Figure2Block figure2;
  RateBlock rate;
  AnalysisBlock analysis;
};

/// Defaults for a subcommand before any config file or flag is applied.
inline ExperimentConfig default_config(const std::string& command) {
  ExperimentConfig c;
  c.command = command;
  if (command == "figure2") {
    c.model.type = "linear-gaussian";
    c.model.horizon = 10;
    c.run.replicates = 100;
    c.run.compensate_burnin = true;
  } else if (command == "clt-check") {
    c.run.replicates = 10000;
  } else if (command == "rate-check") {
    c.run.replicates = 500;
  } else if (command == "unbiasedness") {
    c.kernel.kind = "lazy-mixture";
    c.kernel.eps = 0.5;
    c.run.particles = 64;
    c.run.replicates = 10000;
  } else if (command == "exact-analyze") {
    c.kernel.kind = "lazy-mixture";
    c.kernel.eps = 0.5;
  }
  return c;
}

namespace detail {

inline void check_keys(const Json& j, const std::string& where, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

}  // namespace detail

/// Overlays a JSON document on `c`. Unknown keys and mistyped values are
/// configuration errors.
inline void apply_json(ExperimentConfig& c, const Json& j) {
  using detail::read;
  detail::check_keys(j, "config", {"command", "model", "flow", "kernel", "run", "figure1", "figure2",
                                   "rate", "analysis"});
  if (j.contains("command")) {
    std::string cmd;
    read(j, "command", cmd, "config");
    if (cmd != c.command) throw ConfigError("config is for '" + cmd + "', not '" + c.command + "'");
  }
  read(j, "flow", c.flow, "config");
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, "model", {"type", "alpha", "d", "horizon", "observations", "initial",
                                    "transition", "emission", "data"});
    read(m, "type", c.model.type, "model");
    read(m, "alpha", c.model.alpha, "model");
    read(m, "d", c.model.d, "model");
    read(m, "horizon", c.model.horizon, "model");
    read(m, "observations", c.model.observations, "model");
    read(m, "initial", c.model.initial, "model");
    read(m, "transition", c.model.transition, "model");
    read(m, "emission", c.model.emission, "model");
    read(m, "data", c.model.data, "model");
  }
  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    detail::check_keys(k, "kernel", {"kind", "eps", "weight", "scale"});
    read(k, "kind", c.kernel.kind, "kernel");
    read(k, "eps", c.kernel.eps, "kernel");
    read(k, "weight", c.kernel.weight, "kernel");
    read(k, "scale", c.kernel.scale, "kernel");
  }
  if (j.contains("run")) {
    const auto& r = j.at("run");
    detail::check_keys(r, "run", {"N", "replicates", "seed", "init", "burnin", "compensate_burnin",
                                  "storage", "estimators"});
    read(r, "N", c.run.particles, "run");
    read(r, "replicates", c.run.replicates, "run");
    read(r, "seed", c.run.seed, "run");
    read(r, "init", c.run.init, "run");
    read(r, "burnin", c.run.burnin, "run");
    read(r, "compensate_burnin", c.run.compensate_burnin, "run");
    read(r, "storage", c.run.storage, "run");
    read(r, "estimators", c.run.estimators, "run");
  }
  if (j.contains("figure1")) {
    const auto& f = j.at("figure1");
    detail::check_keys(f, "figure1", {"alphas", "eps_grid"});
    read(f, "alphas", c.figure1.alphas, "figure1");
    read(f, "eps_grid", c.figure1.eps_grid, "figure1");
  }
  if (j.contains("figure2")) {
    const auto& f = j.at("figure2");
    detail::check_keys(f, "figure2", {"dimensions", "paper_scale", "algorithms"});
    read(f, "dimensions", c.figure2.dimensions, "figure2");
    read(f, "paper_scale", c.figure2.paper_scale, "figure2");
    read(f, "algorithms", c.figure2.algorithms, "figure2");
  }
  if (j.contains("rate")) {
    const auto& r = j.at("rate");
    detail::check_keys(r, "rate", {"grid", "slope_min", "slope_max"});
    read(r, "grid", c.rate.grid, "rate");
    read(r, "slope_min", c.rate.slope_min, "rate");
    read(r, "slope_max", c.rate.slope_max, "rate");
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    detail::check_keys(a, "analysis", {"estimator", "time"});
    read(a, "estimator", c.analysis.estimator, "analysis");
    read(a, "time", c.analysis.time, "analysis");
  }
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

/// The effective config: only the blocks the subcommand reads.
inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["command"] = c.command;
  const auto& cmd = c.command;
  const bool uses_model = cmd != "figure1";
  const bool uses_kernel = cmd != "figure1" && cmd != "figure2";
  if (uses_model) {
    Json m;
    m["type"] = c.model.type;
    if (c.model.type == "binary") m["alpha"] = c.model.alpha;
    if (c.model.type == "linear-gaussian") {
      m["d"] = c.model.d;
      m["observations"] = c.model.observations;
    }
    if (c.model.type == "custom-finite") {
      m["initial"] = c.model.initial;
      m["transition"] = c.model.transition;
      m["emission"] = c.model.emission;
      m["data"] = c.model.data;
    }
    m["horizon"] = c.model.horizon;
    if (cmd == "figure2") m.erase("observations"), m.erase("d");
    j["model"] = m;
  }
  if (uses_kernel) {
    j["flow"] = c.flow;
    j["kernel"] = {{"kind", c.kernel.kind}, {"eps", c.kernel.eps}, {"weight", c.kernel.weight},
                   {"scale", c.kernel.scale}};
  }
  if (cmd != "figure1" && cmd != "exact-analyze") {
    Json r = {{"N", c.run.particles}, {"replicates", c.run.replicates}, {"seed", c.run.seed}};
    if (cmd == "run-filter") {
      r["init"] = c.run.init;
      r["burnin"] = c.run.burnin;
      r["storage"] = c.run.storage;
      r["estimators"] = c.run.estimators;
    }
    if (cmd == "figure2") {
      r["burnin"] = c.run.burnin;
      r["compensate_burnin"] = c.run.compensate_burnin;
    }
    if (cmd == "rate-check") r.erase("N");
    j["run"] = r;
  }
  if (cmd == "figure1") j["figure1"] = {{"alphas", c.figure1.alphas}, {"eps_grid", c.figure1.eps_grid}};
  if (cmd == "figure2") {
    j["figure2"] = {{"dimensions", c.figure2.dimensions},
                    {"paper_scale", c.figure2.paper_scale},
                    {"algorithms", c.figure2.algorithms}};
  }
  if (cmd == "rate-check") {
    j["rate"] = {{"grid", c.rate.grid}, {"slope_min", c.rate.slope_min}, {"slope_max", c.rate.slope_max}};
  }
  if (cmd == "exact-analyze") {
    j["analysis"] = {{"estimator", c.analysis.estimator}, {"time", c.analysis.time}};
  }
  return j;
}

}  // namespace seqmc::cli
