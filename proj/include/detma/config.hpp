#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <yaml-cpp/yaml.h>

#include "detma/graph.hpp"
#include "detma/lindyn.hpp"
#include "detma/sim.hpp"
#include "detma/trigger.hpp"

namespace detma {

/// Invalid configuration; `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct PlantConfig {
  std::string preset = "oscillator";  // empty when A and B are explicit
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;

  friend bool operator==(const PlantConfig&, const PlantConfig&) = default;
};

struct TopologyConfig {
  std::size_t n = 4;
  std::vector<Edge> edges;
  std::vector<Pin> pinning;

  friend bool operator==(const TopologyConfig& a, const TopologyConfig& b) {
    auto same_edges = [](const std::vector<Edge>& x, const std::vector<Edge>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k].i != y[k].i || x[k].j != y[k].j || x[k].weight != y[k].weight) return false;
      }
      return true;
    };
    auto same_pins = [](const std::vector<Pin>& x, const std::vector<Pin>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k].i != y[k].i || x[k].gain != y[k].gain) return false;
      }
      return true;
    };
    return a.n == b.n && same_edges(a.edges, b.edges) && same_pins(a.pinning, b.pinning);
  }
};

struct GainConfig {
  bool synthesize = true;
  GainOptions options;
  Eigen::MatrixXd K;  // explicit mode only
  Eigen::MatrixXd P;

  friend bool operator==(const GainConfig&, const GainConfig&) = default;
};

struct SimSection {
  SimSettings settings;
  std::uint64_t seed = 1;
  Eigen::VectorXd x0_init;
  std::optional<Eigen::MatrixXd> follower_init;  // state_dim x N; random when empty

  friend bool operator==(const SimSection&, const SimSection&) = default;
};

struct SweepConfig {
  std::vector<std::size_t> ell_list;
  std::vector<double> theta_bar0_list;
  std::size_t workers = 1;
  bool baselines = true;

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct OutputConfig {
  std::string trajectory = "trajectory.csv";
  std::string events = "events.csv";
  std::string metrics = "metrics.yaml";
  std::string sweep_summary = "sweep_summary.csv";
  std::string sweep_runs = "sweep_runs.csv";

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct SimConfig {
  PlantConfig plant;
  TopologyConfig topology;
  GainConfig gains;
  DesignParams params;
  TriggerMode trigger_mode = TriggerMode::DetmMa;
  double setm_sigma = 1e-5;
  DecaySpan decay_span = DecaySpan::OneStep;
  SimSection sim;
  std::optional<SweepConfig> sweep;
  OutputConfig output;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

// ---------------------------------------------------------------------------
// Defaults

/// Benchmark design parameters. theta lives on a scale where the consensus
/// signal and estimation error terms of omega dominate its own quadratic
/// term: omega then behaves like a relative error threshold (|e|^2 ~ |z|^2 /
/// eta) followed by a fixed budget burned at rate ~ 2 delta beta / eta.
inline DesignParams benchmark_params(std::size_t n_agents, double theta_bar_0 = 0.25,
                                     std::size_t ell = 50) {
  DesignParams p;
  p.alpha = 1.0;
  p.delta = 2.5e7;
  p.beta = 0.1;
  p.eta = 1e5;
  p.epsilon = 0.1;
  p.rho = 3.0;
  p.tau.assign(n_agents, 0.1);
  p.theta_bar_0.assign(n_agents, theta_bar_0);
  p.ell = ell;
  p.theta_min = 1e-9;
  return p;
}

inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> plant_preset(const std::string& name) {
  if (name == "oscillator") return oscillator_plant();
  if (name == "double-integrator") return double_integrator_plant();
  throw std::invalid_argument("unknown plant preset '" + name +
                              "' (expected oscillator or double-integrator)");
}

inline TopologyConfig benchmark_topology_config(std::size_t n = 4) {
  TopologyConfig t;
  t.n = n;
  for (std::size_t i = 1; i <= n && n > 1; ++i) {
    if (n == 2 && i == 2) break;
    t.edges.push_back({i, i % n + 1, 1.0});
  }
  t.pinning.push_back({1, 1.0});
  return t;
}

inline SimConfig default_config() {
  SimConfig c;
  std::tie(c.plant.A, c.plant.B) = plant_preset(c.plant.preset);
  c.topology = benchmark_topology_config(4);
  c.gains.options.input_weight = 0.1;
  c.gains.options.lyapunov_weight = 1e-3;
  c.params = benchmark_params(4);
  c.sim.settings.dt = 2.5e-5;
  c.sim.settings.output_stride = 400;
  c.sim.x0_init = Eigen::Vector2d(1.0, 0.0);
  return c;
}

// ---------------------------------------------------------------------------
// Parsing

namespace config_detail {

inline int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

inline void check_keys(const YAML::Node& map, const std::set<std::string>& allowed,
                       const std::string& where) {
  if (!map.IsMap()) throw ConfigError(where + " must be a mapping", line_of(map));
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where, line_of(kv.first));
    }
  }
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) throw ConfigError(what + " must be a scalar", line_of(n));
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(what + " has an invalid value '" + n.Scalar() + "'", line_of(n));
  }
}

inline double positive(const YAML::Node& n, const std::string& what) {
  const double v = scalar<double>(n, what);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(what + " must be positive", line_of(n));
  return v;
}

inline std::size_t positive_int(const YAML::Node& n, const std::string& what) {
  const auto v = scalar<long long>(n, what);
  if (v < 1) throw ConfigError(what + " must be a positive integer", line_of(n));
  return static_cast<std::size_t>(v);
}

inline Eigen::MatrixXd matrix(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || n.size() == 0) {
    throw ConfigError(what + " must be a nonempty list of rows", line_of(n));
  }
  const std::size_t rows = n.size();
  std::size_t cols = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!n[r].IsSequence() || n[r].size() == 0) {
      throw ConfigError(what + " row " + std::to_string(r + 1) + " must be a nonempty list",
                        line_of(n[r]));
    }
    if (r == 0) cols = n[r].size();
    if (n[r].size() != cols) throw ConfigError(what + " has ragged rows", line_of(n[r]));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          scalar<double>(n[r][c], what + " entry");
    }
  }
  return m;
}

inline Eigen::VectorXd vector(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || n.size() == 0) throw ConfigError(what + " must be a nonempty list", line_of(n));
  Eigen::VectorXd v(static_cast<Eigen::Index>(n.size()));
  for (std::size_t k = 0; k < n.size(); ++k) v(static_cast<Eigen::Index>(k)) = scalar<double>(n[k], what);
  return v;
}

/// Scalar broadcast to every agent, or one positive value per agent.
inline std::vector<double> per_agent(const YAML::Node& n, std::size_t agents, const std::string& what) {
  if (n.IsScalar()) return std::vector<double>(agents, positive(n, what));
  if (!n.IsSequence()) throw ConfigError(what + " must be a scalar or a list", line_of(n));
  if (n.size() != agents) {
    throw ConfigError(what + " needs " + std::to_string(agents) + " entries, got " +
                          std::to_string(n.size()),
                      line_of(n));
  }
  std::vector<double> out;
  for (const auto& x : n) out.push_back(positive(x, what));
  return out;
}

}  // namespace config_detail

/// Parses YAML text; every mapping rejects keys it does not know.
inline SimConfig parse_config_string(const std::string& text) {
  using namespace config_detail;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
  SimConfig c = default_config();
  if (root.IsNull()) return c;
  check_keys(root,
             {"preset", "plant", "topology", "gains", "params", "trigger_mode", "setm_sigma",
              "decay_span", "sim", "sweep", "output"},
             "config");

  if (root["preset"]) {
    const auto p = scalar<std::string>(root["preset"], "preset");
    if (p != "benchmark") throw ConfigError("unknown preset '" + p + "'", line_of(root["preset"]));
  }

  if (const auto plant = root["plant"]) {
    check_keys(plant, {"preset", "A", "B"}, "plant");
    if (plant["preset"]) {
      if (plant["A"] || plant["B"]) {
        throw ConfigError("plant takes either a preset or A and B", line_of(plant));
      }
      c.plant.preset = scalar<std::string>(plant["preset"], "plant.preset");
      try {
        std::tie(c.plant.A, c.plant.B) = plant_preset(c.plant.preset);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what(), line_of(plant["preset"]));
      }
    } else {
      if (!plant["A"] || !plant["B"]) throw ConfigError("plant needs both A and B", line_of(plant));
      c.plant.preset.clear();
      c.plant.A = matrix(plant["A"], "plant.A");
      c.plant.B = matrix(plant["B"], "plant.B");
    }
    if (c.plant.A.rows() != c.plant.A.cols()) {
      throw ConfigError("plant.A must be square", line_of(plant["A"] ? plant["A"] : plant));
    }
    if (c.plant.B.rows() != c.plant.A.rows()) {
      throw ConfigError("dimension mismatch: A is " + std::to_string(c.plant.A.rows()) + "x" +
                            std::to_string(c.plant.A.cols()) + " but B has " +
                            std::to_string(c.plant.B.rows()) + " rows",
                        line_of(plant["B"] ? plant["B"] : plant));
    }
  }

  if (const auto topo = root["topology"]) {
    check_keys(topo, {"n", "edges", "pinning"}, "topology");
    TopologyConfig t;
    t.n = topo["n"] ? positive_int(topo["n"], "topology.n") : c.topology.n;
    if (const auto edges = topo["edges"]) {
      if (!edges.IsSequence()) throw ConfigError("topology.edges must be a list", line_of(edges));
      for (const auto& e : edges) {
        if (!e.IsSequence() || e.size() != 3) {
          throw ConfigError("each edge is [i, j, weight]", line_of(e));
        }
        t.edges.push_back({positive_int(e[0], "edge index"), positive_int(e[1], "edge index"),
                           scalar<double>(e[2], "edge weight")});
      }
    }
    if (const auto pins = topo["pinning"]) {
      if (!pins.IsSequence()) throw ConfigError("topology.pinning must be a list", line_of(pins));
      for (const auto& p : pins) {
        if (!p.IsSequence() || p.size() != 2) throw ConfigError("each pinning entry is [i, gain]", line_of(p));
        t.pinning.push_back({positive_int(p[0], "pinning index"), scalar<double>(p[1], "pinning gain")});
      }
    }
    try {
      if (!leader_reachable(build_topology(t.n, t.edges, t.pinning))) {
        throw ConfigError("topology: some follower is not reachable from the leader", line_of(topo));
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what(), line_of(topo));
    }
    c.topology = t;
  }
  const std::size_t agents = c.topology.n;
  const auto nx = c.plant.A.rows();
  const auto nu = c.plant.B.cols();

  if (const auto g = root["gains"]) {
    if (g.IsScalar()) {
      if (g.Scalar() != "synthesize") {
        throw ConfigError("gains must be 'synthesize' or a mapping", line_of(g));
      }
      c.gains.synthesize = true;
    } else {
      check_keys(g, {"mode", "coupling", "input_weight", "lyapunov_weight", "K", "P"}, "gains");
      if (g["mode"]) {
        const auto mode = scalar<std::string>(g["mode"], "gains.mode");
        if (mode != "synthesize" && mode != "explicit") {
          throw ConfigError("gains.mode must be synthesize or explicit", line_of(g["mode"]));
        }
        c.gains.synthesize = mode == "synthesize";
      } else {
        c.gains.synthesize = !(g["K"] || g["P"]);
      }
      if (g["coupling"]) c.gains.options.coupling = scalar<double>(g["coupling"], "gains.coupling");
      if (g["input_weight"]) c.gains.options.input_weight = positive(g["input_weight"], "gains.input_weight");
      if (g["lyapunov_weight"]) {
        c.gains.options.lyapunov_weight = positive(g["lyapunov_weight"], "gains.lyapunov_weight");
      }
      if (!c.gains.synthesize) {
        if (!g["K"] || !g["P"]) throw ConfigError("explicit gains need K and P", line_of(g));
        c.gains.K = matrix(g["K"], "gains.K");
        c.gains.P = matrix(g["P"], "gains.P");
        if (c.gains.K.rows() != nu || c.gains.K.cols() != nx) {
          throw ConfigError("dimension mismatch: K must be " + std::to_string(nu) + "x" +
                                std::to_string(nx),
                            line_of(g["K"]));
        }
        if (c.gains.P.rows() != nx || c.gains.P.cols() != nx) {
          throw ConfigError("dimension mismatch: P must be " + std::to_string(nx) + "x" +
                                std::to_string(nx),
                            line_of(g["P"]));
        }
        if ((c.gains.P - c.gains.P.transpose()).norm() > 1e-12 * std::max(1.0, c.gains.P.norm()) ||
            Eigen::LLT<Eigen::MatrixXd>(c.gains.P).info() != Eigen::Success) {
          throw ConfigError("P must be symmetric positive definite", line_of(g["P"]));
        }
      } else if (g["K"] || g["P"]) {
        throw ConfigError("K and P are only allowed with gains.mode explicit", line_of(g));
      }
    }
  }

  {
    // per-agent defaults follow the final agent count
    const double tb0 = c.params.theta_bar_0.empty() ? 0.25 : c.params.theta_bar_0.front();
    const double tau = c.params.tau.empty() ? 0.1 : c.params.tau.front();
    c.params.theta_bar_0.assign(agents, tb0);
    c.params.tau.assign(agents, tau);
  }
  if (const auto p = root["params"]) {
    check_keys(p, {"alpha", "delta", "beta", "eta", "epsilon", "rho", "tau", "theta_bar_0", "ell",
                   "theta_min"},
               "params");
    if (p["alpha"]) c.params.alpha = positive(p["alpha"], "params.alpha");
    if (p["delta"]) c.params.delta = positive(p["delta"], "params.delta");
    if (p["beta"]) c.params.beta = positive(p["beta"], "params.beta");
    if (p["eta"]) c.params.eta = positive(p["eta"], "params.eta");
    if (p["epsilon"]) c.params.epsilon = positive(p["epsilon"], "params.epsilon");
    if (p["rho"]) c.params.rho = positive(p["rho"], "params.rho");
    if (p["theta_min"]) c.params.theta_min = positive(p["theta_min"], "params.theta_min");
    if (p["ell"]) c.params.ell = positive_int(p["ell"], "params.ell");
    if (p["tau"]) c.params.tau = per_agent(p["tau"], agents, "params.tau");
    if (p["theta_bar_0"]) c.params.theta_bar_0 = per_agent(p["theta_bar_0"], agents, "params.theta_bar_0");
  }

  if (const auto m = root["trigger_mode"]) {
    try {
      c.trigger_mode = parse_trigger_mode(scalar<std::string>(m, "trigger_mode"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what(), line_of(m));
    }
  }
  if (root["setm_sigma"]) c.setm_sigma = positive(root["setm_sigma"], "setm_sigma");
  if (const auto s = root["decay_span"]) {
    try {
      c.decay_span = parse_decay_span(scalar<std::string>(s, "decay_span"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what(), line_of(s));
    }
  }

  if (nx != c.sim.x0_init.size()) c.sim.x0_init = Eigen::VectorXd::Zero(nx);
  if (nx == 2 && c.plant.preset == "oscillator" && !root["sim"]) c.sim.x0_init = Eigen::Vector2d(1.0, 0.0);
  if (const auto s = root["sim"]) {
    check_keys(s, {"dt", "t_final", "seed", "x0_init", "follower_init", "output_stride",
                   "max_events_per_agent", "time_tol_rel", "divergence_bound"},
               "sim");
    auto& st = c.sim.settings;
    if (s["dt"]) st.dt = positive(s["dt"], "sim.dt");
    if (s["t_final"]) st.t_final = positive(s["t_final"], "sim.t_final");
    if (s["output_stride"]) st.output_stride = positive_int(s["output_stride"], "sim.output_stride");
    if (s["max_events_per_agent"]) {
      st.max_events_per_agent = positive_int(s["max_events_per_agent"], "sim.max_events_per_agent");
    }
    if (s["time_tol_rel"]) st.time_tol_rel = positive(s["time_tol_rel"], "sim.time_tol_rel");
    if (s["divergence_bound"]) st.divergence_bound = positive(s["divergence_bound"], "sim.divergence_bound");
    if (s["seed"]) c.sim.seed = scalar<std::uint64_t>(s["seed"], "sim.seed");
    if (s["x0_init"]) {
      c.sim.x0_init = vector(s["x0_init"], "sim.x0_init");
    } else if (c.sim.x0_init.size() != nx) {
      c.sim.x0_init = Eigen::VectorXd::Zero(nx);
    }
    if (const auto f = s["follower_init"]) {
      if (f.IsScalar()) {
        if (f.Scalar() != "random") throw ConfigError("sim.follower_init must be 'random' or rows", line_of(f));
        c.sim.follower_init.reset();
      } else {
        const Eigen::MatrixXd rows = matrix(f, "sim.follower_init");
        if (rows.rows() != static_cast<Eigen::Index>(agents) || rows.cols() != nx) {
          throw ConfigError("dimension mismatch: sim.follower_init needs " + std::to_string(agents) +
                                " rows of length " + std::to_string(nx),
                            line_of(f));
        }
        c.sim.follower_init = rows.transpose();
      }
    }
  }
  if (c.sim.x0_init.size() != nx) {
    throw ConfigError("dimension mismatch: sim.x0_init needs " + std::to_string(nx) + " entries",
                      root["sim"] ? line_of(root["sim"]) : 0);
  }

  if (const auto sw = root["sweep"]) {
    check_keys(sw, {"ell_list", "theta_bar0_list", "workers", "baselines"}, "sweep");
    SweepConfig s;
    if (!sw["ell_list"] || !sw["theta_bar0_list"]) {
      throw ConfigError("sweep needs ell_list and theta_bar0_list", line_of(sw));
    }
    if (!sw["ell_list"].IsSequence() || sw["ell_list"].size() == 0) {
      throw ConfigError("sweep.ell_list must be a nonempty list", line_of(sw["ell_list"]));
    }
    for (const auto& e : sw["ell_list"]) s.ell_list.push_back(positive_int(e, "sweep.ell_list"));
    if (!sw["theta_bar0_list"].IsSequence() || sw["theta_bar0_list"].size() == 0) {
      throw ConfigError("sweep.theta_bar0_list must be a nonempty list", line_of(sw["theta_bar0_list"]));
    }
    for (const auto& e : sw["theta_bar0_list"]) {
      s.theta_bar0_list.push_back(positive(e, "sweep.theta_bar0_list"));
    }
    if (sw["workers"]) s.workers = positive_int(sw["workers"], "sweep.workers");
    if (sw["baselines"]) s.baselines = scalar<bool>(sw["baselines"], "sweep.baselines");
    c.sweep = s;
  }

  if (const auto o = root["output"]) {
    check_keys(o, {"trajectory", "events", "metrics", "sweep_summary", "sweep_runs"}, "output");
    if (o["trajectory"]) c.output.trajectory = scalar<std::string>(o["trajectory"], "output.trajectory");
    if (o["events"]) c.output.events = scalar<std::string>(o["events"], "output.events");
    if (o["metrics"]) c.output.metrics = scalar<std::string>(o["metrics"], "output.metrics");
    if (o["sweep_summary"]) c.output.sweep_summary = scalar<std::string>(o["sweep_summary"], "output.sweep_summary");
    if (o["sweep_runs"]) c.output.sweep_runs = scalar<std::string>(o["sweep_runs"], "output.sweep_runs");
  }
  return c;
}

inline SimConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", 0);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_string(buf.str());
}

// ---------------------------------------------------------------------------
// Writing

namespace config_detail {

inline void emit_matrix(YAML::Emitter& out, const Eigen::MatrixXd& m) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << m(r, c);
    out << YAML::EndSeq;
  }
  out << YAML::EndSeq;
}

}  // namespace config_detail

/// Serializes a config so that parse_config_string(write_config(c)) == c.
inline std::string write_config(const SimConfig& c) {
  using config_detail::emit_matrix;
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  out << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
  if (!c.plant.preset.empty()) {
    out << YAML::Key << "preset" << YAML::Value << c.plant.preset;
  } else {
    out << YAML::Key << "A" << YAML::Value;
    emit_matrix(out, c.plant.A);
    out << YAML::Key << "B" << YAML::Value;
    emit_matrix(out, c.plant.B);
  }
  out << YAML::EndMap;

  out << YAML::Key << "topology" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "n" << YAML::Value << c.topology.n;
  out << YAML::Key << "edges" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& e : c.topology.edges) {
    out << YAML::Flow << YAML::BeginSeq << e.i << e.j << e.weight << YAML::EndSeq;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "pinning" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& p : c.topology.pinning) out << YAML::Flow << YAML::BeginSeq << p.i << p.gain << YAML::EndSeq;
  out << YAML::EndSeq;
  out << YAML::EndMap;

  out << YAML::Key << "gains" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << (c.gains.synthesize ? "synthesize" : "explicit");
  out << YAML::Key << "coupling" << YAML::Value << c.gains.options.coupling;
  out << YAML::Key << "input_weight" << YAML::Value << c.gains.options.input_weight;
  out << YAML::Key << "lyapunov_weight" << YAML::Value << c.gains.options.lyapunov_weight;
  if (!c.gains.synthesize) {
    out << YAML::Key << "K" << YAML::Value;
    emit_matrix(out, c.gains.K);
    out << YAML::Key << "P" << YAML::Value;
    emit_matrix(out, c.gains.P);
  }
  out << YAML::EndMap;

  const auto& p = c.params;
  out << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "alpha" << YAML::Value << p.alpha;
  out << YAML::Key << "delta" << YAML::Value << p.delta;
  out << YAML::Key << "beta" << YAML::Value << p.beta;
  out << YAML::Key << "eta" << YAML::Value << p.eta;
  out << YAML::Key << "epsilon" << YAML::Value << p.epsilon;
  out << YAML::Key << "rho" << YAML::Value << p.rho;
  out << YAML::Key << "tau" << YAML::Value << YAML::Flow << p.tau;
  out << YAML::Key << "theta_bar_0" << YAML::Value << YAML::Flow << p.theta_bar_0;
  out << YAML::Key << "ell" << YAML::Value << p.ell;
  out << YAML::Key << "theta_min" << YAML::Value << p.theta_min;
  out << YAML::EndMap;

  out << YAML::Key << "trigger_mode" << YAML::Value << std::string(to_string(c.trigger_mode));
  out << YAML::Key << "setm_sigma" << YAML::Value << c.setm_sigma;
  out << YAML::Key << "decay_span" << YAML::Value << std::string(to_string(c.decay_span));

  const auto& s = c.sim;
  out << YAML::Key << "sim" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dt" << YAML::Value << s.settings.dt;
  out << YAML::Key << "t_final" << YAML::Value << s.settings.t_final;
  out << YAML::Key << "seed" << YAML::Value << s.seed;
  out << YAML::Key << "x0_init" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index k = 0; k < s.x0_init.size(); ++k) out << s.x0_init(k);
  out << YAML::EndSeq;
  out << YAML::Key << "follower_init" << YAML::Value;
  if (s.follower_init) {
    emit_matrix(out, s.follower_init->transpose());
  } else {
    out << "random";
  }
  out << YAML::Key << "output_stride" << YAML::Value << s.settings.output_stride;
  out << YAML::Key << "max_events_per_agent" << YAML::Value << s.settings.max_events_per_agent;
  out << YAML::Key << "time_tol_rel" << YAML::Value << s.settings.time_tol_rel;
  out << YAML::Key << "divergence_bound" << YAML::Value << s.settings.divergence_bound;
  out << YAML::EndMap;

  if (c.sweep) {
    out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "ell_list" << YAML::Value << YAML::Flow << c.sweep->ell_list;
    out << YAML::Key << "theta_bar0_list" << YAML::Value << YAML::Flow << c.sweep->theta_bar0_list;
    out << YAML::Key << "workers" << YAML::Value << c.sweep->workers;
    out << YAML::Key << "baselines" << YAML::Value << c.sweep->baselines;
    out << YAML::EndMap;
  }

  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "trajectory" << YAML::Value << c.output.trajectory;
  out << YAML::Key << "events" << YAML::Value << c.output.events;
  out << YAML::Key << "metrics" << YAML::Value << c.output.metrics;
  out << YAML::Key << "sweep_summary" << YAML::Value << c.output.sweep_summary;
  out << YAML::Key << "sweep_runs" << YAML::Value << c.output.sweep_runs;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------

/// Builds the immutable run description; gains are synthesized here when
/// requested. `theta_bar_0` / `ell` overrides serve sweep cells.
inline Scenario make_scenario(const SimConfig& c) {
  Scenario sc;
  sc.topology = build_topology(c.topology.n, c.topology.edges, c.topology.pinning);
  sc.model.A = c.plant.A;
  sc.model.B = c.plant.B;
  if (c.gains.synthesize) {
    const GainDesign g = synthesize_gain(c.plant.A, c.plant.B, sc.topology, c.gains.options);
    sc.model.K = g.K;
    sc.model.P = g.P;
  } else {
    sc.model.K = c.gains.K;
    sc.model.P = c.gains.P;
  }
  sc.model.params = c.params;
  sc.mode = c.trigger_mode;
  sc.setm_sigma = c.setm_sigma;
  sc.decay_span = c.decay_span;
  sc.sim = c.sim.settings;
  sc.x0_init = c.sim.x0_init;
  sc.follower_init = c.sim.follower_init
                         ? *c.sim.follower_init
                         : random_follower_init(c.plant.A.rows(), c.topology.n, c.sim.seed);
  return sc;
}

}  // namespace detma
