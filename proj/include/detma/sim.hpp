#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "detma/graph.hpp"
#include "detma/lindyn.hpp"
#include "detma/trigger.hpp"

namespace detma {

struct SimSettings {
  double dt = 1e-4;
  double t_final = 20.0;
  std::size_t output_stride = 100;
  std::size_t max_events_per_agent = 1'000'000;
  double time_tol_rel = 1e-9;
  double divergence_bound = 1e12;

  friend bool operator==(const SimSettings&, const SimSettings&) = default;
};

inline double time_tol(double t, double rel = 1e-9) { return rel * std::max(1.0, std::abs(t)); }

/// Everything a single run needs; immutable during the run.
struct Scenario {
  SystemModel model;
  Topology topology;
  TriggerMode mode = TriggerMode::DetmMa;
  double setm_sigma = 0.05;
  DecaySpan decay_span = DecaySpan::OneStep;
  SimSettings sim;
  Eigen::VectorXd x0_init;
  Eigen::MatrixXd follower_init;  // state_dim x N, one column per follower
};

/// Uniform draws in [-1, 1] from a 64-bit Mersenne Twister; the mapping to
/// doubles is spelled out so the stream is identical across standard libraries.
inline Eigen::MatrixXd random_follower_init(Eigen::Index state_dim, std::size_t n,
                                            std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Eigen::MatrixXd out(state_dim, static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index r = 0; r < state_dim; ++r) {
      const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
      out(r, j) = 2.0 * u - 1.0;
    }
  }
  return out;
}

struct ScenarioState {
  double t = 0.0;
  Eigen::MatrixXd x;         // followers, one column each
  Eigen::MatrixXd e;         // estimation errors xhat - x, zeroed at events
  Eigen::VectorXd x0;        // leader
  Eigen::MatrixXd sample_x;  // last transmitted states
  std::vector<double> sample_t;
  std::vector<TriggerState> triggers;

  std::size_t agents() const { return sample_t.size(); }
};

struct EventRecord {
  std::size_t agent = 0;  // 1-based
  std::size_t k = 0;
  double t_k = 0.0;
  double iet = std::numeric_limits<double>::quiet_NaN();  // undefined for k = 0
  double V_k = 0.0;
  double z_sq = 0.0;
  double theta_bar = 0.0;
  double F = std::numeric_limits<double>::quiet_NaN();
  Branch branch = Branch::Warmup;
  double eps_P_eps = 0.0;
};

using EventLog = std::vector<EventRecord>;

struct TrajectoryPoint {
  double t = 0.0;
  Eigen::MatrixXd x;
  Eigen::VectorXd x0;
  Eigen::VectorXd theta;
  Eigen::VectorXd V;
};

enum class RunStatus { Completed, Diverged, ZenoGuard };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::ZenoGuard: return "zeno-guard";
  }
  return "?";
}

struct ScenarioResult {
  std::vector<TrajectoryPoint> trajectory;
  EventLog events;
  RunStatus status = RunStatus::Completed;
  std::string diagnostic;
  std::size_t steps = 0;
  Scenario scenario;
};

/// Consensus signals of all followers at once, one column per agent.
inline Eigen::MatrixXd consensus_signals(const Eigen::MatrixXd& estimates,
                                         const Eigen::VectorXd& leader_state,
                                         const Topology& topology) {
  const Eigen::Index n = estimates.cols();
  Eigen::MatrixXd z(estimates.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z.col(i) = topology.pin(static_cast<std::size_t>(i)) * (leader_state - estimates.col(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = topology.weights()(i, j);
      if (w != 0.0) z.col(i) += w * (estimates.col(j) - estimates.col(i));
    }
  }
  return z;
}

/// The coupled hybrid system: follower and leader flows, the auxiliary
/// variables, and the trigger functions whose zero crossings define events.
class HybridSystem {
 public:
  explicit HybridSystem(const Scenario& scenario) : sc_(scenario) {
    const auto& m = sc_.model;
    if (m.A.rows() != m.A.cols()) throw std::invalid_argument("A must be square");
    if (m.B.rows() != m.A.rows()) throw std::invalid_argument("B row count must match A");
    if (m.K.rows() != m.B.cols() || m.K.cols() != m.A.rows()) {
      throw std::invalid_argument("K must be input_dim x state_dim");
    }
    if (m.P.rows() != m.A.rows() || m.P.cols() != m.A.rows()) {
      throw std::invalid_argument("P must be state_dim x state_dim");
    }
    validate(m.params, sc_.topology.size());
    if (sc_.mode == TriggerMode::Setm && !(sc_.setm_sigma > 0.0)) {
      throw std::invalid_argument("setm_sigma must be positive");
    }
  }

  const Scenario& scenario() const { return sc_; }
  bool integrates_theta() const { return sc_.mode != TriggerMode::Setm; }

  Eigen::MatrixXd estimates(const ScenarioState& s) const {
    Eigen::MatrixXd xhat(s.sample_x.rows(), s.sample_x.cols());
    for (std::size_t i = 0; i < s.agents(); ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      xhat.col(c) = propagate_estimate(s.sample_x.col(c), sc_.model.A, s.t - s.sample_t[i]);
    }
    return xhat;
  }

  /// One explicit RK4 step of length h.
  ///
  /// Estimates and the leader are exact (closed form). The followers are
  /// advanced through their estimation errors e_i = xhat_i - x_i, which obey
  /// e' = A e - B K z; x is recovered as xhat - e, so every stage sees an e
  /// and a z built from mutually consistent quantities.
  ScenarioState flow(const ScenarioState& s, double h) const {
    if (!(h > 0.0)) throw std::invalid_argument("flow_step: step must be positive");
    const Eigen::MatrixXd xhat0 = estimates(s);
    const Eigen::MatrixXd e_half = mat_exp(sc_.model.A, 0.5 * h);
    const Eigen::MatrixXd e_full = mat_exp(sc_.model.A, h);
    const Eigen::MatrixXd xhat_half = e_half * xhat0;
    const Eigen::MatrixXd xhat_full = e_full * xhat0;
    const Eigen::VectorXd x0_half = leader_at(s.t + 0.5 * h);
    const Eigen::VectorXd x0_full = leader_at(s.t + h);

    const Eigen::Index n = s.x.cols();
    Eigen::VectorXd theta0(n);
    for (Eigen::Index i = 0; i < n; ++i) theta0(i) = s.triggers[static_cast<std::size_t>(i)].theta;
    const Eigen::MatrixXd& err0 = s.e;

    Derivative k1 = rhs(xhat0, s.x0, err0, theta0);
    Derivative k2 = rhs(xhat_half, x0_half, err0 + 0.5 * h * k1.e, theta0 + 0.5 * h * k1.theta);
    Derivative k3 = rhs(xhat_half, x0_half, err0 + 0.5 * h * k2.e, theta0 + 0.5 * h * k2.theta);
    Derivative k4 = rhs(xhat_full, x0_full, err0 + h * k3.e, theta0 + h * k3.theta);

    ScenarioState out = s;
    out.t = s.t + h;
    out.e = err0 + (h / 6.0) * (k1.e + 2.0 * k2.e + 2.0 * k3.e + k4.e);
    out.x = xhat_full - out.e;
    out.x0 = x0_full;
    const Eigen::VectorXd theta =
        theta0 + (h / 6.0) * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta);
    for (Eigen::Index i = 0; i < n; ++i) out.triggers[static_cast<std::size_t>(i)].theta = theta(i);
    return out;
  }

  /// Leader state e^{At} x0(0), evaluated from the initial condition so that
  /// round-off does not accumulate over steps.
  Eigen::VectorXd leader_at(double t) const { return mat_exp(sc_.model.A, t) * sc_.x0_init; }

  /// Positive while agent i is silent; an event fires when it reaches <= 0.
  double trigger_value(const ScenarioState& s, std::size_t i) const {
    if (integrates_theta()) return s.triggers[i].theta;
    const auto c = static_cast<Eigen::Index>(i);
    const Eigen::MatrixXd xhat = estimates(s);
    const double e_sq = s.e.col(c).squaredNorm();
    if (e_sq <= kZeroNormTol * kZeroNormTol) return 1.0;
    const Eigen::MatrixXd z = consensus_signals(xhat, s.x0, sc_.topology);
    return sc_.setm_sigma * z.col(c).squaredNorm() - e_sq;
  }

  Eigen::VectorXd trigger_values(const ScenarioState& s) const {
    const Eigen::Index n = s.x.cols();
    Eigen::VectorXd g(n);
    if (integrates_theta()) {
      for (Eigen::Index i = 0; i < n; ++i) g(i) = s.triggers[static_cast<std::size_t>(i)].theta;
      return g;
    }
    const Eigen::MatrixXd xhat = estimates(s);
    const Eigen::MatrixXd z = consensus_signals(xhat, s.x0, sc_.topology);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e_sq = s.e.col(i).squaredNorm();
      g(i) = e_sq <= kZeroNormTol * kZeroNormTol ? 1.0
                                                  : sc_.setm_sigma * z.col(i).squaredNorm() - e_sq;
    }
    return g;
  }

  /// Per-agent Lyapunov components at the current state.
  Eigen::VectorXd lyapunov(const ScenarioState& s) const {
    const Eigen::MatrixXd xhat = estimates(s);
    const Eigen::MatrixXd z = consensus_signals(xhat, s.x0, sc_.topology);
    const Eigen::Index n = s.x.cols();
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double theta = integrates_theta() ? s.triggers[static_cast<std::size_t>(i)].theta : 0.0;
      v(i) = lyapunov_component(s.x.col(i) - s.x0, s.e.col(i), z.col(i), theta,
                                sc_.model.P);
    }
    return v;
  }

  /// Resets agent i at the current instant and returns the log row.
  EventRecord fire(ScenarioState& s, std::size_t i) const {
    const auto c = static_cast<Eigen::Index>(i);
    TriggerState& trig = s.triggers[i];
    const double prev = trig.last_event_time;
    const std::size_t k = trig.event_count;

    s.sample_x.col(c) = s.x.col(c);
    s.e.col(c).setZero();
    s.sample_t[i] = s.t;
    const Eigen::MatrixXd xhat = estimates(s);
    const Eigen::VectorXd z = consensus_signal_col(xhat, s.x0, i);
    const Eigen::VectorXd eps = s.x.col(c) - s.x0;
    const EventOutcome o = on_event(trig, eps, z, s.t, sc_.model.P, sc_.model.params, i, sc_.mode,
                                    sc_.decay_span);

    EventRecord r;
    r.agent = i + 1;
    r.k = o.k;
    r.t_k = s.t;
    if (k > 0) r.iet = s.t - prev;
    r.V_k = o.sample.V_k;
    r.z_sq = o.sample.z_sq;
    r.theta_bar = o.sample.theta_bar_k;
    r.F = o.F;
    r.branch = o.branch;
    r.eps_P_eps = o.sample.eps_P_eps;
    return r;
  }

 private:
  struct Derivative {
    Eigen::MatrixXd e;
    Eigen::VectorXd theta;
  };

  Eigen::VectorXd consensus_signal_col(const Eigen::MatrixXd& xhat, const Eigen::VectorXd& x0,
                                       std::size_t i) const {
    const auto c = static_cast<Eigen::Index>(i);
    Eigen::VectorXd z = sc_.topology.pin(i) * (x0 - xhat.col(c));
    for (Eigen::Index j = 0; j < xhat.cols(); ++j) {
      const double w = sc_.topology.weights()(c, j);
      if (w != 0.0) z += w * (xhat.col(j) - xhat.col(c));
    }
    return z;
  }

  Derivative rhs(const Eigen::MatrixXd& xhat, const Eigen::VectorXd& x0, const Eigen::MatrixXd& e,
                 const Eigen::VectorXd& theta) const {
    const auto& m = sc_.model;
    const Eigen::MatrixXd z = consensus_signals(xhat, x0, sc_.topology);
    Derivative d;
    d.e = m.A * e - m.B * (m.K * z);
    d.theta = Eigen::VectorXd::Zero(e.cols());
    if (integrates_theta()) {
      for (Eigen::Index i = 0; i < e.cols(); ++i) {
        d.theta(i) = theta_derivative(e.col(i).squaredNorm(), z.col(i).squaredNorm(), theta(i),
                                      m.params.tau[static_cast<std::size_t>(i)], m.params);
      }
    }
    return d;
  }

  Scenario sc_;
};

// ---------------------------------------------------------------------------

inline ScenarioState flow_step(const ScenarioState& state, const HybridSystem& system, double dt) {
  return system.flow(state, dt);
}

/// A crossing happened over a step iff the trigger function went from
/// positive to nonpositive.
inline bool detect_event(double before, double after) { return after <= 0.0 && before > 0.0; }

/// Bisection on [t, t + dt] for the crossing of agent i, re-integrating the
/// partial step from `start` at every probe. Returns the left end of the
/// final bracket.
inline double refine_event_time(const ScenarioState& start, double dt, std::size_t i,
                                const HybridSystem& system) {
  const double tol = time_tol(start.t + dt, system.scenario().sim.time_tol_rel);
  if (!(system.trigger_value(start, i) > 0.0) ||
      !(system.trigger_value(system.flow(start, dt), i) <= 0.0)) {
    throw std::runtime_error("refine_event_time: no sign change over the step (agent " +
                             std::to_string(i + 1) + ")");
  }
  double lo = 0.0;
  double hi = dt;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (system.trigger_value(system.flow(start, mid), i) <= 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return start.t + lo;
}

inline ScenarioState initial_state(const HybridSystem& system) {
  const Scenario& sc = system.scenario();
  const std::size_t n = sc.topology.size();
  const Eigen::Index nx = sc.model.state_dim();
  if (sc.x0_init.size() != nx) throw std::invalid_argument("leader initial state has wrong size");
  if (sc.follower_init.rows() != nx || sc.follower_init.cols() != static_cast<Eigen::Index>(n)) {
    throw std::invalid_argument("follower initial states must be state_dim x N");
  }
  ScenarioState s;
  s.t = 0.0;
  s.x = sc.follower_init;
  s.x0 = sc.x0_init;
  s.sample_x = s.x;
  s.e = Eigen::MatrixXd::Zero(nx, static_cast<Eigen::Index>(n));
  s.sample_t.assign(n, 0.0);
  s.triggers.assign(n, TriggerState(sc.model.params.ell));
  return s;
}

inline TrajectoryPoint snapshot(const ScenarioState& s, const HybridSystem& system) {
  TrajectoryPoint p;
  p.t = s.t;
  p.x = s.x;
  p.x0 = s.x0;
  p.theta.resize(static_cast<Eigen::Index>(s.agents()));
  for (std::size_t i = 0; i < s.agents(); ++i) {
    p.theta(static_cast<Eigen::Index>(i)) = s.triggers[i].theta;
  }
  p.V = system.lyapunov(s);
  return p;
}

/// Simulates [0, t_final]. Every agent transmits at t = 0. Events that fall
/// within the time tolerance of each other are applied in ascending agent id.
inline ScenarioResult run(const Scenario& scenario) {
  const HybridSystem system(scenario);
  const SimSettings& cfg = scenario.sim;
  if (!(cfg.dt > 0.0) || !(cfg.t_final > 0.0)) throw std::invalid_argument("dt and t_final must be positive");
  if (cfg.output_stride == 0) throw std::invalid_argument("output_stride must be positive");
  if (!leader_reachable(scenario.topology)) {
    throw std::invalid_argument("run: some follower cannot reach the leader");
  }

  ScenarioResult result;
  result.scenario = scenario;
  ScenarioState state = initial_state(system);
  const std::size_t n = state.agents();

  for (std::size_t i = 0; i < n; ++i) result.events.push_back(system.fire(state, i));
  result.trajectory.push_back(snapshot(state, system));

  const double t_end = cfg.t_final;
  const double end_tol = time_tol(t_end, cfg.time_tol_rel);
  std::size_t since_output = 0;

  auto diverged = [&](const ScenarioState& s) {
    return !s.x.allFinite() || !s.x0.allFinite() || s.x.cwiseAbs().maxCoeff() > cfg.divergence_bound;
  };

  auto fire_agent = [&](std::size_t i) {
    if (state.triggers[i].event_count >= cfg.max_events_per_agent) {
      result.status = RunStatus::ZenoGuard;
      result.diagnostic = "agent " + std::to_string(i + 1) + " exceeded " +
                          std::to_string(cfg.max_events_per_agent) +
                          " events by t=" + std::to_string(state.t) + " (Zeno suspected)";
      return false;
    }
    result.events.push_back(system.fire(state, i));
    return true;
  };

  while (t_end - state.t > end_tol) {
    const double h = std::min(cfg.dt, t_end - state.t);
    Eigen::VectorXd g_before = system.trigger_values(state);

    // A neighbour's transmission makes z_i jump, which can push a static
    // trigger function below zero without any flow in between.
    bool fired_now = false;
    for (std::size_t i = 0; i < n && result.status == RunStatus::Completed; ++i) {
      if (g_before(static_cast<Eigen::Index>(i)) <= 0.0) {
        fired_now = fire_agent(i);
      }
    }
    if (result.status != RunStatus::Completed) break;
    if (fired_now) g_before = system.trigger_values(state);
    ScenarioState next = system.flow(state, h);
    if (diverged(next)) {
      result.status = RunStatus::Diverged;
      result.diagnostic = "non-finite or unbounded state at t=" + std::to_string(next.t);
      break;
    }
    const Eigen::VectorXd g_after = system.trigger_values(next);

    std::vector<std::size_t> crossing;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      if (detect_event(g_before(c), g_after(c))) crossing.push_back(i);
    }

    if (crossing.empty()) {
      state = std::move(next);
      ++result.steps;
      if (++since_output >= cfg.output_stride) {
        result.trajectory.push_back(snapshot(state, system));
        since_output = 0;
      }
      continue;
    }

    std::vector<double> t_star(n, std::numeric_limits<double>::infinity());
    for (std::size_t i : crossing) {
      double t_i = refine_event_time(state, h, i, system);
      // an agent that has just fired at the step start cannot fire again there
      if (t_i <= state.triggers[i].last_event_time) {
        t_i = state.t + std::min(h, 2.0 * time_tol(state.t, cfg.time_tol_rel));
      }
      t_star[i] = t_i;
    }
    const double t_first = *std::min_element(t_star.begin(), t_star.end());
    const double tol = time_tol(t_first, cfg.time_tol_rel);
    if (t_first > state.t) state = system.flow(state, t_first - state.t);

    for (std::size_t i = 0; i < n; ++i) {
      if (t_star[i] > t_first + tol) continue;
      if (!fire_agent(i)) break;
    }
    if (result.status != RunStatus::Completed) break;
  }

  if (result.trajectory.back().t < state.t) result.trajectory.push_back(snapshot(state, system));
  return result;
}

}  // namespace detma
