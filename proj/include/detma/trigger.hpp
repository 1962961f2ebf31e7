#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "detma/lindyn.hpp"

namespace detma {

enum class TriggerMode { DetmMa, DetmFixed, Setm };

/// Time span used in the exponential decay factor of F.
enum class DecaySpan {
  OneStep,  // t_k - t_{k-1}
  EllStep,  // t_k - t_{k-ell}
};

/// Which rule produced the threshold at an event.
enum class Branch {
  Warmup,    // first event: theta_bar(0)
  Adaptive,  // F / |z|^2
  Clamped,   // F / |z|^2 fell below theta_min
  Default,   // |z|^2 < F / theta_bar(0), or |z|^2 = 0: theta_bar(0)
  Fixed,     // fixed-threshold baseline
  Static,    // static relative-threshold baseline
};

inline constexpr double kZeroNormTol = 1e-12;

inline std::string_view to_string(TriggerMode m) {
  switch (m) {
    case TriggerMode::DetmMa: return "detm-ma";
    case TriggerMode::DetmFixed: return "detm-fixed";
    case TriggerMode::Setm: return "setm";
  }
  return "?";
}

inline std::string_view to_string(DecaySpan s) {
  return s == DecaySpan::OneStep ? "one-step" : "ell-step";
}

inline std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::Warmup: return "warmup";
    case Branch::Adaptive: return "adaptive";
    case Branch::Clamped: return "clamped";
    case Branch::Default: return "default";
    case Branch::Fixed: return "fixed";
    case Branch::Static: return "static";
  }
  return "?";
}

inline TriggerMode parse_trigger_mode(std::string_view s) {
  if (s == "detm-ma") return TriggerMode::DetmMa;
  if (s == "detm-fixed") return TriggerMode::DetmFixed;
  if (s == "setm") return TriggerMode::Setm;
  throw std::invalid_argument("unknown trigger mode '" + std::string(s) +
                              "' (expected detm-ma, detm-fixed or setm)");
}

inline DecaySpan parse_decay_span(std::string_view s) {
  if (s == "one-step") return DecaySpan::OneStep;
  if (s == "ell-step") return DecaySpan::EllStep;
  throw std::invalid_argument("unknown decay span '" + std::string(s) +
                              "' (expected one-step or ell-step)");
}

inline Branch parse_branch(std::string_view s) {
  for (Branch b : {Branch::Warmup, Branch::Adaptive, Branch::Clamped, Branch::Default,
                   Branch::Fixed, Branch::Static}) {
    if (to_string(b) == s) return b;
  }
  throw std::invalid_argument("unknown branch '" + std::string(s) + "'");
}

/// Snapshot taken at an event instant. The estimation error is zero there, so
/// V_k = eps_P_eps + theta_bar_k * z_sq.
struct EventSample {
  double t_k = 0.0;
  double V_k = 0.0;
  double z_sq = 0.0;
  double theta_bar_k = 0.0;
  double eps_P_eps = 0.0;
};

/// Bounded event history; keeps the most recent `capacity` samples.
class SampleHistory {
 public:
  explicit SampleHistory(std::size_t capacity = 1) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("history capacity must be positive");
  }

  void push(const EventSample& s) {
    if (!samples_.empty() && !(s.t_k > samples_.back().t_k)) {
      throw std::invalid_argument("event samples must have strictly increasing times");
    }
    samples_.push_back(s);
    if (samples_.size() > capacity_) samples_.pop_front();
  }

  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return samples_.empty(); }

  /// Sample `back` events before the newest one; back = 0 is the newest.
  const EventSample& from_back(std::size_t back) const {
    if (back >= samples_.size()) throw std::out_of_range("history lookup beyond stored samples");
    return samples_[samples_.size() - 1 - back];
  }

  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

 private:
  std::size_t capacity_;
  std::deque<EventSample> samples_;
};

struct TriggerState {
  double theta = 0.0;
  double theta_bar = 0.0;
  double last_event_time = -std::numeric_limits<double>::infinity();
  std::size_t event_count = 0;
  SampleHistory history;

  explicit TriggerState(std::size_t ell = 1) : history(ell + 1) {}
};

/// Per-event output of on_event, used for logging.
struct EventOutcome {
  EventSample sample;
  double F = std::numeric_limits<double>::quiet_NaN();
  Branch branch = Branch::Warmup;
  std::size_t k = 0;
};

// ---------------------------------------------------------------------------

inline double omega(double e_sq, double z_sq, double theta, const DesignParams& p) {
  const double denom = p.eta * e_sq + z_sq;
  if (!(e_sq + z_sq > 0.0)) throw std::domain_error("omega: e and z are both zero");
  const double a = p.alpha * theta + 2.0 * p.delta * p.beta + (theta - 1.0) * (theta - 1.0);
  const double b = 2.0 * p.epsilon * theta + p.beta * p.beta;
  return -(a * e_sq + b * z_sq) / denom;
}

inline double omega(const Eigen::VectorXd& e, const Eigen::VectorXd& z, double theta,
                    const DesignParams& p) {
  return omega(e.squaredNorm(), z.squaredNorm(), theta, p);
}

/// Right-hand side of the auxiliary variable: omega - tau, or -tau when both
/// the estimation error and the consensus signal vanish.
inline double theta_derivative(double e_sq, double z_sq, double theta, double tau,
                               const DesignParams& p) {
  constexpr double zero_sq = kZeroNormTol * kZeroNormTol;
  if (e_sq <= zero_sq && z_sq <= zero_sq) return -tau;
  return omega(e_sq, z_sq, theta, p) - tau;
}

inline double theta_derivative(const Eigen::VectorXd& e, const Eigen::VectorXd& z, double theta,
                               double tau, const DesignParams& p) {
  return theta_derivative(e.squaredNorm(), z.squaredNorm(), theta, tau, p);
}

inline double quadratic_form(const Eigen::VectorXd& v, const Eigen::MatrixXd& p) {
  if (p.rows() != v.size() || p.cols() != v.size()) {
    throw std::invalid_argument("quadratic form: dimension mismatch");
  }
  return v.dot(p * v);
}

/// V_i = eps' P eps + theta e' P e + theta |z|^2.
inline double lyapunov_component(const Eigen::VectorXd& eps, const Eigen::VectorXd& e,
                                 const Eigen::VectorXd& z, double theta,
                                 const Eigen::MatrixXd& p) {
  return quadratic_form(eps, p) + theta * quadratic_form(e, p) + theta * z.squaredNorm();
}

inline double compute_F(const EventSample& back, double eps_P_eps_now, double t_k, double t_prev,
                        double rho) {
  if (!(t_k > t_prev) || !(t_prev >= back.t_k)) {
    throw std::invalid_argument("compute_F: event times are not monotone");
  }
  const double decay = std::exp(-rho * (t_k - t_prev));
  return back.eps_P_eps * decay - eps_P_eps_now + back.theta_bar_k * decay * back.z_sq;
}

inline double compute_F(const EventSample& back, const Eigen::VectorXd& eps_now, double t_k,
                        double t_prev, double rho, const Eigen::MatrixXd& p) {
  return compute_F(back, quadratic_form(eps_now, p), t_k, t_prev, rho);
}

struct ThresholdUpdate {
  double theta_bar;
  Branch branch;
};

inline ThresholdUpdate update_threshold(double F, double z_sq_now, double theta_bar_init,
                                        double theta_min) {
  if (!(theta_bar_init > 0.0)) throw std::invalid_argument("update_threshold: theta_bar(0) <= 0");
  if (z_sq_now <= kZeroNormTol * kZeroNormTol || !(z_sq_now >= F / theta_bar_init)) {
    return {theta_bar_init, Branch::Default};
  }
  const double raw = F / z_sq_now;
  if (raw < theta_min) return {theta_min, Branch::Clamped};
  return {raw, Branch::Adaptive};
}

/// Mean of the newest min(size, ell) values.
inline double vma(std::span<const double> values, std::size_t ell) {
  if (values.empty()) throw std::invalid_argument("vma: empty history");
  if (ell == 0) throw std::invalid_argument("vma: ell must be positive");
  const std::size_t m = std::min(values.size(), ell);
  const auto tail = values.last(m);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(m);
}

inline double vma(const SampleHistory& history, std::size_t ell) {
  std::vector<double> v;
  v.reserve(history.size());
  for (const auto& s : history) v.push_back(s.V_k);
  return vma(std::span<const double>(v), ell);
}

inline bool setm_check(double e_sq, double z_sq, double sigma) { return e_sq >= sigma * z_sq; }

inline bool setm_check(const Eigen::VectorXd& e, const Eigen::VectorXd& z, double sigma) {
  return setm_check(e.squaredNorm(), z.squaredNorm(), sigma);
}

/// Index of the event whose sample enters F at event k: k - ell once that
/// many events exist, otherwise the oldest one (event 0).
inline std::size_t reference_index(std::size_t k, std::size_t ell) { return k >= ell ? k - ell : 0; }

/// Same reference expressed as an offset back from event k - 1.
inline std::size_t reference_offset(std::size_t k, std::size_t ell) {
  return k - 1 - reference_index(k, ell);
}

/// Applies the reset at an event of one agent: picks the new threshold,
/// restarts theta, and appends the event sample.
///
/// `agent` is 0-based and selects tau / theta_bar(0) from `params`.
inline EventOutcome on_event(TriggerState& state, double eps_P_eps_now, double z_sq_now,
                             double t_k, const DesignParams& params, std::size_t agent,
                             TriggerMode mode, DecaySpan span = DecaySpan::OneStep) {
  if (state.event_count > 0 && !(t_k > state.last_event_time)) {
    throw std::invalid_argument("on_event: event time does not advance");
  }
  const double theta_bar_init = params.theta_bar_0.at(agent);
  EventOutcome out;
  out.k = state.event_count;

  switch (mode) {
    case TriggerMode::Setm:
      state.theta_bar = 0.0;
      out.branch = Branch::Static;
      break;
    case TriggerMode::DetmFixed:
      state.theta_bar = theta_bar_init;
      out.branch = Branch::Fixed;
      break;
    case TriggerMode::DetmMa:
      if (out.k == 0) {
        state.theta_bar = theta_bar_init;
        out.branch = Branch::Warmup;
      } else {
        const EventSample& back = state.history.from_back(reference_offset(out.k, params.ell));
        const double t_prev = span == DecaySpan::OneStep ? state.last_event_time : back.t_k;
        out.F = compute_F(back, eps_P_eps_now, t_k, t_prev, params.rho);
        const ThresholdUpdate upd =
            update_threshold(out.F, z_sq_now, theta_bar_init, params.theta_min);
        state.theta_bar = upd.theta_bar;
        out.branch = upd.branch;
      }
      break;
  }

  state.theta = state.theta_bar;
  state.last_event_time = t_k;
  ++state.event_count;

  out.sample.t_k = t_k;
  out.sample.z_sq = z_sq_now;
  out.sample.eps_P_eps = eps_P_eps_now;
  out.sample.theta_bar_k = state.theta_bar;
  out.sample.V_k = eps_P_eps_now + state.theta_bar * z_sq_now;
  state.history.push(out.sample);
  return out;
}

inline EventOutcome on_event(TriggerState& state, const Eigen::VectorXd& eps_now,
                             const Eigen::VectorXd& z_now, double t_k, const Eigen::MatrixXd& p,
                             const DesignParams& params, std::size_t agent, TriggerMode mode,
                             DecaySpan span = DecaySpan::OneStep) {
  return on_event(state, quadratic_form(eps_now, p), z_now.squaredNorm(), t_k, params, agent, mode,
                  span);
}

}  // namespace detma
