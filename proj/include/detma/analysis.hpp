#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "detma/sim.hpp"
#include "detma/trigger.hpp"

namespace detma {

inline constexpr double kRelativeSlack = 1e-9;

/// Events of each agent in increasing k, keyed by 1-based agent id.
inline std::map<std::size_t, std::vector<const EventRecord*>> events_by_agent(const EventLog& events) {
  std::map<std::size_t, std::vector<const EventRecord*>> out;
  for (const auto& e : events) out[e.agent].push_back(&e);
  for (auto& [agent, list] : out) {
    std::stable_sort(list.begin(), list.end(),
                     [](const EventRecord* a, const EventRecord* b) { return a->k < b->k; });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inter-event times

struct IetStat {
  double min = std::numeric_limits<double>::infinity();
  double mean = 0.0;
  double max = 0.0;
  std::size_t count = 0;  // events, not gaps
};

struct IetSummary {
  std::map<std::size_t, IetStat> per_agent;
  IetStat aggregate;  // mean over every gap of every agent
};

inline IetSummary iet_stats(const EventLog& events) {
  IetSummary out;
  double total = 0.0;
  std::size_t gaps = 0;
  for (const auto& [agent, list] : events_by_agent(events)) {
    if (list.size() < 2) {
      throw std::invalid_argument("iet_stats: agent " + std::to_string(agent) +
                                  " has fewer than 2 events");
    }
    IetStat s;
    s.count = list.size();
    double sum = 0.0;
    for (std::size_t k = 1; k < list.size(); ++k) {
      const double gap = list[k]->t_k - list[k - 1]->t_k;
      s.min = std::min(s.min, gap);
      s.max = std::max(s.max, gap);
      sum += gap;
    }
    s.mean = sum / static_cast<double>(list.size() - 1);
    total += sum;
    gaps += list.size() - 1;
    out.aggregate.min = std::min(out.aggregate.min, s.min);
    out.aggregate.max = std::max(out.aggregate.max, s.max);
    out.aggregate.count += s.count;
    out.per_agent[agent] = s;
  }
  if (gaps == 0) throw std::invalid_argument("iet_stats: empty event log");
  out.aggregate.mean = total / static_cast<double>(gaps);
  return out;
}

// ---------------------------------------------------------------------------
// Consensus error

struct CurvePoint {
  double t;
  double value;
};

/// max_i |x_i(t) - x_0(t)| along the recorded trajectory.
inline std::vector<CurvePoint> consensus_error_curve(const ScenarioResult& result) {
  std::vector<CurvePoint> out;
  out.reserve(result.trajectory.size());
  for (const auto& p : result.trajectory) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.x.cols(); ++i) worst = std::max(worst, (p.x.col(i) - p.x0).norm());
    out.push_back({p.t, worst});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Moving-average monotonicity

struct Violation {
  std::size_t agent = 0;
  std::size_t k = 0;
  Branch branch = Branch::Warmup;
  double lhs = 0.0;  // value that should be smaller
  double rhs = 0.0;  // bound
};

/// Moving averages VMA(t_k, ell) of one agent's event samples, index k
/// (NaN while fewer than ell samples exist).
inline std::vector<double> vma_sequence(const std::vector<double>& v, std::size_t ell) {
  std::vector<double> out(v.size(), std::numeric_limits<double>::quiet_NaN());
  double window = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    window += v[k];
    if (k >= ell) window -= v[k - ell];
    if (k + 1 >= ell) out[k] = window / static_cast<double>(ell);
  }
  return out;
}

/// Flags every post-warm-up k (k >= ell + 1) where the moving average failed
/// to decrease: VMA(t_k) >= VMA(t_{k-1}) (1 + 1e-9).
inline std::vector<Violation> check_vma_monotone(const EventLog& events, std::size_t ell) {
  if (ell == 0) throw std::invalid_argument("check_vma_monotone: ell must be positive");
  std::vector<Violation> out;
  for (const auto& [agent, list] : events_by_agent(events)) {
    std::vector<double> v;
    v.reserve(list.size());
    for (const auto* e : list) v.push_back(e->V_k);
    // explicit sums rather than a running window, so equal inputs give equal means
    for (std::size_t k = ell + 1; k < v.size(); ++k) {
      double now = 0.0;
      double before = 0.0;
      for (std::size_t j = 0; j < ell; ++j) {
        now += v[k - j];
        before += v[k - 1 - j];
      }
      now /= static_cast<double>(ell);
      before /= static_cast<double>(ell);
      if (now >= before * (1.0 + kRelativeSlack)) {
        out.push_back({agent, list[k]->k, list[k]->branch, now, before});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decay contract V(t_k) <= V(t_ref) exp(-rho * span)

inline double decay_span_time(const std::vector<const EventRecord*>& list, std::size_t k,
                              std::size_t ell, DecaySpan span) {
  const std::size_t ref = reference_index(k, ell);
  return span == DecaySpan::OneStep ? list[k]->t_k - list[k - 1]->t_k
                                    : list[k]->t_k - list[ref]->t_k;
}

/// Checks every event after the first against the sample its threshold was
/// built from (ell back, or the oldest one while fewer exist).
inline std::vector<Violation> check_decay_contract(const EventLog& events, double rho,
                                                   std::size_t ell,
                                                   DecaySpan span = DecaySpan::OneStep) {
  if (ell == 0) throw std::invalid_argument("check_decay_contract: ell must be positive");
  std::vector<Violation> out;
  for (const auto& [agent, list] : events_by_agent(events)) {
    for (std::size_t k = 1; k < list.size(); ++k) {
      const double bound = list[reference_index(k, ell)]->V_k *
                           std::exp(-rho * decay_span_time(list, k, ell, span));
      const double v = list[k]->V_k;
      if (v > bound + kRelativeSlack * std::max(std::abs(bound), std::abs(v))) {
        out.push_back({agent, list[k]->k, list[k]->branch, v, bound});
      }
    }
  }
  return out;
}

inline std::size_t count_branch(const std::vector<Violation>& v, Branch b) {
  return static_cast<std::size_t>(
      std::count_if(v.begin(), v.end(), [b](const Violation& x) { return x.branch == b; }));
}

/// Largest relative gap |V_k - V_ref exp(-rho span)| / V_k over events that
/// took the un-clamped adaptive branch (0 if there are none).
inline double adaptive_equality_error(const EventLog& events, double rho, std::size_t ell,
                                      DecaySpan span = DecaySpan::OneStep) {
  double worst = 0.0;
  for (const auto& [agent, list] : events_by_agent(events)) {
    for (std::size_t k = 1; k < list.size(); ++k) {
      if (list[k]->branch != Branch::Adaptive) continue;
      const double target = list[reference_index(k, ell)]->V_k *
                            std::exp(-rho * decay_span_time(list, k, ell, span));
      const double v = list[k]->V_k;
      worst = std::max(worst, std::abs(v - target) / std::max(std::abs(v), std::abs(target)));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Zeno diagnostics

struct ZenoReport {
  double min_gap = std::numeric_limits<double>::infinity();
  /// Gap counts per decade: bin b covers [10^(b-12), 10^(b-11)); the first
  /// and last bins also take everything below / above.
  std::array<std::size_t, 15> histogram{};
  bool guard_hit = false;
  bool pass = false;
};

inline ZenoReport zeno_report(const EventLog& events, double time_tol_rel = 1e-9,
                              bool guard_hit = false) {
  if (events.empty()) throw std::invalid_argument("zeno_report: empty event log");
  ZenoReport r;
  r.guard_hit = guard_hit;
  bool gaps_ok = true;
  for (const auto& [agent, list] : events_by_agent(events)) {
    for (std::size_t k = 1; k < list.size(); ++k) {
      const double gap = list[k]->t_k - list[k - 1]->t_k;
      r.min_gap = std::min(r.min_gap, gap);
      if (!(gap >= 10.0 * time_tol(list[k]->t_k, time_tol_rel))) gaps_ok = false;
      const double decade = gap > 0.0 ? std::floor(std::log10(gap)) : -100.0;
      const int bin = std::clamp(static_cast<int>(decade) + 12, 0,
                                 static_cast<int>(r.histogram.size()) - 1);
      ++r.histogram[static_cast<std::size_t>(bin)];
    }
  }
  r.pass = gaps_ok && !guard_hit;
  return r;
}

inline double final_to_initial_error(const ScenarioResult& result) {
  const auto curve = consensus_error_curve(result);
  if (curve.empty()) throw std::invalid_argument("empty trajectory");
  return curve.front().value > 0.0 ? curve.back().value / curve.front().value : 0.0;
}

}  // namespace detma
