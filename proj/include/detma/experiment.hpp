#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "detma/analysis.hpp"
#include "detma/config.hpp"
#include "detma/sim.hpp"

namespace detma {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitSimulation = 2, kExitVerdict = 3 };

/// 17 significant digits, enough to round-trip any double.
inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Short form for labels and headers.
inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Metrics

struct RunMetrics {
  TriggerMode mode = TriggerMode::DetmMa;
  RunStatus status = RunStatus::Completed;
  std::string diagnostic;
  std::size_t events = 0;
  std::optional<IetStat> iet;  // absent when some agent fired fewer than twice
  double initial_error = 0.0;
  double final_error = 0.0;
  double error_ratio = 0.0;
  std::size_t vma_violations = 0;
  std::size_t decay_one_step = 0;
  std::size_t decay_one_step_clamped = 0;
  std::size_t decay_ell_step = 0;
  std::size_t decay_ell_step_clamped = 0;
  double adaptive_equality_error = 0.0;
  std::array<std::size_t, 6> branches{};
  ZenoReport zeno;

  std::size_t decay_nonclamped(DecaySpan span) const {
    return span == DecaySpan::OneStep ? decay_one_step - decay_one_step_clamped
                                      : decay_ell_step - decay_ell_step_clamped;
  }

  /// Verdicts checked under --strict. VMA and decay only bind the
  /// moving-average mechanism.
  bool vma_pass() const { return mode != TriggerMode::DetmMa || vma_violations == 0; }
  bool decay_pass(DecaySpan span) const {
    return mode != TriggerMode::DetmMa || decay_nonclamped(span) == 0;
  }
};

inline RunMetrics compute_metrics(const ScenarioResult& r) {
  RunMetrics m;
  const auto& sc = r.scenario;
  const auto& p = sc.model.params;
  m.mode = sc.mode;
  m.status = r.status;
  m.diagnostic = r.diagnostic;
  m.events = r.events.size();
  const auto by_agent = events_by_agent(r.events);
  const bool enough = by_agent.size() == sc.topology.size() &&
                      std::all_of(by_agent.begin(), by_agent.end(),
                                  [](const auto& kv) { return kv.second.size() >= 2; });
  if (enough) m.iet = iet_stats(r.events).aggregate;
  const auto curve = consensus_error_curve(r);
  m.initial_error = curve.front().value;
  m.final_error = curve.back().value;
  m.error_ratio = m.initial_error > 0.0 ? m.final_error / m.initial_error : 0.0;
  m.vma_violations = check_vma_monotone(r.events, p.ell).size();
  const auto one = check_decay_contract(r.events, p.rho, p.ell, DecaySpan::OneStep);
  const auto ell = check_decay_contract(r.events, p.rho, p.ell, DecaySpan::EllStep);
  m.decay_one_step = one.size();
  m.decay_one_step_clamped = count_branch(one, Branch::Clamped);
  m.decay_ell_step = ell.size();
  m.decay_ell_step_clamped = count_branch(ell, Branch::Clamped);
  m.adaptive_equality_error = adaptive_equality_error(r.events, p.rho, p.ell, sc.decay_span);
  for (const auto& e : r.events) ++m.branches[static_cast<std::size_t>(e.branch)];
  m.zeno = zeno_report(r.events, sc.sim.time_tol_rel, r.status == RunStatus::ZenoGuard);
  return m;
}

inline void write_metrics(std::ostream& out, const RunMetrics& m, DecaySpan span) {
  auto verdict = [](bool ok) { return ok ? "pass" : "fail"; };
  out << "trigger_mode: " << to_string(m.mode) << "\n";
  out << "status: " << to_string(m.status) << "\n";
  if (!m.diagnostic.empty()) out << "diagnostic: \"" << m.diagnostic << "\"\n";
  out << "events: " << m.events << "\n";
  if (m.iet) {
    out << "mean_iet: " << num(m.iet->mean) << "\n";
    out << "min_iet: " << num(m.iet->min) << "\n";
    out << "max_iet: " << num(m.iet->max) << "\n";
  } else {
    out << "mean_iet: .nan\n";
  }
  out << "initial_consensus_error: " << num(m.initial_error) << "\n";
  out << "final_consensus_error: " << num(m.final_error) << "\n";
  out << "error_ratio: " << num(m.error_ratio) << "\n";
  out << "vma_violations: " << m.vma_violations << "\n";
  out << "vma_verdict: " << verdict(m.vma_pass()) << "\n";
  out << "decay_span: " << to_string(span) << "\n";
  out << "decay_contract:\n";
  out << "  one-step: {violations: " << m.decay_one_step
      << ", clamped: " << m.decay_one_step_clamped << "}\n";
  out << "  ell-step: {violations: " << m.decay_ell_step
      << ", clamped: " << m.decay_ell_step_clamped << "}\n";
  out << "decay_verdict: " << verdict(m.decay_pass(span)) << "\n";
  out << "adaptive_equality_error: " << num(m.adaptive_equality_error) << "\n";
  out << "branches:\n";
  for (std::size_t b = 0; b < m.branches.size(); ++b) {
    out << "  " << to_string(static_cast<Branch>(b)) << ": " << m.branches[b] << "\n";
  }
  out << "zeno:\n";
  out << "  min_gap: " << num(m.zeno.min_gap) << "\n";
  out << "  guard_hit: " << (m.zeno.guard_hit ? "true" : "false") << "\n";
  out << "  histogram_decades_from_1e-12: [";
  for (std::size_t b = 0; b < m.zeno.histogram.size(); ++b) {
    out << (b ? ", " : "") << m.zeno.histogram[b];
  }
  out << "]\n";
  out << "zeno_verdict: " << verdict(m.zeno.pass) << "\n";
}

// ---------------------------------------------------------------------------
// CSV emission

inline void write_trajectory_csv(std::ostream& out, const ScenarioResult& r) {
  if (r.trajectory.empty()) return;
  const auto& first = r.trajectory.front();
  const auto nx = first.x.rows();
  const auto n = first.x.cols();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < nx; ++c) out << ",x" << i + 1 << "_" << c + 1;
  }
  for (Eigen::Index c = 0; c < nx; ++c) out << ",x0_" << c + 1;
  for (Eigen::Index i = 0; i < n; ++i) out << ",theta_" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i) out << ",V_" << i + 1;
  out << ",eps_max\n";
  for (const auto& pt : r.trajectory) {
    out << num(pt.t);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < nx; ++c) out << "," << num(pt.x(c, i));
    }
    for (Eigen::Index c = 0; c < nx; ++c) out << "," << num(pt.x0(c));
    for (Eigen::Index i = 0; i < n; ++i) out << "," << num(pt.theta(i));
    for (Eigen::Index i = 0; i < n; ++i) out << "," << num(pt.V(i));
    out << "," << num((pt.x.colwise() - pt.x0).colwise().norm().maxCoeff()) << "\n";
  }
}

inline void write_events_csv(std::ostream& out, const EventLog& events) {
  out << "agent,k,t_k,iet,V_k,z_sq,theta_bar,F,branch\n";
  for (const auto& e : events) {
    out << e.agent << "," << e.k << "," << num(e.t_k) << "," << num(e.iet) << "," << num(e.V_k)
        << "," << num(e.z_sq) << "," << num(e.theta_bar) << "," << num(e.F) << ","
        << to_string(e.branch) << "\n";
  }
}

namespace experiment_detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
}

inline std::filesystem::path resolve(const std::filesystem::path& dir, const std::string& name) {
  const std::filesystem::path p(name);
  return p.is_absolute() ? p : dir / p;
}

}  // namespace experiment_detail

// ---------------------------------------------------------------------------
// Single run

struct RunOptions {
  std::filesystem::path out_dir = ".";
  bool quiet = false;
  bool strict = false;
  bool write_files = true;
};

struct SingleRunReport {
  ScenarioResult result;
  RunMetrics metrics;
  int exit_code = kExitOk;
};

inline SingleRunReport run_single(const SimConfig& config, const RunOptions& opts = {}) {
  using experiment_detail::resolve;
  using experiment_detail::write_file;
  SingleRunReport rep;
  rep.result = run(make_scenario(config));
  rep.metrics = compute_metrics(rep.result);
  if (opts.write_files) {
    std::ostringstream traj, ev, met;
    write_trajectory_csv(traj, rep.result);
    write_events_csv(ev, rep.result.events);
    write_metrics(met, rep.metrics, config.decay_span);
    write_file(resolve(opts.out_dir, config.output.trajectory), traj.str());
    write_file(resolve(opts.out_dir, config.output.events), ev.str());
    write_file(resolve(opts.out_dir, config.output.metrics), met.str());
  }
  const auto& m = rep.metrics;
  if (!opts.quiet) {
    std::cout << to_string(m.mode) << ": " << to_string(m.status) << ", " << m.events << " events";
    if (m.iet) std::cout << ", mean IET " << num(m.iet->mean);
    std::cout << ", error ratio " << num(m.error_ratio) << ", VMA "
              << (m.vma_pass() ? "pass" : "fail") << ", Zeno " << (m.zeno.pass ? "pass" : "fail")
              << "\n";
  }
  if (m.status == RunStatus::Diverged) {
    std::cerr << "simulation failed: " << m.diagnostic << "\n";
    rep.exit_code = kExitSimulation;
  } else if (opts.strict &&
             (!m.zeno.pass || !m.vma_pass() || !m.decay_pass(config.decay_span))) {
    rep.exit_code = kExitVerdict;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Sweep

/// The configuration a sweep cell runs with; feeding it to run_single
/// reproduces the cell.
inline SimConfig cell_config(const SimConfig& base, TriggerMode mode, std::size_t ell,
                             double theta_bar_0) {
  SimConfig c = base;
  c.sweep.reset();
  c.trigger_mode = mode;
  c.params.ell = ell;
  c.params.theta_bar_0.assign(c.topology.n, theta_bar_0);
  return c;
}

struct SweepCell {
  TriggerMode mode = TriggerMode::DetmMa;
  std::size_t ell = 0;
  double theta_bar_0 = 0.0;
  std::optional<RunMetrics> metrics;
  std::string error;  // set when the cell could not run

  std::string mark() const {
    if (!metrics) return "error";
    if (metrics->status == RunStatus::Diverged) return "diverged";
    if (metrics->status == RunStatus::ZenoGuard) return "zeno-guard";
    return metrics->iet ? num(metrics->iet->mean) : "nan";
  }
};

struct SweepReport {
  std::vector<SweepCell> cells;  // detm-ma grid row-major, then baselines
  int exit_code = kExitOk;
};

inline std::vector<SweepCell> sweep_plan(const SimConfig& config) {
  const auto& sw = *config.sweep;
  std::vector<SweepCell> cells;
  for (auto ell : sw.ell_list) {
    for (auto tb : sw.theta_bar0_list) cells.push_back({TriggerMode::DetmMa, ell, tb, {}, {}});
  }
  if (sw.baselines) {
    cells.push_back({TriggerMode::Setm, config.params.ell, sw.theta_bar0_list.front(), {}, {}});
    for (auto tb : sw.theta_bar0_list) {
      cells.push_back({TriggerMode::DetmFixed, config.params.ell, tb, {}, {}});
    }
  }
  return cells;
}

inline void write_sweep_summary(std::ostream& out, const SimConfig& config,
                                const std::vector<SweepCell>& cells) {
  const auto& sw = *config.sweep;
  const std::size_t cols = sw.theta_bar0_list.size();
  out << "mean_iet";
  for (auto tb : sw.theta_bar0_list) out << ",theta_bar_0=" << label(tb);
  out << "\n";
  for (std::size_t r = 0; r < sw.ell_list.size(); ++r) {
    out << "ell=" << sw.ell_list[r];
    for (std::size_t c = 0; c < cols; ++c) out << "," << cells[r * cols + c].mark();
    out << "\n";
  }
  if (sw.baselines) {
    const std::size_t base = sw.ell_list.size() * cols;
    out << "setm";
    for (std::size_t c = 0; c < cols; ++c) out << "," << cells[base].mark();
    out << "\n" << "detm-fixed";
    for (std::size_t c = 0; c < cols; ++c) out << "," << cells[base + 1 + c].mark();
    out << "\n";
  }
}

inline void write_sweep_runs(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "mode,ell,theta_bar_0,status,events,mean_iet,min_iet,initial_error,final_error,"
         "error_ratio,vma_violations,decay_one_step,decay_one_step_clamped,decay_ell_step,"
         "decay_ell_step_clamped,zeno\n";
  for (const auto& c : cells) {
    out << to_string(c.mode) << "," << c.ell << "," << num(c.theta_bar_0) << ",";
    if (!c.metrics) {
      out << "error,,,,,,,,,,,,\n";
      continue;
    }
    const auto& m = *c.metrics;
    out << to_string(m.status) << "," << m.events << ","
        << (m.iet ? num(m.iet->mean) : "nan") << "," << (m.iet ? num(m.iet->min) : "nan") << ","
        << num(m.initial_error) << "," << num(m.final_error) << "," << num(m.error_ratio) << ","
        << m.vma_violations << "," << m.decay_one_step << "," << m.decay_one_step_clamped << ","
        << m.decay_ell_step << "," << m.decay_ell_step_clamped << ","
        << (m.zeno.pass ? "pass" : "fail") << "\n";
  }
}

inline SweepReport run_sweep(const SimConfig& config, const RunOptions& opts = {}) {
  using experiment_detail::resolve;
  using experiment_detail::write_file;
  if (!config.sweep) throw std::invalid_argument("run_sweep: config has no sweep section");
  SweepReport rep;
  rep.cells = sweep_plan(config);

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t idx = next++; idx < rep.cells.size(); idx = next++) {
      auto& cell = rep.cells[idx];
      try {
        RunOptions cell_opts;
        cell_opts.write_files = false;
        cell_opts.quiet = true;
        cell.metrics = run_single(cell_config(config, cell.mode, cell.ell, cell.theta_bar_0),
                                  cell_opts)
                           .metrics;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (!opts.quiet) {
        std::lock_guard lock(log_mutex);
        std::cout << to_string(cell.mode) << " ell=" << cell.ell
                  << " theta_bar_0=" << label(cell.theta_bar_0) << ": " << cell.mark()
                  << (cell.error.empty() ? "" : " (" + cell.error + ")") << "\n";
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(config.sweep->workers, 1, rep.cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (opts.write_files) {
    std::ostringstream summary, runs;
    write_sweep_summary(summary, config, rep.cells);
    write_sweep_runs(runs, rep.cells);
    write_file(resolve(opts.out_dir, config.output.sweep_summary), summary.str());
    write_file(resolve(opts.out_dir, config.output.sweep_runs), runs.str());
  }
  if (opts.strict) {
    for (const auto& c : rep.cells) {
      if (c.mode != TriggerMode::DetmMa) continue;
      if (!c.metrics || c.metrics->status != RunStatus::Completed || !c.metrics->zeno.pass ||
          !c.metrics->vma_pass() || !c.metrics->decay_pass(config.decay_span)) {
        rep.exit_code = kExitVerdict;
      }
    }
  }
  return rep;
}

}  // namespace detma
