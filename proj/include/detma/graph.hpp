#pragma once

#include <cstddef>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace detma {

struct Edge {
  std::size_t i;  // 1-based
  std::size_t j;  // 1-based
  double weight;
};

struct Pin {
  std::size_t i;  // 1-based
  double gain;
};

/// Weighted undirected follower graph plus leader pinning gains.
///
/// Agents are numbered from 1 in configs and logs; storage is 0-based.
class Topology {
 public:
  Topology() = default;

  std::size_t size() const { return static_cast<std::size_t>(pinning_.size()); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& pinning() const { return pinning_; }
  double weight(std::size_t i, std::size_t j) const { return weights_(i, j); }
  double pin(std::size_t i) const { return pinning_(i); }

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.weights_ == b.weights_ && a.pinning_ == b.pinning_;
  }

  friend Topology build_topology(std::size_t n, const std::vector<Edge>& edges,
                                 const std::vector<Pin>& pinning);

 private:
  Eigen::MatrixXd weights_;
  Eigen::VectorXd pinning_;
};

inline Topology build_topology(std::size_t n, const std::vector<Edge>& edges,
                               const std::vector<Pin>& pinning) {
  if (n == 0) throw std::invalid_argument("topology needs at least one follower");
  Topology t;
  t.weights_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  t.pinning_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

  auto check_index = [n](std::size_t idx, const char* what) {
    if (idx < 1 || idx > n) {
      throw std::invalid_argument(std::string(what) + " index " + std::to_string(idx) +
                                  " outside 1.." + std::to_string(n));
    }
  };

  for (const auto& e : edges) {
    check_index(e.i, "edge");
    check_index(e.j, "edge");
    if (e.i == e.j) throw std::invalid_argument("self-loop on agent " + std::to_string(e.i));
    if (!(e.weight > 0.0)) {
      throw std::invalid_argument("edge (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                                  ") has nonpositive weight");
    }
    const auto a = static_cast<Eigen::Index>(e.i - 1);
    const auto b = static_cast<Eigen::Index>(e.j - 1);
    if (t.weights_(a, b) != 0.0 && t.weights_(a, b) != e.weight) {
      throw std::invalid_argument("duplicate edge (" + std::to_string(e.i) + "," +
                                  std::to_string(e.j) + ") with conflicting weight");
    }
    t.weights_(a, b) = e.weight;
    t.weights_(b, a) = e.weight;
  }

  for (const auto& p : pinning) {
    check_index(p.i, "pinning");
    if (!(p.gain > 0.0)) {
      throw std::invalid_argument("pinning gain of agent " + std::to_string(p.i) +
                                  " must be positive");
    }
    const auto a = static_cast<Eigen::Index>(p.i - 1);
    if (t.pinning_(a) != 0.0 && t.pinning_(a) != p.gain) {
      throw std::invalid_argument("duplicate pinning of agent " + std::to_string(p.i) +
                                  " with conflicting gain");
    }
    t.pinning_(a) = p.gain;
  }
  return t;
}

/// True iff every follower reaches a pinned follower through follower edges,
/// i.e. the leader-augmented graph has a spanning tree rooted at the leader.
inline bool leader_reachable(const Topology& topology) {
  const std::size_t n = topology.size();
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  for (std::size_t i = 0; i < n; ++i) {
    if (topology.pin(i) > 0.0) {
      seen[i] = true;
      frontier.push(i);
    }
  }
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v = 0; v < n; ++v) {
      if (!seen[v] && topology.weight(u, v) > 0.0) {
        seen[v] = true;
        frontier.push(v);
      }
    }
  }
  for (bool s : seen) {
    if (!s) return false;
  }
  return true;
}

/// L + diag(pinning), with L the weighted Laplacian of the follower graph.
inline Eigen::MatrixXd coupling_matrix(const Topology& topology) {
  const Eigen::MatrixXd& w = topology.weights();
  Eigen::MatrixXd h = -w;
  h.diagonal() = w.rowwise().sum() + topology.pinning();
  return h;
}

/// Smallest eigenvalue of the (symmetric) coupling matrix.
inline double coupling_lambda_min(const Topology& topology) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(coupling_matrix(topology),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Ring of n followers with unit weights and the leader pinned to agent 1.
inline Topology benchmark_topology(std::size_t n = 4) {
  std::vector<Edge> edges;
  for (std::size_t i = 1; i <= n && n > 1; ++i) {
    const std::size_t j = i % n + 1;
    if (n == 2 && i == 2) break;
    edges.push_back({i, j, 1.0});
  }
  return build_topology(n, edges, {{1, 1.0}});
}

}  // namespace detma
