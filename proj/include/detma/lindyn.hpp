#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "detma/graph.hpp"

namespace detma {

/// Scalar design parameters of the dynamic triggering rule.
struct DesignParams {
  double alpha = 1.0;
  double delta = 1.0;
  double beta = 1.0;
  double eta = 1.0;
  double epsilon = 1.0;
  double rho = 0.5;
  std::vector<double> tau;          // per agent drift rate
  std::vector<double> theta_bar_0;  // per agent initial threshold
  std::size_t ell = 50;
  double theta_min = 1e-9;

  friend bool operator==(const DesignParams&, const DesignParams&) = default;
};

inline DesignParams default_params(std::size_t n_agents, double theta_bar_0 = 5000.0,
                                   std::size_t ell = 50) {
  DesignParams p;
  p.tau.assign(n_agents, 1.0);
  p.theta_bar_0.assign(n_agents, theta_bar_0);
  p.ell = ell;
  return p;
}

inline void validate(const DesignParams& p, std::size_t n_agents) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be a positive finite scalar");
    }
  };
  positive(p.alpha, "alpha");
  positive(p.delta, "delta");
  positive(p.beta, "beta");
  positive(p.eta, "eta");
  positive(p.epsilon, "epsilon");
  positive(p.rho, "rho");
  positive(p.theta_min, "theta_min");
  if (p.ell < 1) throw std::invalid_argument("ell must be >= 1");
  if (p.tau.size() != n_agents || p.theta_bar_0.size() != n_agents) {
    throw std::invalid_argument("tau and theta_bar_0 need one entry per follower");
  }
  for (double v : p.tau) positive(v, "tau");
  for (double v : p.theta_bar_0) positive(v, "theta_bar_0");
}

struct SystemModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;
  DesignParams params;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
};

inline Eigen::MatrixXd mat_exp(const Eigen::MatrixXd& a, double t) {
  if (a.rows() != a.cols()) throw std::invalid_argument("mat_exp: matrix is not square");
  if (t == 0.0) return Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd scaled = a * t;
  return scaled.exp();
}

/// Model-based estimate e^{A dt} x_sample of a follower between its events.
inline Eigen::VectorXd propagate_estimate(const Eigen::VectorXd& x_sample,
                                          const Eigen::MatrixXd& a, double dt) {
  if (dt < 0.0) throw std::invalid_argument("propagate_estimate: negative elapsed time");
  if (dt == 0.0) return x_sample;
  return mat_exp(a, dt) * x_sample;
}

/// z_i = sum_j a_ij (xhat_j - xhat_i) + d_i (x0 - xhat_i); `i` is 0-based.
inline Eigen::VectorXd consensus_signal(std::size_t i, const std::vector<Eigen::VectorXd>& estimates,
                                        const Eigen::VectorXd& leader_state,
                                        const Topology& topology) {
  const std::size_t n = topology.size();
  if (estimates.size() != n) {
    throw std::invalid_argument("consensus_signal: need one estimate per follower");
  }
  if (i >= n) throw std::invalid_argument("consensus_signal: agent index out of range");
  const Eigen::VectorXd& xi = estimates[i];
  if (leader_state.size() != xi.size()) {
    throw std::invalid_argument("consensus_signal: leader/estimate dimension mismatch");
  }
  Eigen::VectorXd z = topology.pin(i) * (leader_state - xi);
  for (std::size_t j = 0; j < n; ++j) {
    const double w = topology.weight(i, j);
    if (w == 0.0) continue;
    if (estimates[j].size() != xi.size()) {
      throw std::invalid_argument("consensus_signal: estimate dimension mismatch");
    }
    z += w * (estimates[j] - xi);
  }
  return z;
}

inline Eigen::VectorXd control_input(const Eigen::VectorXd& z, const Eigen::MatrixXd& k) {
  if (k.cols() != z.size()) throw std::invalid_argument("control_input: dimension mismatch");
  return k * z;
}

// ---------------------------------------------------------------------------
// Gain synthesis
// ---------------------------------------------------------------------------

/// PBH test: rank [A - lambda I, B] = n for every eigenvalue with Re(lambda) >= 0.
inline bool stabilizable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol = 1e-9) {
  const Eigen::Index n = a.rows();
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  const double scale = std::max(1.0, a.norm() + b.norm());
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::complex<double> lambda = es.eigenvalues()(k);
    if (lambda.real() < -tol * scale) continue;
    Eigen::MatrixXcd m(n, n + b.cols());
    m.leftCols(n) = a.cast<std::complex<double>>() -
                    lambda * Eigen::MatrixXcd::Identity(n, n);
    m.rightCols(b.cols()) = b.cast<std::complex<double>>();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(m);
    qr.setThreshold(tol);
    if (qr.rank() < n) return false;
  }
  return true;
}

/// Solves A^T P + P A = -Q by vectorization; A must be Hurwitz for P > 0.
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd op = Eigen::MatrixXd::Zero(n * n, n * n);
  // vec(A^T P) = (I kron A^T) vec(P), vec(P A) = (A^T kron I) vec(P)
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      op.block(r * n, c * n, n, n) += eye(r, c) * a.transpose();
      op.block(r * n, c * n, n, n) += a(c, r) * eye;
    }
  }
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(q.data(), n * n);
  const Eigen::VectorXd sol = op.fullPivLu().solve(rhs);
  Eigen::MatrixXd p = Eigen::Map<const Eigen::MatrixXd>(sol.data(), n, n);
  return 0.5 * (p + p.transpose());
}

/// Stabilizing solution of A^T X + X A - X B R^-1 B^T X + Q = 0.
///
/// Matrix sign function of the Hamiltonian for the initial solution, then a
/// few Newton-Kleinman sweeps to polish the residual.
inline Eigen::MatrixXd solve_care(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  const Eigen::MatrixXd& q, const Eigen::MatrixXd& r) {
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd r_inv = r.inverse();
  const Eigen::MatrixXd g = b * r_inv * b.transpose();

  Eigen::MatrixXd h(2 * n, 2 * n);
  h << a, -g, -q, -a.transpose();

  Eigen::MatrixXd w = h;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::MatrixXd w_inv = w.inverse();
    const double det = std::abs(w.determinant());
    const double c = (det > 0.0 && std::isfinite(det))
                         ? std::pow(det, -1.0 / static_cast<double>(2 * n))
                         : 1.0;
    const Eigen::MatrixXd next = 0.5 * (c * w + w_inv / c);
    const double change = (next - w).norm() / std::max(1.0, next.norm());
    w = next;
    if (change < 1e-14) break;
  }

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd lhs(2 * n, n);
  lhs << w.topRightCorner(n, n), w.bottomRightCorner(n, n) + eye;
  Eigen::MatrixXd rhs(2 * n, n);
  rhs << -(w.topLeftCorner(n, n) + eye), -w.bottomLeftCorner(n, n);
  Eigen::MatrixXd x = lhs.colPivHouseholderQr().solve(rhs);
  x = 0.5 * (x + x.transpose());

  for (int iter = 0; iter < 5; ++iter) {
    const Eigen::MatrixXd k = r_inv * b.transpose() * x;
    const Eigen::MatrixXd a_k = a - b * k;
    x = solve_lyapunov(a_k, q + k.transpose() * r * k);
  }
  return x;
}

/// Error dynamics matrix A - lambda B K seen by the eigenmode lambda of L + D.
inline Eigen::MatrixXd closed_loop(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                   const Eigen::MatrixXd& k, double lambda) {
  return a - lambda * b * k;
}

struct GainDesign {
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;
  double lambda_min = 0.0;
  double coupling = 0.0;
};

struct GainOptions {
  double coupling = 0.0;      // <= 0 selects 1 / lambda_min
  double input_weight = 0.1;  // R = input_weight * I in the Riccati equation
  double lyapunov_weight = 1.0;  // Q = lyapunov_weight * I in the Lyapunov equation for P

  friend bool operator==(const GainOptions&, const GainOptions&) = default;
};

/// Consensus-region design: K = c R^-1 B^T X with X from the Riccati equation
/// (Q = I, R = r I) and c >= 1 / lambda_min(L + D). Since z_i collects
/// neighbour-minus-self differences, the stacked consensus error obeys
/// (I kron A - H kron BK), so every A - lambda_j B K is Hurwitz. P solves the
/// Lyapunov equation of A - lambda_min B K with Q = q I.
inline GainDesign synthesize_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  const Topology& topology, const GainOptions& opts = {}) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw std::invalid_argument("synthesize_gain: A must be square and B must have A's row count");
  }
  if (!(opts.input_weight > 0.0)) throw std::invalid_argument("synthesize_gain: input weight must be positive");
  if (!(opts.lyapunov_weight > 0.0)) {
    throw std::invalid_argument("synthesize_gain: Lyapunov weight must be positive");
  }
  if (!stabilizable(a, b)) throw std::invalid_argument("synthesize_gain: (A, B) is not stabilizable");
  if (!leader_reachable(topology)) {
    throw std::invalid_argument("synthesize_gain: some follower cannot reach the leader");
  }
  GainDesign out;
  out.lambda_min = coupling_lambda_min(topology);
  const double c_min = 1.0 / out.lambda_min;
  if (opts.coupling > 0.0 && opts.coupling < c_min * (1.0 - 1e-12)) {
    throw std::invalid_argument("synthesize_gain: coupling below 1/lambda_min");
  }
  out.coupling = opts.coupling > 0.0 ? opts.coupling : c_min;

  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.cols();
  const Eigen::MatrixXd x = solve_care(a, b, Eigen::MatrixXd::Identity(n, n),
                                       opts.input_weight * Eigen::MatrixXd::Identity(m, m));
  out.K = (out.coupling / opts.input_weight) * b.transpose() * x;
  const Eigen::MatrixXd a_cl = closed_loop(a, b, out.K, out.lambda_min);
  out.P = solve_lyapunov(a_cl, opts.lyapunov_weight * Eigen::MatrixXd::Identity(n, n));
  return out;
}

inline double lyapunov_residual(const Eigen::MatrixXd& a_cl, const Eigen::MatrixXd& p,
                                const Eigen::MatrixXd& q) {
  return (a_cl.transpose() * p + p * a_cl + q).norm();
}

inline bool hurwitz(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  return es.eigenvalues().real().maxCoeff() < 0.0;
}

/// Harmonic oscillator A = [[0,1],[-1,0]], B = [0,1]^T.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> oscillator_plant() {
  Eigen::MatrixXd a(2, 2);
  a << 0.0, 1.0, -1.0, 0.0;
  Eigen::MatrixXd b(2, 1);
  b << 0.0, 1.0;
  return {a, b};
}

inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> double_integrator_plant() {
  Eigen::MatrixXd a(2, 2);
  a << 0.0, 1.0, 0.0, 0.0;
  Eigen::MatrixXd b(2, 1);
  b << 0.0, 1.0;
  return {a, b};
}

}  // namespace detma
