#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "detma/lindyn.hpp"
#include "oracles.hpp"

using namespace detma;

namespace {

const double kPi = std::numbers::pi;

Eigen::MatrixXd rotation_generator() { return (Eigen::Matrix2d() << 0, 1, -1, 0).finished(); }

}  // namespace

TEST(MatExp, IdentityCases) {
  std::mt19937_64 gen(1);
  const Eigen::MatrixXd a = oracle::random_matrix(gen, 3, 3);
  EXPECT_EQ(mat_exp(a, 0.0), Eigen::MatrixXd::Identity(3, 3));
  EXPECT_TRUE(mat_exp(Eigen::MatrixXd::Zero(3, 3), 7.0).isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-15));
}

TEST(MatExp, QuarterRotation) {
  const Eigen::MatrixXd e = mat_exp(rotation_generator(), kPi / 2);
  EXPECT_LT((e - rotation_generator()).norm(), 1e-8);
  EXPECT_LT((e - oracle::taylor_exp(rotation_generator(), kPi / 2, 50)).norm(), 1e-8);
}

TEST(MatExp, MatchesTaylorOracleOnRandomMatrices) {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> dim(2, 4);
  std::uniform_real_distribution<double> time(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dim(gen);
    const Eigen::MatrixXd a = oracle::random_matrix(gen, n, n);
    const double t = time(gen);
    const Eigen::MatrixXd ref = oracle::taylor_exp(a, t, 60);
    EXPECT_LT((mat_exp(a, t) - ref).norm(), 1e-8 * std::max(1.0, ref.norm())) << "trial " << trial;
  }
}

TEST(MatExp, RejectsNonSquare) {
  EXPECT_THROW(mat_exp(Eigen::MatrixXd::Zero(2, 3), 1.0), std::invalid_argument);
}

TEST(PropagateEstimate, Examples) {
  const Eigen::Vector2d x(1, 0);
  EXPECT_EQ(propagate_estimate(x, Eigen::MatrixXd::Zero(2, 2), 5.0), Eigen::VectorXd(x));
  EXPECT_EQ(propagate_estimate(x, rotation_generator(), 0.0), Eigen::VectorXd(x));
  EXPECT_LT((propagate_estimate(x, rotation_generator(), kPi) - Eigen::Vector2d(-1, 0)).norm(), 1e-8);
  EXPECT_THROW(propagate_estimate(x, rotation_generator(), -1e-3), std::invalid_argument);
}

TEST(PropagateEstimate, SemigroupProperty) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> time(0.0, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd a = oracle::random_matrix(gen, 3, 3);
    const Eigen::VectorXd x = oracle::random_matrix(gen, 3, 1);
    const double s = time(gen);
    const double t = time(gen);
    const Eigen::VectorXd once = propagate_estimate(x, a, s + t);
    const Eigen::VectorXd twice = propagate_estimate(propagate_estimate(x, a, s), a, t);
    EXPECT_LT((once - twice).norm(), 1e-8 * std::max(1.0, once.norm()));
  }
}

TEST(ConsensusSignal, ZeroAtConsensus) {
  const auto t = benchmark_topology(4);
  const Eigen::Vector2d x0(0.3, -0.7);
  const std::vector<Eigen::VectorXd> xhat(4, x0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(consensus_signal(i, xhat, x0, t).norm(), 0.0);
}

TEST(ConsensusSignal, HandComputed) {
  const auto t = build_topology(2, {{1, 2, 1.0}}, {{1, 1.0}});
  const std::vector<Eigen::VectorXd> xhat{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Zero(1)};
  EXPECT_EQ(consensus_signal(0, xhat, Eigen::VectorXd::Zero(1), t)(0), -2.0);
}

TEST(ConsensusSignal, MatchesKroneckerOracle) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = oracle::random_graph(gen, 3, 0.6, 0.5);
    const auto t = build_topology(3, g.edges, g.pins);
    const Eigen::VectorXd x0 = oracle::random_matrix(gen, 2, 1);
    std::vector<Eigen::VectorXd> xhat;
    for (int i = 0; i < 3; ++i) xhat.push_back(oracle::random_matrix(gen, 2, 1));
    const Eigen::VectorXd ref = oracle::stacked_z(t.weights(), t.pinning(), xhat, x0);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_LT((consensus_signal(i, xhat, x0, t) - ref.segment(2 * static_cast<Eigen::Index>(i), 2)).norm(), 1e-12);
    }
  }
}

TEST(ConsensusSignal, Superposition) {
  std::mt19937_64 gen(5);
  const auto t = benchmark_topology(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Eigen::VectorXd> a, b, sum;
    for (int i = 0; i < 4; ++i) {
      a.push_back(oracle::random_matrix(gen, 2, 1));
      b.push_back(oracle::random_matrix(gen, 2, 1));
      sum.push_back(2.0 * a.back() - 3.0 * b.back());
    }
    const Eigen::VectorXd xa = oracle::random_matrix(gen, 2, 1);
    const Eigen::VectorXd xb = oracle::random_matrix(gen, 2, 1);
    for (std::size_t i = 0; i < 4; ++i) {
      const Eigen::VectorXd lhs = consensus_signal(i, sum, 2.0 * xa - 3.0 * xb, t);
      const Eigen::VectorXd rhs = 2.0 * consensus_signal(i, a, xa, t) - 3.0 * consensus_signal(i, b, xb, t);
      EXPECT_LT((lhs - rhs).norm(), 1e-12);
    }
  }
}

TEST(ConsensusSignal, DimensionErrors) {
  const auto t = benchmark_topology(2);
  const std::vector<Eigen::VectorXd> xhat{Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
  EXPECT_THROW(consensus_signal(0, {Eigen::Vector2d(1, 0)}, Eigen::Vector2d(0, 0), t), std::invalid_argument);
  EXPECT_THROW(consensus_signal(0, xhat, Eigen::Vector3d(0, 0, 0), t), std::invalid_argument);
  EXPECT_THROW(consensus_signal(2, xhat, Eigen::Vector2d(0, 0), t), std::invalid_argument);
}

TEST(ControlInput, Examples) {
  EXPECT_EQ(control_input(Eigen::Vector2d::Zero(), Eigen::MatrixXd::Ones(1, 2)).norm(), 0.0);
  EXPECT_EQ(control_input(Eigen::Vector2d(2, 3), (Eigen::MatrixXd(1, 2) << 1, 0).finished())(0), 2.0);
  std::mt19937_64 gen(6);
  const Eigen::MatrixXd k = oracle::random_matrix(gen, 2, 3);
  const Eigen::VectorXd z = oracle::random_matrix(gen, 3, 1);
  const Eigen::VectorXd u = control_input(z, k);
  for (Eigen::Index r = 0; r < 2; ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < 3; ++c) acc += k(r, c) * z(c);
    EXPECT_NEAR(u(r), acc, 1e-15);
  }
  EXPECT_THROW(control_input(Eigen::Vector3d::Zero(), k.leftCols(2)), std::invalid_argument);
}

TEST(Stabilizable, PbhCases) {
  const auto [a, b] = double_integrator_plant();
  EXPECT_TRUE(stabilizable(a, b));
  EXPECT_TRUE(stabilizable(rotation_generator(), (Eigen::MatrixXd(2, 1) << 0, 1).finished()));
  // unstable mode that B cannot reach
  EXPECT_FALSE(stabilizable((Eigen::Matrix2d() << 1, 0, 0, -1).finished(),
                            (Eigen::MatrixXd(2, 1) << 0, 1).finished()));
  // uncontrollable but stable mode is fine
  EXPECT_TRUE(stabilizable((Eigen::Matrix2d() << -1, 0, 0, 1).finished(),
                           (Eigen::MatrixXd(2, 1) << 0, 1).finished()));
}

TEST(SolveLyapunov, ResidualAndDefiniteness) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd a = oracle::random_matrix(gen, 3, 3);
    a -= (a.eigenvalues().real().maxCoeff() + 0.5) * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd p = solve_lyapunov(a, Eigen::MatrixXd::Identity(3, 3));
    EXPECT_LT(lyapunov_residual(a, p, Eigen::MatrixXd::Identity(3, 3)), 1e-8 * std::max(1.0, p.norm()));
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(p).info(), Eigen::Success);
  }
}

TEST(SolveCare, RiccatiResidual) {
  const auto [a, b] = oscillator_plant();
  const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd r = 0.1 * Eigen::MatrixXd::Identity(1, 1);
  const Eigen::MatrixXd x = solve_care(a, b, q, r);
  const Eigen::MatrixXd res = a.transpose() * x + x * a - x * b * r.inverse() * b.transpose() * x + q;
  EXPECT_LT(res.norm(), 1e-10);
  EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(x).info(), Eigen::Success);
  EXPECT_TRUE(hurwitz(a - b * r.inverse() * b.transpose() * x));
}

TEST(SolveCare, ScalarClosedForm) {
  // a = 0, b = 1, q = 1, r = 1  ->  x^2 = 1
  const Eigen::MatrixXd x = solve_care(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1),
                                       Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1));
  EXPECT_NEAR(x(0, 0), 1.0, 1e-12);
}

TEST(SynthesizeGain, ScalarIntegrator) {
  const auto t = build_topology(1, {}, {{1, 1.0}});
  const GainDesign g = synthesize_gain(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1), t);
  EXPECT_NEAR(g.lambda_min, 1.0, 1e-14);
  EXPECT_GT(g.K(0, 0), 0.0);
  EXPECT_LT(closed_loop(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1), g.K, g.lambda_min)(0, 0), 0.0);
}

TEST(SynthesizeGain, DoubleIntegratorAndOscillator) {
  for (const auto& plant : {double_integrator_plant(), oscillator_plant()}) {
    const auto& [a, b] = plant;
    const auto topo = benchmark_topology(4);
    const GainDesign g = synthesize_gain(a, b, topo);
    EXPECT_TRUE(hurwitz(closed_loop(a, b, g.K, g.lambda_min)));
    // every eigenmode of L + D, not only the slowest one
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(coupling_matrix(topo));
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
      EXPECT_TRUE(hurwitz(closed_loop(a, b, g.K, es.eigenvalues()(k))));
    }
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(g.P).info(), Eigen::Success);
    EXPECT_EQ(g.P, g.P.transpose());
    EXPECT_LT(lyapunov_residual(closed_loop(a, b, g.K, g.lambda_min), g.P, Eigen::MatrixXd::Identity(2, 2)), 1e-8);
  }
}

TEST(SynthesizeGain, LyapunovWeightScalesP) {
  const auto [a, b] = oscillator_plant();
  const auto topo = benchmark_topology(4);
  GainOptions opts;
  const GainDesign unit = synthesize_gain(a, b, topo, opts);
  opts.lyapunov_weight = 1e-3;
  const GainDesign scaled = synthesize_gain(a, b, topo, opts);
  EXPECT_EQ(unit.K, scaled.K);
  EXPECT_LT((scaled.P - 1e-3 * unit.P).norm(), 1e-12 * unit.P.norm());
}

TEST(SynthesizeGain, Errors) {
  const auto topo = benchmark_topology(2);
  EXPECT_THROW(synthesize_gain((Eigen::Matrix2d() << 1, 0, 0, -1).finished(),
                               (Eigen::MatrixXd(2, 1) << 0, 1).finished(), topo),
               std::invalid_argument);
  const auto [a, b] = oscillator_plant();
  EXPECT_THROW(synthesize_gain(a, b, build_topology(2, {}, {{1, 1.0}})), std::invalid_argument);
  GainOptions low;
  low.coupling = 0.5 / coupling_lambda_min(topo);
  EXPECT_THROW(synthesize_gain(a, b, topo, low), std::invalid_argument);
  EXPECT_THROW(synthesize_gain(a, Eigen::MatrixXd::Ones(3, 1), topo), std::invalid_argument);
}

TEST(DesignParams, Validation) {
  EXPECT_NO_THROW(validate(default_params(3), 3));
  EXPECT_THROW(validate(default_params(3), 4), std::invalid_argument);
  auto p = default_params(2);
  p.ell = 0;
  EXPECT_THROW(validate(p, 2), std::invalid_argument);
  p = default_params(2);
  p.tau[1] = 0.0;
  EXPECT_THROW(validate(p, 2), std::invalid_argument);
  p = default_params(2);
  p.alpha = -1.0;
  EXPECT_THROW(validate(p, 2), std::invalid_argument);
}
