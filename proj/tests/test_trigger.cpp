#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "detma/trigger.hpp"
#include "oracles.hpp"

using namespace detma;

namespace {

DesignParams unit_params(std::size_t n = 1) { return default_params(n, 5.0, 2); }

}  // namespace

using oracle::explicit_quadratic;
using oracle::random_spd;

TEST(Omega, Examples) {
  const auto p = unit_params();
  EXPECT_DOUBLE_EQ(omega(0.0, 1.0, 1.0, p), -3.0);
  EXPECT_DOUBLE_EQ(omega(1.0, 0.0, 0.0, p), -3.0);
  EXPECT_DOUBLE_EQ(omega(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 2.0, p), -5.0);
  EXPECT_THROW(omega(0.0, 0.0, 1.0, p), std::domain_error);
}

TEST(Omega, NonpositiveForPositiveParameters) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_real_distribution<double> pos(1e-3, 10.0);
  for (int trial = 0; trial < 2000; ++trial) {
    DesignParams p = unit_params();
    p.alpha = pos(gen);
    p.delta = pos(gen);
    p.beta = pos(gen);
    p.eta = pos(gen);
    p.epsilon = pos(gen);
    const double e_sq = u(gen);
    const double z_sq = u(gen) + 1e-6;
    const double theta = u(gen);
    EXPECT_LE(omega(e_sq, z_sq, theta, p), 0.0);
    EXPECT_LE(theta_derivative(e_sq, z_sq, theta, 0.7, p), -0.7);
  }
}

TEST(ThetaDerivative, Examples) {
  const auto p = unit_params();
  EXPECT_DOUBLE_EQ(theta_derivative(0.0, 0.0, 3.0, 1.0, p), -1.0);
  EXPECT_DOUBLE_EQ(theta_derivative(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 1.0, 1.0, p), -4.0);
  // below the zero-norm tolerance both norms count as zero
  EXPECT_DOUBLE_EQ(theta_derivative(1e-26, 1e-26, 3.0, 2.0, p), -2.0);
}

TEST(LyapunovComponent, Examples) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_EQ(lyapunov_component(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), 1.0, eye), 0.0);
  EXPECT_EQ(lyapunov_component(Eigen::Vector2d(1, 0), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), 0.0, eye), 1.0);
  EXPECT_EQ(lyapunov_component(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), Eigen::VectorXd::Constant(1, 2.0), 3.0, eye), 16.0);
}

TEST(LyapunovComponent, MatchesHandSubstitution) {
  std::mt19937_64 gen(22);
  std::uniform_real_distribution<double> theta(0.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::MatrixXd p = random_spd(gen, 3);
    const Eigen::VectorXd eps = oracle::random_matrix(gen, 3, 1);
    const Eigen::VectorXd e = oracle::random_matrix(gen, 3, 1);
    const Eigen::VectorXd z = oracle::random_matrix(gen, 3, 1);
    const double th = theta(gen);
    double z_sq = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) z_sq += z(i) * z(i);
    const double ref = explicit_quadratic(eps, p) + th * explicit_quadratic(e, p) + th * z_sq;
    const double got = lyapunov_component(eps, e, z, th, p);
    ASSERT_NEAR(got, ref, 1e-12 * std::max(1.0, std::abs(ref)));
    ASSERT_GE(got, 0.0);
  }
}

TEST(ComputeF, Examples) {
  EventSample back{0.0, 0.0, 3.0, 2.0, 1.0};
  back.V_k = back.eps_P_eps + back.theta_bar_k * back.z_sq;
  // rho = 0, eps unchanged: F = theta_bar * z_sq
  EXPECT_DOUBLE_EQ(compute_F(back, 1.0, 2.0, 1.0, 0.0), 6.0);
  // hand substitution with rho * span = ln 2
  EventSample h{0.0, 3.0, 1.0, 2.0, 1.0};
  EXPECT_NEAR(compute_F(h, 4.0, 1.0 + std::log(2.0), 1.0, 1.0), -2.5, 1e-15);
  // vanishing current error: F = V_back * decay
  EXPECT_NEAR(compute_F(h, 0.0, 2.0, 1.5, 0.8), 3.0 * std::exp(-0.4), 1e-15);
  EXPECT_THROW(compute_F(h, 0.0, 1.0, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(compute_F(h, 0.0, 1.0, 2.0, 1.0), std::invalid_argument);
  EXPECT_THROW(compute_F(EventSample{5.0, 1, 1, 1, 1}, 0.0, 6.0, 4.0, 1.0), std::invalid_argument);
}

TEST(ComputeF, MatchesPrintedThreeTermFormula) {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::MatrixXd p = random_spd(gen, 2);
    const Eigen::VectorXd eps_back = oracle::random_matrix(gen, 2, 1);
    const Eigen::VectorXd z_back = oracle::random_matrix(gen, 2, 1);
    const Eigen::VectorXd eps_now = oracle::random_matrix(gen, 2, 1);
    const double theta_bar_back = 5.0 * u(gen);
    const double t_back = u(gen);
    const double t_prev = t_back + u(gen);
    const double t_k = t_prev + u(gen) + 1e-3;
    const double rho = 3.0 * u(gen);
    const double decay = std::exp(-rho * (t_k - t_prev));
    const double ref = explicit_quadratic(eps_back, p) * decay - explicit_quadratic(eps_now, p) +
                       theta_bar_back * decay * z_back.squaredNorm();
    EventSample back;
    back.t_k = t_back;
    back.eps_P_eps = explicit_quadratic(eps_back, p);
    back.z_sq = z_back.squaredNorm();
    back.theta_bar_k = theta_bar_back;
    back.V_k = back.eps_P_eps + theta_bar_back * back.z_sq;
    const double got = compute_F(back, eps_now, t_k, t_prev, rho, p);
    ASSERT_NEAR(got, ref, 1e-12 * std::max(1.0, std::abs(ref)));
    // equivalently V_back * decay - eps' P eps now
    ASSERT_NEAR(got, back.V_k * decay - explicit_quadratic(eps_now, p), 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST(UpdateThreshold, Examples) {
  auto r = update_threshold(10.0, 1.0, 5.0, 1e-9);
  EXPECT_EQ(r.theta_bar, 5.0);
  EXPECT_EQ(r.branch, Branch::Default);
  r = update_threshold(10.0, 4.0, 5.0, 1e-9);
  EXPECT_EQ(r.theta_bar, 2.5);
  EXPECT_EQ(r.branch, Branch::Adaptive);
  r = update_threshold(-1.0, 4.0, 5.0, 1e-9);
  EXPECT_EQ(r.theta_bar, 1e-9);
  EXPECT_EQ(r.branch, Branch::Clamped);
  r = update_threshold(-1.0, 0.0, 5.0, 1e-9);
  EXPECT_EQ(r.theta_bar, 5.0);
  EXPECT_EQ(r.branch, Branch::Default);
  EXPECT_THROW(update_threshold(1.0, 1.0, 0.0, 1e-9), std::invalid_argument);
}

TEST(UpdateThreshold, ContinuousAcrossTheBranchBoundary) {
  const double f = 7.0;
  const double tb0 = 2.0;
  const double boundary = f / tb0;
  EXPECT_NEAR(update_threshold(f, boundary * (1 + 1e-12), tb0, 1e-9).theta_bar, tb0, 1e-10);
  EXPECT_EQ(update_threshold(f, boundary * (1 - 1e-12), tb0, 1e-9).theta_bar, tb0);
}

TEST(Vma, Examples) {
  const std::vector<double> v{4, 2, 3};
  EXPECT_DOUBLE_EQ(vma(v, 2), 2.5);
  EXPECT_DOUBLE_EQ(vma(std::vector<double>{7}, 50), 7.0);
  EXPECT_DOUBLE_EQ(vma(std::vector<double>{1, 1, 1, 1}, 3), 1.0);
  EXPECT_THROW(vma(std::vector<double>{}, 3), std::invalid_argument);
}

TEST(Vma, OverHistory) {
  SampleHistory h(3);
  for (int k = 0; k < 5; ++k) h.push({static_cast<double>(k), static_cast<double>(k * k), 0, 0, 0});
  EXPECT_EQ(h.size(), 3u);
  EXPECT_DOUBLE_EQ(vma(h, 2), (9.0 + 16.0) / 2.0);
  EXPECT_DOUBLE_EQ(vma(h, 10), (4.0 + 9.0 + 16.0) / 3.0);
}

TEST(SampleHistory, OrderingAndEviction) {
  SampleHistory h(2);
  h.push({1.0, 1, 0, 0, 0});
  EXPECT_THROW(h.push({1.0, 1, 0, 0, 0}), std::invalid_argument);
  h.push({2.0, 2, 0, 0, 0});
  h.push({3.0, 3, 0, 0, 0});
  EXPECT_EQ(h.from_back(0).t_k, 3.0);
  EXPECT_EQ(h.from_back(1).t_k, 2.0);
  EXPECT_THROW(h.from_back(2), std::out_of_range);
  EXPECT_THROW(SampleHistory(0), std::invalid_argument);
}

TEST(SetmCheck, Examples) {
  EXPECT_FALSE(setm_check(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 0.1));
  EXPECT_TRUE(setm_check(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), 0.1));
  EXPECT_TRUE(setm_check(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 2.0), 0.2));
  EXPECT_FALSE(setm_check(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 2.0), 0.3));
}

TEST(ReferenceIndex, WarmupUsesOldestSample) {
  EXPECT_EQ(reference_index(1, 3), 0u);
  EXPECT_EQ(reference_index(2, 3), 0u);
  EXPECT_EQ(reference_index(3, 3), 0u);
  EXPECT_EQ(reference_index(4, 3), 1u);
  EXPECT_EQ(reference_offset(4, 3), 2u);
  EXPECT_EQ(reference_offset(1, 1), 0u);
  EXPECT_EQ(reference_offset(7, 1), 0u);
}

TEST(OnEvent, FirstEventUsesInitialThreshold) {
  auto p = unit_params();
  TriggerState s(p.ell);
  const auto o = on_event(s, 2.0, 3.0, 0.0, p, 0, TriggerMode::DetmMa);
  EXPECT_EQ(o.branch, Branch::Warmup);
  EXPECT_EQ(s.theta_bar, 5.0);
  EXPECT_EQ(s.theta, 5.0);
  EXPECT_TRUE(std::isnan(o.F));
  EXPECT_DOUBLE_EQ(o.sample.V_k, 2.0 + 5.0 * 3.0);
}

TEST(OnEvent, FixedModeNeverAdapts) {
  auto p = unit_params();
  TriggerState s(p.ell);
  for (int k = 0; k < 10; ++k) {
    const auto o = on_event(s, 100.0 * k, 1.0, 0.1 * k, p, 0, TriggerMode::DetmFixed);
    EXPECT_EQ(o.branch, Branch::Fixed);
    EXPECT_EQ(s.theta_bar, 5.0);
    EXPECT_EQ(s.theta, 5.0);
  }
  EXPECT_EQ(s.event_count, 10u);
}

TEST(OnEvent, StaticModeRecordsZeroThreshold) {
  auto p = unit_params();
  TriggerState s(p.ell);
  const auto o = on_event(s, 1.0, 1.0, 0.0, p, 0, TriggerMode::Setm);
  EXPECT_EQ(o.branch, Branch::Static);
  EXPECT_EQ(o.sample.V_k, 1.0);
}

TEST(OnEvent, AdaptiveComposesFAndThreshold) {
  auto p = unit_params();
  p.ell = 2;
  p.rho = 0.7;
  TriggerState s(p.ell);
  on_event(s, 1.0, 0.5, 0.0, p, 0, TriggerMode::DetmMa);  // V0 = 3.5
  on_event(s, 0.5, 0.0, 0.4, p, 0, TriggerMode::DetmMa);  // z = 0: default
  // k = 2 reads event 0; eps = 0 and large z -> theta_bar = V0 e^{-rho span} / z_sq
  const auto o = on_event(s, 0.0, 100.0, 1.0, p, 0, TriggerMode::DetmMa);
  const double expected = 3.5 * std::exp(-0.7 * 0.6) / 100.0;
  EXPECT_EQ(o.branch, Branch::Adaptive);
  EXPECT_NEAR(s.theta_bar, expected, 1e-15);
  EXPECT_NEAR(o.sample.V_k, 3.5 * std::exp(-0.7 * 0.6), 1e-14);
  EXPECT_EQ(s.theta, s.theta_bar);
}

TEST(OnEvent, EllStepSpanUsesReferenceTime) {
  auto p = unit_params();
  p.ell = 2;
  p.rho = 0.7;
  TriggerState s(p.ell);
  on_event(s, 1.0, 0.5, 0.0, p, 0, TriggerMode::DetmMa, DecaySpan::EllStep);
  on_event(s, 0.5, 0.0, 0.4, p, 0, TriggerMode::DetmMa, DecaySpan::EllStep);
  const auto o = on_event(s, 0.0, 100.0, 1.0, p, 0, TriggerMode::DetmMa, DecaySpan::EllStep);
  EXPECT_NEAR(o.F, 3.5 * std::exp(-0.7 * 1.0), 1e-14);
}

TEST(OnEvent, DuringWarmupReadsOldestSample) {
  auto p = unit_params();
  p.ell = 50;
  p.rho = 0.0;
  TriggerState s(p.ell);
  on_event(s, 1.0, 1.0, 0.0, p, 0, TriggerMode::DetmMa);  // V0 = 6
  for (int k = 1; k < 5; ++k) {
    const auto o = on_event(s, 2.0, 0.0, 0.1 * k, p, 0, TriggerMode::DetmMa);
    EXPECT_DOUBLE_EQ(o.F, 6.0 - 2.0);
  }
}

TEST(OnEvent, DecayEqualityOnAdaptiveBranch) {
  std::mt19937_64 gen(24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto p = unit_params();
  p.ell = 3;
  p.rho = 2.0;
  p.theta_bar_0 = {50.0};
  TriggerState s(p.ell);
  std::vector<EventSample> log;
  double t = 0.0;
  int adaptive = 0;
  for (int k = 0; k < 400; ++k) {
    const auto o = on_event(s, 0.2 * u(gen), 0.1 + u(gen), t, p, 0, TriggerMode::DetmMa);
    log.push_back(o.sample);
    if (o.branch == Branch::Adaptive) {
      ++adaptive;
      const double span = t - log[log.size() - 2].t_k;
      const double target = log[reference_index(o.k, p.ell)].V_k * std::exp(-p.rho * span);
      EXPECT_NEAR(o.sample.V_k, target, 1e-9 * target);
    }
    EXPECT_GE(s.theta_bar, p.theta_min);
    t += 0.01 + 0.1 * u(gen);
  }
  EXPECT_GT(adaptive, 10);
}

TEST(OnEvent, RejectsNonAdvancingTime) {
  auto p = unit_params();
  TriggerState s(p.ell);
  on_event(s, 1.0, 1.0, 1.0, p, 0, TriggerMode::DetmMa);
  EXPECT_THROW(on_event(s, 1.0, 1.0, 1.0, p, 0, TriggerMode::DetmMa), std::invalid_argument);
}

TEST(Enums, RoundTripNames) {
  for (auto m : {TriggerMode::DetmMa, TriggerMode::DetmFixed, TriggerMode::Setm}) {
    EXPECT_EQ(parse_trigger_mode(to_string(m)), m);
  }
  for (auto s : {DecaySpan::OneStep, DecaySpan::EllStep}) EXPECT_EQ(parse_decay_span(to_string(s)), s);
  for (int b = 0; b < 6; ++b) {
    EXPECT_EQ(parse_branch(to_string(static_cast<Branch>(b))), static_cast<Branch>(b));
  }
  EXPECT_THROW(parse_trigger_mode("detm"), std::invalid_argument);
  EXPECT_THROW(parse_decay_span("two-step"), std::invalid_argument);
}
