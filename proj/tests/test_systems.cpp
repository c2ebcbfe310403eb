#include "lyap/models.hpp"
#include "lyap/system.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace lyap;

namespace {

SystemModel scalar_linear(double a) {
  return build_ode("lin", 1, [a](const Vec& x, double d) -> Vec { return (a + d) * x; },
                   DisturbanceSet::interval(-1, 1));
}

Vec v1(double x) {
  Vec v(1);
  v << x;
  return v;
}

}  // namespace

TEST(Signal, PiecewiseConstantEvaluation) {
  DisturbanceSignal d({0.0, 1.0, 2.5}, {3.0, -1.0, 2.0});
  EXPECT_EQ(d(0.0), 3.0);
  EXPECT_EQ(d(0.999), 3.0);
  EXPECT_EQ(d(1.0), -1.0);
  EXPECT_EQ(d(100.0), 2.0);
  EXPECT_EQ(d.next_breakpoint_after(1.0), 2.5);
  EXPECT_TRUE(std::isinf(d.next_breakpoint_after(3.0)));
}

TEST(Signal, MergesEqualNeighbours) {
  DisturbanceSignal a({0.0, 1.0, 2.0}, {1.0, 1.0, 2.0});
  DisturbanceSignal b({0.0, 2.0}, {1.0, 2.0});
  EXPECT_EQ(a, b);
}

TEST(Signal, ShiftAndConcat) {
  DisturbanceSignal d({0.0, 1.0, 2.0}, {1.0, 2.0, 3.0});
  auto s = shift_signal(d, 1.5);
  EXPECT_EQ(s(0.0), 2.0);
  EXPECT_EQ(s(0.5), 3.0);
  auto c = concat_signal(d, DisturbanceSignal(-7.0), 1.5);
  EXPECT_EQ(c(1.4), 2.0);
  EXPECT_EQ(c(1.5), -7.0);
}

TEST(Signal, JsonRoundTrip) {
  DisturbanceSignal d({0.0, 0.1, 1.0 / 3.0}, {M_PI, -1e-300, 2.0});
  EXPECT_EQ(DisturbanceSignal::from_json(d.to_json()), d);
}

TEST(Signal, PeriodicSignal) {
  auto p = periodic_signal({0.0, 1.0}, 0.25, 1.0);
  EXPECT_EQ(p(0.1), 0.0);
  EXPECT_EQ(p(0.3), 1.0);
  EXPECT_EQ(p(0.6), 0.0);
}

TEST(Signal, SamplerIsPureInIndex) {
  SignalSampler s{DisturbanceSet::interval(-2, 2), 1.0, 5.0, 4, 9, 3};
  auto many = s.take(20);
  for (std::size_t i = 0; i < many.size(); ++i) EXPECT_EQ(many[i], s(i));
  EXPECT_EQ(many[0], DisturbanceSignal(-2.0));
  for (const auto& d : many)
    for (double v : d.values()) EXPECT_TRUE(DisturbanceSet::interval(-2, 2).contains(v));
}

TEST(DisturbanceSetTest, CornersAndContains) {
  EXPECT_EQ(DisturbanceSet::real().corners(10), (std::vector<double>{10, -10, 0}));
  EXPECT_TRUE(DisturbanceSet::finite({0, 1}).contains(1));
  EXPECT_FALSE(DisturbanceSet::finite({0, 1}).contains(0.5));
  EXPECT_THROW(DisturbanceSet::interval(1, 0), std::invalid_argument);
}

// Oracle: x' = (a + d) x has x0 exp(int (a + d)).
TEST(Flow, MatchesClosedFormUnderSwitching) {
  auto m = scalar_linear(-0.5);
  DisturbanceSignal d({0.0, 0.3, 1.1}, {1.0, -1.0, 0.25});
  Trajectory tr = flow(m, 2.0, v1(1.5), d);
  double expo = 0.5 * 0.3 - 1.5 * 0.8 - 0.25 * 0.9;
  EXPECT_NEAR(tr.final_state()(0), 1.5 * std::exp(expo), 1e-12);
  EXPECT_DOUBLE_EQ(tr.final_time(), 2.0);
  // Breakpoints are hit exactly.
  EXPECT_NE(std::find(tr.times.begin(), tr.times.end(), 0.3), tr.times.end());
}

TEST(Flow, ZeroHorizonGivesSingleRow) {
  auto m = scalar_linear(1.0);
  Trajectory tr = flow(m, 0.0, v1(2.0), DisturbanceSignal(0.0));
  ASSERT_EQ(tr.times.size(), 1u);
  EXPECT_EQ(tr.final_state()(0), 2.0);
}

TEST(Flow, DetectsFiniteEscapeWithBracket) {
  // x' = x^2 from 1 escapes at t = 1.
  auto m = build_ode("sq", 1, [](const Vec& x, double) -> Vec { return x.array().square().matrix(); },
                     DisturbanceSet::none());
  Trajectory tr = flow(m, 2.0, v1(1.0), DisturbanceSignal(0.0));
  ASSERT_TRUE(tr.escaped.has_value());
  EXPECT_LT(tr.escaped->last_finite, tr.escaped->first_exceed);
  EXPECT_NEAR(tr.escaped->first_exceed, 1.0, 1e-2);
}

TEST(Flow, RejectsBadInput) {
  auto m = scalar_linear(0.0);
  EXPECT_THROW(flow(m, 1.0, Vec::Zero(2), DisturbanceSignal(0.0)), std::invalid_argument);
  FlowOptions fo;
  fo.step = 0.0;
  EXPECT_THROW(flow(m, 1.0, v1(1.0), DisturbanceSignal(0.0), fo), std::invalid_argument);
}

TEST(Flow, StepCapThrows) {
  auto m = scalar_linear(0.0);
  FlowOptions fo;
  fo.max_steps = 10;
  EXPECT_THROW(flow(m, 1.0, v1(1.0), DisturbanceSignal(0.0), fo), StepLimitError);
}

TEST(Flow, StopNormEndsEarly) {
  auto m = scalar_linear(1.0);
  FlowOptions fo;
  fo.stop_norm = 2.0;
  Trajectory tr = flow(m, 5.0, v1(1.0), DisturbanceSignal(0.0), fo);
  EXPECT_TRUE(tr.stopped);
  EXPECT_NEAR(tr.final_time(), std::log(2.0), 2e-3);
}

TEST(Flow, ExactPropagatorMatchesExpm) {
  Mat a(2, 2);
  a << 0.0, 1.0, -2.0, -0.3;
  auto m = build_linear_ode(a);
  Vec x(2);
  x << 1.0, -1.0;
  FlowOptions fo;
  fo.record = false;
  Trajectory tr = flow(m, 3.0, x, DisturbanceSignal(0.0), fo);
  // Independent oracle: RK4 at a fine step on the same matrix.
  Vec y = x;
  const int n = 30000;
  const double h = 3.0 / n;
  for (int k = 0; k < n; ++k) {
    Vec k1 = a * y, k2 = a * (y + 0.5 * h * k1), k3 = a * (y + 0.5 * h * k2), k4 = a * (y + h * k3);
    y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  EXPECT_LT((tr.final_state() - y).norm(), 1e-10);
}

TEST(Flow, TrajectoryCsvHasSeventeenDigits) {
  auto m = scalar_linear(-1.0);
  FlowOptions fo;
  fo.step = 0.5;
  Trajectory tr = flow(m, 1.0, v1(1.0 / 3.0), DisturbanceSignal(0.0), fo);
  std::ostringstream os;
  write_trajectory_csv(os, tr);
  std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "t,x_1,d");
  EXPECT_NE(s.find("0.33333333333333331"), std::string::npos);
}

TEST(Axioms, LinearModelPasses) {
  auto m = scalar_linear(-0.2);
  auto rep = check_axioms(m);
  EXPECT_TRUE(rep.identity_exact);
  EXPECT_TRUE(rep.causality_exact);
  EXPECT_LE(rep.cocycle_max, 1e-6);
  EXPECT_TRUE(rep.passed);
  EXPECT_GT(rep.samples, 0);
}

// Property: the whole zoo satisfies identity, causality and the cocycle rule.
TEST(Axioms, ModelZoo) {
  for (const auto& z : model_zoo()) {
    auto rep = check_axioms(z.model);
    EXPECT_TRUE(rep.identity_exact) << z.name;
    EXPECT_TRUE(rep.causality_exact) << z.name;
    EXPECT_LE(rep.cocycle_max, 1e-6) << z.name;
  }
}

TEST(Homogeneity, LinearPassesScalarIFails) {
  for (const auto& z : model_zoo()) {
    if (!z.linear) continue;
    auto rep = check_homogeneity(z.model);
    EXPECT_LE(rep.max_residual, 1e-8) << z.name;
    EXPECT_TRUE(rep.passed) << z.name;
  }
  auto rep = check_homogeneity(build_scalar_example(ScalarVariant::I));
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.max_residual, 1e-3);
}

TEST(Sampling, BallAndDirection) {
  auto rng = stream_rng(1, 2, 3);
  for (int k = 0; k < 100; ++k) {
    EXPECT_NEAR(sample_direction(rng, 5).norm(), 1.0, 1e-12);
    EXPECT_LE(sample_ball(rng, 3, 2.0).norm(), 2.0 + 1e-12);
  }
  auto a = stream_rng(1, 2, 3), b = stream_rng(1, 2, 3), c = stream_rng(1, 2, 4);
  EXPECT_EQ(a(), b());
  EXPECT_NE(stream_rng(1, 2, 3)(), c());
}
