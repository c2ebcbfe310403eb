#include "lyap/lyapunov.hpp"
#include "lyap/models.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace lyap;

namespace {

Vec v1(double x) {
  Vec v(1);
  v << x;
  return v;
}

LyapunovCandidate squared_norm() {
  LyapunovCandidate c;
  c.name = "sq";
  c.eval = [](const Vec& x) { return x.squaredNorm(); };
  c.psi1 = ScalarFn([](double r) { return r * r; });
  c.psi2 = c.psi1;
  return c;
}

SystemModel decay_model() {
  return build_ode("decay", 1, [](const Vec& x, double d) -> Vec { return -(1.0 + 0.5 * std::abs(d)) * x; },
                   DisturbanceSet::interval(-1, 1));
}

}  // namespace

TEST(Geometric, Sequence) {
  auto h = geometric_sequence(1.0, 0.5, 4);
  EXPECT_EQ(h, (std::vector<double>{1.0, 0.5, 0.25, 0.125}));
  EXPECT_THROW(geometric_sequence(1.0, 1.5, 3), std::invalid_argument);
}

// Oracle: d/dt x^2 = -2 (1 + |d|/2) x^2.
TEST(Dini, MatchesAnalyticDerivative) {
  auto m = decay_model();
  for (double d : {0.0, 1.0})
    for (double x : {0.5, 2.0}) {
      auto est = dini_derivative(squared_norm(), m, v1(x), DisturbanceSignal(d));
      EXPECT_NEAR(est.value, -2 * (1 + 0.5 * d) * x * x, 1e-3 * x * x);
      EXPECT_EQ(est.h.size(), est.quotients.size());
    }
}

TEST(Dini, AllEscapingStepsThrow) {
  auto m = build_ode("sq", 1, [](const Vec& x, double) -> Vec { return x.array().square().matrix(); },
                     DisturbanceSet::none());
  std::vector<double> h{0.5, 0.1};
  EXPECT_THROW(dini_derivative(squared_norm(), m, v1(100.0), DisturbanceSignal(0.0), h, 1e-4),
               EscapeError);
  // A mix keeps the finite quotients.
  std::vector<double> mixed{0.5, 1e-4};
  auto est = dini_derivative(squared_norm(), m, v1(100.0), DisturbanceSignal(0.0), mixed, 1e-5);
  EXPECT_GT(est.value, 0.0);
}

TEST(VerifyDecay, PassesAndFails) {
  auto m = decay_model();
  std::vector<Vec> states{v1(-2.0), v1(-0.3), v1(0.7), v1(1.5)};
  std::vector<DisturbanceSignal> signals{DisturbanceSignal(-1.0), DisturbanceSignal(0.0),
                                         DisturbanceSignal(1.0)};
  auto ok = verify_decay(squared_norm(), [](double s) { return 2 * s * s; }, m, states, signals);
  EXPECT_EQ(ok.verdict, DecayVerdict::NoViolationFound);
  EXPECT_EQ(ok.samples.size(), states.size() * signals.size());
  EXPECT_LE(ok.worst_margin, ok.tol);
  auto bad = verify_decay(squared_norm(), [](double s) { return 2.5 * s * s; }, m, states, signals);
  EXPECT_EQ(bad.verdict, DecayVerdict::Violated);
  ASSERT_TRUE(bad.witness.has_value());
  // Only d = 0 violates: the |d| = 1 rate is 3.
  EXPECT_EQ(bad.samples[*bad.witness].d, DisturbanceSignal(0.0));
  std::ostringstream os;
  bad.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

// Oracle: int_0^inf 2 x0^2 e^{-2t} dt = x0^2.
TEST(IntegralBound, ExactForLinearDecay) {
  auto m = decay_model();
  auto rep = verify_integral_bound(squared_norm(), [](double s) { return 2 * s * s; }, m, v1(1.5),
                                   DisturbanceSignal(0.0), 12.0, 1e-3);
  EXPECT_TRUE(rep.passed);
  EXPECT_NEAR(rep.integral, 2.25 * (1 - std::exp(-24.0)), 1e-5);
  auto over = verify_integral_bound(squared_norm(), [](double s) { return 2.2 * s * s; }, m, v1(1.5),
                                    DisturbanceSignal(0.0), 12.0, 1e-3);
  EXPECT_FALSE(over.passed);
}

TEST(Coercivity, NormSquaredIsCoercive) {
  std::vector<double> radii{0.5, 1.0, 2.0};
  auto prof = coercivity_profile(squared_norm(), [](const Vec& x) { return x.norm(); }, 3, radii, 32);
  EXPECT_FALSE(prof.non_coercive);
  for (const auto& row : prof.rows) {
    EXPECT_NEAR(row.inf, row.radius * row.radius, 1e-12);
    EXPECT_NEAR(row.sup, row.radius * row.radius, 1e-12);
  }
}

TEST(Coercivity, BlockCandidateIsFlagged) {
  auto m = build_l2_block_model(12, 0.0);
  std::vector<Vec> w;
  for (int i = 1; i <= 12; ++i) w.push_back(m.witness_direction(i));
  std::vector<double> radii{1.0};
  auto prof = coercivity_profile(m.candidate(), [](const Vec& x) { return x.norm(); }, m.dim, radii,
                                 16, w);
  EXPECT_TRUE(prof.non_coercive);
  EXPECT_LT(prof.rows[0].inf, 0.05);
  EXPECT_NEAR(prof.rows[0].witness_values.back(), m.lambda_min.back(), 1e-12);
}

TEST(Coercivity, RejectsBadRadius) {
  std::vector<double> radii{0.0};
  EXPECT_THROW(coercivity_profile(squared_norm(), [](const Vec& x) { return x.norm(); }, 2, radii, 4),
               std::invalid_argument);
}
