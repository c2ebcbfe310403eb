#include "lyap/models.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lyap;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

double binom(int n, int k) {
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

// Unnormalised block Lyapunov matrix with integer entries.
Mat integer_p(int i) {
  Mat p(i, i);
  for (int j = 1; j <= i; ++j)
    for (int k = 1; k <= i; ++k) {
      double s = 0.0;
      for (int a = 1; a <= std::min(j, k); ++a) s += binom(j + k - 2 * a, j - a);
      p(j - 1, k - 1) = s;
    }
  return p;
}

Mat rk4_matrix(const Mat& a, double t, int n) {
  Mat y = Mat::Identity(a.rows(), a.cols());
  const double h = t / n;
  for (int k = 0; k < n; ++k) {
    Mat k1 = a * y, k2 = a * (y + 0.5 * h * k1), k3 = a * (y + 0.5 * h * k2), k4 = a * (y + h * k3);
    y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return y;
}

}  // namespace

TEST(Scalar, RightHandSides) {
  auto i = build_scalar_example(ScalarVariant::I);
  auto ii = build_scalar_example(ScalarVariant::II);
  auto iii = build_scalar_example(ScalarVariant::III);
  auto iv = build_scalar_example(ScalarVariant::IV);
  for (double x : {-2.0, -0.5, 0.0, 0.7, 1.5})
    for (double d : {-3.0, 0.0, 0.4, 2.0}) {
      Vec v = vec({x});
      EXPECT_DOUBLE_EQ(i.rhs(v, d)(0), std::abs(d) * (x - x * x * x));
      EXPECT_DOUBLE_EQ(ii.rhs(v, d)(0), d * x);
      EXPECT_DOUBLE_EQ(iii.rhs(v, d)(0), x / (std::abs(d) + 1) + d * std::max(std::abs(x) - 1, 0.0));
      EXPECT_DOUBLE_EQ(iv.rhs(v, d)(0), x / (std::abs(d) + 1));
    }
  EXPECT_EQ(parse_scalar_variant("iii"), ScalarVariant::III);
  EXPECT_THROW(parse_scalar_variant("v"), std::invalid_argument);
}

// Oracle: x' = |d|(x - x^3) has x^2 = x0^2 e^{2|d|t} / (1 - x0^2 + x0^2 e^{2|d|t}).
TEST(Scalar, VariantIClosedForm) {
  auto m = build_scalar_example(ScalarVariant::I);
  const double x0 = 0.3, d = -1.5, t = 2.0;
  double e = std::exp(2 * std::abs(d) * t);
  double expect = std::sqrt(x0 * x0 * e / (1 - x0 * x0 + x0 * x0 * e));
  EXPECT_NEAR(flow(m, t, vec({x0}), DisturbanceSignal(d)).final_state()(0), expect, 1e-9);
}

TEST(Ugatt, HittingTimesMatchClosedForms) {
  // int_0^1 dv / (1 + v^4) = (pi + 2 ln(1 + sqrt 2)) / (4 sqrt 2); t* = 1.5 times that.
  double one = 1.5 * (M_PI + 2 * std::log(1 + std::sqrt(2.0))) / (4 * std::sqrt(2.0));
  EXPECT_NEAR(ugatt_y_hitting_time(1.0), one, 1e-9);
  EXPECT_NEAR(one, 1.30046, 1e-5);
  EXPECT_NEAR(ugatt_y_hitting_time(INFINITY), 1.66608, 1e-5);
  EXPECT_NEAR(ugatt_y_hitting_time(1e15), ugatt_y_hitting_time(INFINITY), 1e-4);
  EXPECT_EQ(ugatt_y_hitting_time(0.0), 0.0);
  EXPECT_DOUBLE_EQ(signed_cbrt(-8.0), -2.0);
}

TEST(Ugatt, SimulatedYReachesZeroOnTime) {
  auto m = build_ugatt_example();
  FlowOptions fo;
  fo.step = 1e-4;
  fo.rate_from_state = true;
  Trajectory tr = flow(m, 2.0, vec({0.0, 1.0}), DisturbanceSignal(0.0), fo);
  double hit = NAN;
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    if (std::abs(tr.states[k](1)) <= 1e-6) {
      hit = tr.times[k];
      break;
    }
  EXPECT_NEAR(hit, ugatt_y_hitting_time(1.0), 2e-3);
}

TEST(Blowup, StartsLeftOfTheBarrierEscape) {
  auto ex = build_blowup_example();
  FlowOptions fo;
  fo.record = false;
  for (double z1 : {-4.0, -2.5, -1.0})
    for (double z2 : {-2.0, 0.0, 2.0}) {
      Trajectory tr = flow(ex.model, 20.0, vec({z1, z2}), DisturbanceSignal(0.0), fo);
      EXPECT_TRUE(tr.escaped.has_value()) << z1 << "," << z2;
    }
}

TEST(Blowup, RightHalfConverges) {
  auto ex = build_blowup_example();
  FlowOptions fo;
  fo.record = false;
  for (auto z : {vec({0.0, 2.0}), vec({1.5, -1.0}), vec({2.0, 0.0})}) {
    Trajectory tr = flow(ex.model, 60.0, z, DisturbanceSignal(0.0), fo);
    ASSERT_FALSE(tr.escaped.has_value());
    EXPECT_LT(tr.final_state().norm(), 0.01);
  }
}

// Property: 0 < V <= psi2 away from 0, V bounded (non-coercive), decay rate on |z| >= 2.
TEST(Blowup, CandidateProperties) {
  auto ex = build_blowup_example();
  ASSERT_TRUE(ex.v.psi2.has_value());
  EXPECT_FALSE(ex.v.psi1.has_value());
  auto rng = stream_rng(3, 0, 0);
  for (int k = 0; k < 2000; ++k) {
    Vec z = sample_ball(rng, 2, 30.0);
    if (z.norm() < 1e-3) continue;
    double v = ex.v(z);
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, (*ex.v.psi2)(z.norm()) + 1e-12);
    EXPECT_LE(v, 3.0 + 1e-12);
    if (z.norm() >= 2.0) EXPECT_LE(ex.time_scale(z) * ex.vdot_base(z) + z.norm(), 1e-9);
  }
  EXPECT_EQ(ex.v(Vec::Zero(2)), 0.0);
}

TEST(Blowup, FieldIsContinuousAcrossTheBarrier) {
  auto ex = build_blowup_example();
  for (double z2 : {-1.0, 0.0, 1.5}) {
    Vec a = ex.model.rhs(vec({-1.0 - 1e-7, z2}), 0.0), b = ex.model.rhs(vec({-1.0 + 1e-7, z2}), 0.0);
    EXPECT_LT((a - b).norm(), 1e-5);
  }
}

TEST(Block, SmallLyapunovBlocksMatchIntegerMatrix) {
  auto m = build_l2_block_model(8, 0.0);
  for (int i = 1; i <= 8; ++i) {
    Mat p = integer_p(i);
    Eigen::SelfAdjointEigenSolver<Mat> es(p);
    double top = es.eigenvalues().maxCoeff();
    EXPECT_NEAR(m.lambda_min[static_cast<std::size_t>(i - 1)], es.eigenvalues().minCoeff() / top,
                1e-9 * std::max(1.0, 1.0 / (top * 1e-6)));
    EXPECT_LT((m.lyapunov_blocks[static_cast<std::size_t>(i - 1)] - p / top).norm(), 1e-9);
  }
}

// Goldens from a high-precision eigen solve of the integer matrix.
TEST(Block, LambdaMinGoldens) {
  auto m = build_l2_block_model(40, 0.0);
  auto lm = [&](int i) { return m.lambda_min[static_cast<std::size_t>(i - 1)]; };
  EXPECT_DOUBLE_EQ(lm(1), 1.0);
  EXPECT_NEAR(lm(2), 0.171572875, 1e-9);
  EXPECT_NEAR(lm(3), 0.0410947867, 1e-10);
  EXPECT_NEAR(lm(10) / 3.945612422e-06, 1.0, 1e-6);
  EXPECT_NEAR(lm(30) / 6.239594675e-18, 1.0, 1e-6);
  EXPECT_NEAR(lm(40) / 6.886771456e-24, 1.0, 1e-6);
  for (int i = 1; i < 40; ++i) EXPECT_LT(lm(i + 1), lm(i));
  for (bool c : m.decay_certified) EXPECT_TRUE(c);
}

TEST(Block, DecaysAlongTheExactFlow) {
  auto m = build_l2_block_model(10, 0.0);
  auto rng = stream_rng(9, 0, 0);
  for (int k = 0; k < 50; ++k) {
    Vec x = sample_ball(rng, m.dim, 2.0);
    for (double t : {0.5, 1.0, 2.0}) {
      Vec y = flow(m.system(), t, x, DisturbanceSignal(0.0)).final_state();
      EXPECT_LE(m.v(y), std::exp(-t) * m.v(x) * (1 + 1e-9));
    }
  }
}

TEST(Block, BlockExponentialMatchesRk4) {
  auto m = build_l2_block_model(5, 0.25);
  Vec xi = Vec::LinSpaced(5, -1.0, 1.0);
  Vec got = m.block_exp_apply(5, 1.5, xi);
  EXPECT_LT((got - rk4_matrix(m.blocks[4], 1.5, 20000) * xi).norm(), 1e-10);
}

TEST(Block, WitnessDirectionsShrinkV) {
  auto m = build_l2_block_model(12, 0.0);
  for (int i = 1; i <= 12; ++i) {
    Vec w = m.witness_direction(i);
    EXPECT_NEAR(w.norm(), 1.0, 1e-12);
    EXPECT_NEAR(m.v(w), m.lambda_min[static_cast<std::size_t>(i - 1)], 1e-12);
  }
  EXPECT_THROW(m.witness_direction(13), std::out_of_range);
}

// Derived witness: |e^{A_40 10} g| at eps = 0.25.
TEST(Block, ShiftedModelGrows) {
  auto m = build_l2_block_model(40, 0.25);
  Vec g = m.growth_direction(10.0);
  Vec y = flow(m.system(), 10.0, g, DisturbanceSignal(0.0)).final_state();
  EXPECT_GE(y.norm(), std::exp(0.2 * 10.0));
  EXPECT_NEAR(y.norm(), 11.71, 0.01);
}

TEST(Switched, EvolveMatchesModeExponentials) {
  Mat a0(2, 2), a1(2, 2);
  a0 << -1, 1, -1, -1;
  a1 << -2, 0.5, -0.5, -1;
  auto sw = build_switched_linear({a0, a1});
  EXPECT_LT((sw.evolve(DisturbanceSignal(0.0), 1.0, 0.0) - rk4_matrix(a0, 1.0, 20000)).norm(), 1e-10);
  DisturbanceSignal d({0.0, 0.4, 1.0}, {1.0, 0.0, 1.0});
  Mat oracle = rk4_matrix(a1, 0.5, 10000) * rk4_matrix(a0, 0.6, 10000) * rk4_matrix(a1, 0.4, 10000);
  EXPECT_LT((sw.evolve(d, 1.5, 0.0) - oracle).norm(), 1e-10);
  // Transition property.
  EXPECT_LT((sw.evolve(d, 1.5, 0.7) * sw.evolve(d, 0.7, 0.0) - sw.evolve(d, 1.5, 0.0)).norm(), 1e-12);
  EXPECT_THROW(sw.evolve(d, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(sw.system().rhs(Vec::Zero(2), 0.5), std::invalid_argument);
}

TEST(Descriptor, RoundTripReproducesTheField) {
  auto rng = stream_rng(4, 0, 0);
  for (const auto& z : model_zoo()) {
    if (z.name == "blowup") continue;
    auto back = build_model_from_descriptor(z.model.descriptor());
    ASSERT_EQ(back.dim(), z.model.dim()) << z.name;
    for (int k = 0; k < 5; ++k) {
      Vec x = sample_ball(rng, z.model.dim(), 2.0);
      double d = z.model.disturbances().corners(1).front();
      EXPECT_LT((back.rhs(x, d) - z.model.rhs(x, d)).norm(), 1e-12) << z.name;
    }
  }
  EXPECT_THROW(build_model_from_descriptor({{"model", "nope"}}), std::invalid_argument);
}

TEST(Matrix, JsonRoundTrip) {
  Mat a(2, 3);
  a << 1, 2, 3, 4, 5, M_PI;
  EXPECT_EQ(matrix_from_json(matrix_to_json(a)), a);
}
