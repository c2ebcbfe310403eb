#include "lyap/probes.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace lyap;

namespace {

const std::vector<double> kC{0.5, 1.0, 2.0}, kTau{0.5, 1.0, 2.0};
const std::vector<double> kH{0.1, 1.0}, kEps{0.1, 0.5};

ProbeReport rfc(const SystemModel& m, int budget = 16) { return classify_rfc(m, kC, kTau, budget); }
ProbeReport rep(const SystemModel& m, int budget = 16) { return classify_rep(m, kH, kEps, budget); }

// Replays a witness with an independent flow and applies its check.
void expect_replays(const SystemModel& m, const Witness& w) {
  FlowOptions fo;
  fo.step = 1e-4;
  fo.rate_from_state = true;
  Trajectory tr = flow(m, w.t, w.x, w.d, fo);
  if (w.check == "escape") {
    EXPECT_TRUE(tr.escaped.has_value()) << w.reason;
  } else if (w.check == "max_norm_at_least") {
    EXPECT_GE(tr.max_norm, w.value * (1 - 1e-3)) << w.reason;
  } else if (w.check == "stays_above") {
    double lo = INFINITY;
    for (const auto& x : tr.states) lo = std::min(lo, m.norm(x));
    EXPECT_GE(lo, w.level * (1 - 1e-3)) << w.reason;
  } else {
    ADD_FAILURE() << "unknown check " << w.check;
  }
}

Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(Notion, ParseRoundTrip) {
  for (auto n : {Notion::US, Notion::UGAS, Notion::UAS, Notion::WeakAttractive,
                 Notion::UniformWeakAttractive, Notion::UGATT, Notion::RFC, Notion::REP})
    EXPECT_EQ(parse_notion(to_string(n)), n);
  EXPECT_THROW(parse_notion("ISS"), std::invalid_argument);
}

TEST(Sampling, PureAndInsideTheBall) {
  auto m = build_scalar_example(ScalarVariant::II);
  SampleOptions so;
  for (std::size_t i = 0; i < 40; ++i) {
    auto a = probe_sample(m, 2.0, 10.0, 5.0, i, so), b = probe_sample(m, 2.0, 10.0, 5.0, i, so);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.d, b.d);
    EXPECT_LE(a.x.norm(), 2.0 + 1e-12);
    for (double v : a.d.values()) EXPECT_LE(std::abs(v), 10.0 + 1e-12);
  }
}

// Property: mu is monotone in C, tau and the budget.
TEST(Mu, MonotoneInArgumentsAndBudget) {
  auto m = build_scalar_example(ScalarVariant::III);
  auto small = estimate_mu(m, kC, kTau, 8), large = estimate_mu(m, kC, kTau, 32);
  for (std::size_t i = 0; i < kC.size(); ++i)
    for (std::size_t j = 0; j < kTau.size(); ++j) {
      EXPECT_LE(small.surface.at(i, j), large.surface.at(i, j));
      if (i > 0) EXPECT_LE(large.surface.at(i - 1, j), large.surface.at(i, j));
      if (j > 0) EXPECT_LE(large.surface.at(i, j - 1), large.surface.at(i, j));
    }
}

// Oracle: x' = -x keeps |phi| <= |x|, and the head attains |x| = C.
TEST(Mu, LinearDecayEqualsRadius) {
  auto m = build_linear_ode(Mat::Constant(1, 1, -1.0));
  auto mu = estimate_mu(m, kC, kTau, 8);
  for (std::size_t i = 0; i < kC.size(); ++i)
    for (std::size_t j = 0; j < kTau.size(); ++j) EXPECT_NEAR(mu.surface.at(i, j), kC[i], 1e-12);
  auto sc = decompose_sigma_chi(mu.surface);
  EXPECT_TRUE(sc.identity_ok);
}

TEST(FourWay, VariantI) {
  auto m = build_scalar_example(ScalarVariant::I);
  EXPECT_EQ(rfc(m).verdict, Verdict::Consistent);
  auto r = rep(m);
  EXPECT_EQ(r.verdict, Verdict::Refuted);
  for (const auto& w : r.witnesses) expect_replays(m, w);
}

TEST(FourWay, VariantII) {
  auto m = build_scalar_example(ScalarVariant::II);
  auto r = rfc(m);
  EXPECT_EQ(r.verdict, Verdict::Refuted);
  ASSERT_FALSE(r.witnesses.empty());
  for (const auto& w : r.witnesses) {
    EXPECT_TRUE(std::isfinite(w.value)) << "linear growth never escapes";
    expect_replays(m, w);
  }
  EXPECT_EQ(rep(m).verdict, Verdict::Refuted);
}

TEST(FourWay, VariantIII) {
  auto m = build_scalar_example(ScalarVariant::III);
  auto r = rfc(m);
  EXPECT_EQ(r.verdict, Verdict::Refuted);
  for (const auto& w : r.witnesses) expect_replays(m, w);
  EXPECT_EQ(rep(m).verdict, Verdict::Consistent);
}

TEST(FourWay, VariantIV) {
  auto m = build_scalar_example(ScalarVariant::IV);
  EXPECT_EQ(rfc(m).verdict, Verdict::Consistent);
  EXPECT_EQ(rep(m).verdict, Verdict::Consistent);
}

TEST(Attractivity, LinearDecayIsUgasWithKlBeta) {
  auto m = build_linear_ode(Mat::Constant(1, 1, -1.0));
  std::vector<double> r{0.5, 1.0, 2.0}, eps{0.1, 0.5};
  AttractivityOptions o;
  o.horizon = 10.0;
  auto ugas = probe_attractivity(m, Notion::UGAS, r, eps, 8, o);
  EXPECT_EQ(ugas.verdict, Verdict::Consistent);
  auto beta = fit_ugas_beta(ugas);
  EXPECT_TRUE(beta.is_class_kl());
  // beta dominates r e^{-t} on the sampled grid.
  for (std::size_t i = 0; i < beta.r_grid().size(); ++i)
    for (std::size_t j = 0; j < beta.t_grid().size(); ++j)
      EXPECT_GE(beta.at(i, j) + 1e-9, beta.r_grid()[i] * std::exp(-beta.t_grid()[j]) * (1 - 1e-6));
}

TEST(Attractivity, BlowupIsNotUgas) {
  auto ex = build_blowup_example();
  std::vector<double> r{0.5, 1.0, 2.0}, eps{0.1, 0.5};
  auto ugas = probe_attractivity(ex.model, Notion::UGAS, r, eps, 8);
  EXPECT_EQ(ugas.verdict, Verdict::Refuted);
  for (const auto& w : ugas.witnesses)
    if (w.check == "escape") expect_replays(ex.model, w);
}

TEST(Witness, ReplayConfigCarriesTheCheck) {
  auto m = build_scalar_example(ScalarVariant::II);
  auto r = rfc(m);
  ASSERT_FALSE(r.witnesses.empty());
  auto cfg = r.witnesses.front().replay_config(m, 1e-3);
  EXPECT_EQ(cfg["task"], "simulate");
  EXPECT_TRUE(cfg.contains("expect"));
}

TEST(Switched, HurwitzPairBound) {
  auto sw = build_switched_linear({mat2(-1, 1, -1, -1), mat2(-2, 0.5, -0.5, -1)});
  auto b = estimate_switched_bound(sw, 10.0, 32);
  EXPECT_LT(b.omega, 0.0);
  EXPECT_LE(b.chain_ratio, 1.0 + 1e-12);
  for (std::size_t k = 0; k < b.times.size(); ++k)
    EXPECT_LE(b.growth[k], b.m * std::exp(b.omega * b.times[k]) * (1 + 1e-9));
}

TEST(Switched, UnstablePairGrows) {
  auto sw = build_switched_linear({mat2(-0.1, 1, -4, -0.1), mat2(-0.1, 4, -1, -0.1)});
  SwitchedBoundOptions o;
  o.dwells.push_back(M_PI / 4);
  auto b = estimate_switched_bound(sw, 10.0, 32, o);
  EXPECT_GT(b.omega, 0.0);
  EXPECT_LE(b.chain_ratio, 1.0 + 1e-12);
  // The witness signal reproduces the reported growth.
  Mat phi = sw.evolve(b.witness, b.times.back(), 0.0);
  Eigen::JacobiSVD<Mat> svd(phi);
  EXPECT_NEAR(svd.singularValues()(0), b.growth.back(), 1e-9 * b.growth.back());
}
