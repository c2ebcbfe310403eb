// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "lyap/comparison.hpp"
#include "lyap/converse.hpp"
#include "lyap/experiment.hpp"
#include "lyap/lyapunov.hpp"
#include "lyap/models.hpp"
#include "lyap/probes.hpp"

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

using namespace lyap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

Vec v1(double x) {
  Vec v(1);
  v << x;
  return v;
}

Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

const std::vector<double> kC{0.5, 1.0, 2.0}, kTau{0.5, 1.0, 2.0};
const std::vector<double> kH{0.1, 1.0}, kEpsRep{0.1, 0.5};
const std::vector<double> kR{0.5, 1.0, 2.0}, kEps{0.1, 0.5};

// 1. Four-way classification of the scalar variants.
void four_way(Outcome& o, double& limit) {
  limit = 60.0;
  struct Row {
    ScalarVariant v;
    int fc, rfc, rep;  // 1 holds, 0 fails, -1 unconstrained
  };
  const Row rows[] = {{ScalarVariant::I, -1, 1, 0},
                      {ScalarVariant::II, 1, 0, 0},
                      {ScalarVariant::III, -1, 0, 1},
                      {ScalarVariant::IV, -1, 1, 1}};
  auto ok = [](int want, Verdict v) {
    return want < 0 || (want == 1 ? v == Verdict::Consistent : v == Verdict::Refuted);
  };
  for (const auto& r : rows) {
    SystemModel m = build_scalar_example(r.v);
    ProbeReport rfc = classify_rfc(m, kC, kTau, 16);
    ProbeReport rep = classify_rep(m, kH, kEpsRep, 16);
    bool escaped = false;
    for (const auto& w : rfc.witnesses) escaped = escaped || std::isinf(w.value);
    Verdict fc = escaped ? Verdict::Refuted : Verdict::Consistent;
    o.detail << to_string(r.v) << ":FC=" << to_string(fc) << ",RFC=" << to_string(rfc.verdict)
             << ",REP=" << to_string(rep.verdict) << " ";
    o.require(ok(r.fc, fc) && ok(r.rfc, rfc.verdict) && ok(r.rep, rep.verdict),
              std::string(to_string(r.v)) + " verdicts");
  }
}

// 2. Block model, eps = 0.
void block_decay(Outcome& o, double& limit) {
  limit = 120.0;
  auto m = build_l2_block_model(40, 0.0);
  SystemModel sys = m.system();
  FlowOptions fo;
  fo.record = false;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    auto rng = stream_rng(2, 0, static_cast<std::uint64_t>(k));
    Vec x = sample_ball(rng, m.dim, 1.0);
    double v0 = m.v(x);
    for (double t : {0.5, 1.0, 2.0}) {
      Vec y = flow(sys, t, x, DisturbanceSignal(0.0), fo).final_state();
      worst = std::max(worst, m.v(y) / (std::exp(-t) * v0));
    }
  }
  o.detail << "max V(phi)/(e^-t V) = " << worst << "; ";
  o.require(worst <= 1.001, "decay");
  bool decreasing = true;
  for (int i = 1; i < 30; ++i) decreasing = decreasing && m.lambda_min[i] < m.lambda_min[i - 1];
  o.detail << "lambda_min(P_30) = " << m.lambda_min[29] << "; ";
  o.require(decreasing, "lambda_min strictly decreasing on 1..30");
  std::vector<Vec> w;
  for (int i = 1; i <= m.n_blocks; ++i) w.push_back(m.witness_direction(i));
  std::vector<double> radii{1.0};
  auto prof = coercivity_profile(m.candidate(), [](const Vec& x) { return x.norm(); }, m.dim, radii, 64, w);
  o.detail << "inf V on the unit sphere = " << prof.rows[0].inf;
  o.require(prof.rows[0].inf < 0.05, "coercivity inf below 0.05");
}

// 3. Block model, eps = 0.25: growth with V-decay on the same trajectories.
void block_instability(Outcome& o, double& limit) {
  limit = 120.0;
  const double eps = 0.25, horizon = 10.0;
  auto m = build_l2_block_model(40, eps);
  SystemModel sys = m.system();
  std::vector<Vec> starts{m.growth_direction(horizon)};
  for (int k = 0; k < 20; ++k) {
    auto rng = stream_rng(3, 0, static_cast<std::uint64_t>(k));
    starts.push_back(sample_ball(rng, m.dim, 1.0));
  }
  double best_growth = 0.0, worst = 0.0;
  for (const Vec& x : starts) {
    FlowOptions fo;
    fo.step = 0.5;
    Trajectory tr = flow(sys, horizon, x, DisturbanceSignal(0.0), fo);
    best_growth = std::max(best_growth, tr.final_state().norm() / x.norm());
    for (std::size_t k = 0; k < tr.times.size(); ++k)
      worst = std::max(worst, m.v(tr.states[k]) / (std::exp(-(1 - 2 * eps) * tr.times[k]) * m.v(x)));
  }
  o.detail << "growth over t=10: " << best_growth << " (need >= " << std::exp(0.2 * horizon)
           << "); max V ratio " << worst;
  o.require(best_growth >= std::exp(0.2 * horizon), "instability witness");
  o.require(worst <= 1.001, "decay at rate 1 - 2 eps");
}

// 4. Blow-up example.
void blowup(Outcome& o, double& limit) {
  limit = 0.0;
  BlowupExample ex = build_blowup_example();
  FlowOptions fo;
  fo.record = false;
  int esc = 0, grid = 0;
  for (int i = 0; i <= 12; ++i)
    for (int j = 0; j <= 16; ++j) {
      Vec z(2);
      z << -4.0 + 0.25 * i, -2.0 + 0.25 * j;
      Trajectory tr = flow(ex.model, 20.0, z, DisturbanceSignal(0.0), fo);
      ++grid;
      if (tr.escaped && tr.escaped->last_finite < tr.escaped->first_exceed) ++esc;
    }
  int conv = 0, starts = 0;
  for (int i = 0; i <= 8; ++i)
    for (int j = -8; j <= 8; ++j) {
      Vec z(2);
      z << 0.25 * i, 0.25 * j;
      if (z.norm() > 2.0 + 1e-12) continue;
      Trajectory tr = flow(ex.model, 60.0, z, DisturbanceSignal(0.0), fo);
      ++starts;
      if (!tr.escaped && tr.final_state().norm() < 0.01) ++conv;
    }
  std::vector<Vec> states;
  for (int i = 0; i < 200; ++i) {
    auto rng = stream_rng(4, 0, static_cast<std::uint64_t>(i));
    states.push_back((2.0 + 8.0 * uniform01(rng)) * sample_direction(rng, 2));
  }
  DecayOptions dopt;
  dopt.dini.terms = 16;
  const std::vector<DisturbanceSignal> sig{DisturbanceSignal(0.0)};
  DecayReport dec = verify_decay(ex.v, [](double r) { return r; }, ex.model, states, sig, dopt);
  o.detail << "escaped " << esc << "/" << grid << ", converged " << conv << "/" << starts
           << ", worst decay margin " << dec.worst_margin;
  o.require(esc == grid, "escape grid");
  o.require(conv == starts, "convergence disc");
  o.require(dec.verdict == DecayVerdict::NoViolationFound, "decay alpha(s) = s on |z| >= 2");
}

// 5. Converse construction on x' = -x.
void converse_decay(Outcome& o, double& limit) {
  limit = 0.0;
  SystemModel model = build_linear_ode(Mat::Constant(1, 1, -1.0), "decay");
  ConverseConfig cfg;
  auto v1term = construct_vk_integral(model, 1, cfg);
  double val = v1term(v1(std::exp(1.0)));
  o.detail << "V1(e) - (e - 2) = " << val - (std::exp(1.0) - 2) << "; ";
  o.require(std::abs(val - (std::exp(1.0) - 2)) <= 1e-4, "V1(e)");
  o.require(horizon_T(cfg.alpha1, 1.0, 1) == std::log(2.0), "T(1,1) = ln 2");
  cfg.k_max = 8;
  auto w = assemble_w(model, cfg);
  o.require(w(v1(0.0)) == 0.0, "W(0) = 0");
  for (double x : {0.5, 1.0, 2.0, 4.0}) o.require(w(v1(x)) > 0.0, "W > 0");
  const double h = 1e-3;
  double worst = -INFINITY;
  for (double x0 : {4.0, -3.0, 1.5}) {
    FlowOptions fo;
    fo.step = h;
    Trajectory tr = flow(model, 3.0, v1(x0), DisturbanceSignal(0.0), fo);
    for (std::size_t k = 0; k + 1 < tr.states.size(); k += 100) {
      double fd = (w(tr.states[k + 1]) - w(tr.states[k])) / (tr.times[k + 1] - tr.times[k]);
      worst = std::max(worst, fd + w.psi1(std::abs(tr.states[k](0))));
    }
  }
  o.detail << "max forward difference + psi1 = " << worst;
  o.require(worst <= 1e-3, "forward difference <= -psi1 + 1e-3");
}

// 6. Converse term on the Hurwitz switched pair.
void converse_switched(Outcome& o, double& limit) {
  limit = 0.0;
  auto sw = build_switched_linear({mat2(-1, 1, -1, -1), mat2(-2, 0.5, -0.5, -1)});
  SystemModel model = sw.system();
  std::vector<double> r{0.5, 1.0, 2.0}, eps{0.1, 0.5};
  auto ugas = probe_attractivity(model, Notion::UGAS, r, eps, 16);
  o.require(ugas.verdict == Verdict::Consistent, "UGAS premise");
  ConverseConfig cfg;
  const int k = 2;
  const double R = 2.0;
  auto vk = construct_vk_integral(model, k, cfg);
  const double T = horizon_T(cfg.alpha1, R, k);
  const double L = estimate_flow_lipschitz(model, R, T, 16).value;
  const double M = T * L;
  const double threshold = cfg.rho.inverse(1.0 / k);
  double upper = -INFINITY, lo_pos = INFINITY;
  for (int i = 0; i < 200; ++i) {
    auto rng = stream_rng(6, 0, static_cast<std::uint64_t>(i));
    Vec x = sample_ball(rng, 2, R);
    double v = vk(x);
    upper = std::max(upper, v - cfg.alpha1(x.norm()));
    if (x.norm() > threshold) lo_pos = std::min(lo_pos, v);
  }
  double lip = 0.0;
  for (int i = 0; i < 500; ++i) {
    auto rng = stream_rng(6, 1, static_cast<std::uint64_t>(i));
    Vec x = sample_ball(rng, 2, R), y = sample_ball(rng, 2, R);
    lip = std::max(lip, std::abs(vk(x) - vk(y)) / (M * (x - y).norm()));
  }
  o.detail << "max V_k - alpha1 = " << upper << ", min V_k beyond threshold = " << lo_pos
           << ", max |dV|/(M |dx|) = " << lip << " (M = " << M << ")";
  o.require(upper <= 1e-3, "V_k <= alpha1 + 1e-3");
  o.require(lo_pos > 0.0, "V_k > 0 beyond rho^-1(1/k)");
  o.require(lip <= 1.01, "Lipschitz bound");
}

// 7. Comparison functions.
void comparison(Outcome& o, double& limit) {
  limit = 0.0;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> npts(2, 12);
  std::uniform_real_distribution<double> step(0.01, 3.0), rise(1e-3, 5.0);
  int bad_minorant = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int n = npts(rng);
    std::vector<double> g{0.0}, v{0.0};
    for (int i = 1; i < n; ++i) {
      g.push_back(g.back() + step(rng));
      v.push_back(v.back() + rise(rng));
    }
    TabulatedMonotone a(g, v, ComparisonClass::Kinf);
    auto rho = lipschitz_minorant(a);
    const double top = g.back() * 1.5 + 1.0;
    double prev = 0.0;
    bool ok = rho(0.0) == 0.0;
    for (int k = 1; k <= 400; ++k) {
      double s = top * k / 400.0, r = rho(s);
      ok = ok && r <= a(s) + 1e-12 && r - prev <= top / 400.0 + 1e-12 && r >= prev;
      prev = r;
    }
    if (!ok) ++bad_minorant;
  }
  o.require(bad_minorant == 0, "Lipschitz minorant");
  const std::function<double(double, double)> surfaces[] = {
      [](double r, double t) { return r * std::exp(-t); },
      [](double r, double t) { return r / (1.0 + r * t); },
      [](double r, double t) { return r * r * std::exp(-2.0 * t) + r / (1.0 + t); }};
  int uncovered = 0;
  for (const auto& f : surfaces) {
    auto beta = KLSurface::from_function(f, linspace(0, 4, 21), linspace(0, 10, 41));
    auto fac = sontag_factorize(beta);
    for (std::size_t i = 0; i < beta.r_grid().size(); ++i)
      for (std::size_t j = 0; j < beta.t_grid().size(); ++j)
        if (beta.at(i, j) > fac.alpha2(fac.alpha1(beta.r_grid()[i]) * std::exp(-beta.t_grid()[j])))
          ++uncovered;
  }
  o.require(uncovered == 0, "Sontag domination");
  std::vector<double> g = linspace(0, 4, 81), v;
  for (double s : g) v.push_back(s / (1.0 + s) + 0.1 * s * s);
  TabulatedMonotone alpha(g, v, ComparisonClass::Kinf);
  auto rg = linspace(0, 3, 13), tg = linspace(0, 6, 61);
  auto beta = kl_from_alpha(alpha, rg, tg);
  int violations = 0;
  for (int k = 0; k < 100; ++k) {
    auto r = stream_rng(7, 1, static_cast<std::uint64_t>(k));
    std::size_t i = std::min<std::size_t>(1 + static_cast<std::size_t>(uniform01(r) * (rg.size() - 1)), rg.size() - 1);
    std::vector<double> u(12);
    for (auto& x : u) x = uniform01(r);
    double y = rg[i], time = 0.0;
    const double h = 1e-4;
    for (std::size_t j = 0; j < tg.size(); ++j) {
      while (time < tg[j] - 1e-12) {
        double uu = u[static_cast<std::size_t>(time / 0.5) % u.size()];
        auto f = [&](double z) { return -alpha(std::max(z, 0.0)) * (1.0 + uu); };
        double k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2), k4 = f(y + h * k3);
        y = std::max(0.0, y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4));
        time += h;
      }
      if (y > beta.at(i, j) + 1e-9) ++violations;
    }
  }
  o.detail << "minorant failures " << bad_minorant << ", uncovered Sontag cells " << uncovered
           << ", KL violations " << violations;
  o.require(violations == 0, "kl_from_alpha domination");
}

// 8. Axioms across the zoo.
void axioms(Outcome& o, double& limit) {
  limit = 0.0;
  double worst_cocycle = 0.0, worst_hom = 0.0;
  for (const auto& z : model_zoo()) {
    auto rep = check_axioms(z.model);
    worst_cocycle = std::max(worst_cocycle, rep.cocycle_max);
    o.require(rep.identity_exact, z.name + " identity");
    o.require(rep.causality_exact, z.name + " causality");
    o.require(rep.cocycle_max <= 1e-6, z.name + " cocycle");
    if (z.linear) {
      auto h = check_homogeneity(z.model);
      worst_hom = std::max(worst_hom, h.max_residual);
      o.require(h.max_residual <= 1e-8, z.name + " homogeneity");
    }
  }
  auto h1 = check_homogeneity(build_scalar_example(ScalarVariant::I));
  o.require(!h1.passed, "homogeneity refuted for scalar_i");
  o.detail << "max cocycle " << worst_cocycle << ", max linear homogeneity residual " << worst_hom
           << ", scalar_i residual " << h1.max_residual;
}

// 9. Hierarchy consistency across the zoo.
void hierarchy(Outcome& o, double& limit) {
  limit = 0.0;
  for (const auto& z : model_zoo()) {
    auto ugas = probe_attractivity(z.model, Notion::UGAS, kR, kEps, 16);
    auto rfc = classify_rfc(z.model, kC, kTau, 16);
    o.detail << z.name << ":UGAS=" << to_string(ugas.verdict) << ",RFC=" << to_string(rfc.verdict);
    if (ugas.verdict == Verdict::Consistent) {
      auto ugatt = probe_attractivity(z.model, Notion::UGATT, kR, kEps, 16);
      o.detail << ",UGATT=" << to_string(ugatt.verdict);
      o.require(ugatt.verdict == Verdict::Consistent && rfc.verdict == Verdict::Consistent,
                z.name + " UGAS implies UGATT and RFC");
    }
    if (z.linear) {
      auto rep = classify_rep(z.model, kH, kEpsRep, 16);
      o.detail << ",REP=" << to_string(rep.verdict);
      o.require(rep.verdict == rfc.verdict, z.name + " REP matches RFC");
    }
    o.detail << " ";
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// 10. Determinism of the reproduce targets.
void determinism(Outcome& o, double& limit) {
  limit = 0.0;
  fs::path root = fs::temp_directory_path() / ("lyap_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  int files = 0;
  for (const char* target : {"ex26", "ex213", "ex61", "ex62", "switched"}) {
    nlohmann::json cfg = {{"task", "reproduce"}, {"seed", 5}, {"reproduce", {{"target", target}}}};
    auto a = run_experiment(cfg, root / target / "a");
    auto b = run_experiment(cfg, root / target / "b");
    o.require(a.status == kExitOk, std::string(target) + " reproduces");
    o.require(a.files == b.files, std::string(target) + " file list");
    for (const auto& f : a.files) {
      if (fs::path(f).extension() != ".csv") continue;
      ++files;
      o.require(slurp(root / target / "a" / f) == slurp(root / target / "b" / f),
                std::string(target) + "/" + f + " identical");
    }
  }
  fs::remove_all(root);
  o.detail << files << " CSV files compared";
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    void (*run)(Outcome&, double&);
  };
  const Criterion criteria[] = {{1, "scalar four-way table", four_way},
                                {2, "block model decay and non-coercivity", block_decay},
                                {3, "block model instability with decay", block_instability},
                                {4, "blow-up example", blowup},
                                {5, "converse construction on x' = -x", converse_decay},
                                {6, "converse term on a switched pair", converse_switched},
                                {7, "comparison functions", comparison},
                                {8, "flow axioms", axioms},
                                {9, "hierarchy consistency", hierarchy},
                                {10, "reproduce determinism", determinism}};
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    double limit = 0.0;
    auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o, limit);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit > 0 && secs > limit) {
      o.pass = false;
      o.detail << " [runtime above " << limit << " s]";
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " in "
              << secs << " s: " << o.detail.str() << std::endl;
  }
  std::cout << (failed ? "acceptance: FAIL (" + std::to_string(failed) + " criteria)" : std::string("acceptance: PASS"))
            << std::endl;
  return failed ? 1 : 0;
}
