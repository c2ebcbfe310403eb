#include "lyap/probes.hpp"

#include "lyap/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lyap {

std::string_view to_string(Notion n) {
  switch (n) {
    case Notion::US: return "US";
    case Notion::UGAS: return "UGAS";
    case Notion::UAS: return "UAS";
    case Notion::WeakAttractive: return "weak_attractive";
    case Notion::UniformWeakAttractive: return "uniform_weak_attractive";
    case Notion::UGATT: return "UGATT";
    case Notion::RFC: return "RFC";
    case Notion::REP: return "REP";
  }
  return "?";
}

Notion parse_notion(std::string_view s) {
  for (auto n : {Notion::US, Notion::UGAS, Notion::UAS, Notion::WeakAttractive,
                 Notion::UniformWeakAttractive, Notion::UGATT, Notion::RFC, Notion::REP})
    if (to_string(n) == s) return n;
  throw std::invalid_argument("unknown notion: " + std::string(s));
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Consistent: return "consistent";
    case Verdict::Refuted: return "refuted";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

}  // namespace

nlohmann::json Witness::to_json() const {
  return {{"x", to_std(x)},
          {"signal", d.to_json()},
          {"t", json_number(t)},
          {"value", json_number(value)},
          {"reason", reason}};
}

nlohmann::json Witness::replay_config(const SystemModel& model, double step) const {
  double horizon = std::isfinite(t) ? t : 1.0;
  nlohmann::json expect;
  if (!std::isfinite(value))
    expect = {{"check", "escape"}};
  else if (check == "stays_above")
    expect = {{"check", check}, {"level", level}};
  else
    expect = {{"check", "max_norm_at_least"}, {"level", value}};
  expect["reason"] = reason;
  return {{"task", "simulate"},
          {"model", model.descriptor()},
          {"simulate",
           {{"x0", to_std(x)}, {"signal", d.to_json()}, {"t", horizon}, {"step", step}, {"adaptive", true}}},
          {"expect", expect}};
}

nlohmann::json ProbeReport::to_json() const {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& x : witnesses) w.push_back(x.to_json());
  return {{"notion", std::string(to_string(notion))},
          {"verdict", std::string(to_string(verdict))},
          {"witnesses", w},
          {"tables", tables},
          {"note", note}};
}

namespace {

std::vector<Vec> head_directions(const SystemModel& model, const SampleOptions& opts) {
  const int n = model.dim();
  std::vector<Vec> dirs;
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e(i) = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  if (n >= 2 && n <= 4) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      Vec v(n);
      for (int i = 0; i < n; ++i) v(i) = (mask >> i) & 1 ? -1.0 : 1.0;
      dirs.push_back(v / v.norm());
    }
  }
  for (const Vec& e : opts.extra_directions) {
    if (e.size() != n) throw std::invalid_argument("extra direction has the wrong dimension");
    dirs.push_back(e / model.norm(e));
    dirs.push_back(-e / model.norm(e));
  }
  for (Vec& d : dirs) d /= model.norm(d);
  return dirs;
}

std::vector<DisturbanceSignal> head_signals(const SystemModel& model, double magnitude,
                                            const SampleOptions& opts) {
  std::vector<DisturbanceSignal> sig;
  for (double c : model.disturbances().corners(magnitude)) sig.emplace_back(c);
  for (const auto& s : opts.extra_signals) sig.push_back(s);
  return sig;
}

FlowOptions probe_flow(const SampleOptions& opts) {
  FlowOptions fo;
  fo.step = opts.step;
  fo.rate_from_state = true;
  fo.rate_safety = opts.rate_safety;
  fo.max_steps = opts.max_steps;
  return fo;
}

thread_local long skipped_stiff = 0;

std::optional<Trajectory> try_flow(const SystemModel& model, double T, const Vec& x,
                                   const DisturbanceSignal& d, const FlowOptions& fo) {
  try {
    return flow(model, T, x, d, fo);
  } catch (const StepLimitError&) {
    ++skipped_stiff;
    return std::nullopt;
  }
}

}  // namespace

std::size_t probe_head_size(const SystemModel& model, double magnitude, const SampleOptions& opts) {
  return head_directions(model, opts).size() * head_signals(model, magnitude, opts).size();
}

ProbeSample probe_sample(const SystemModel& model, double r, double magnitude, double horizon,
                         std::size_t index, const SampleOptions& opts) {
  auto dirs = head_directions(model, opts);
  auto sigs = head_signals(model, magnitude, opts);
  std::size_t head = dirs.size() * sigs.size();
  if (index < head) return {r * dirs[index / sigs.size()], sigs[index % sigs.size()]};
  auto rng = stream_rng(opts.seed, 41, index);
  Vec u = sample_ball(rng, model.dim(), 1.0);
  double nu = model.norm(u);
  if (nu > 1.0) u /= nu;
  SignalSampler sampler{model.disturbances(), magnitude, horizon, opts.pieces, opts.seed, 42};
  return {r * u, sampler(sampler.head_size() + (index - head))};
}

std::vector<double> default_magnitudes(const SystemModel& model) {
  if (model.disturbances().kind() == DisturbanceSet::Kind::Real) return {1.0, 10.0, 100.0, 1000.0};
  return {1.0};
}

MuTable estimate_mu(const SystemModel& model, const std::vector<double>& c_grid,
                    const std::vector<double>& tau_grid, int budget, double magnitude,
                    const SampleOptions& opts) {
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (c_grid.empty() || tau_grid.empty()) throw std::invalid_argument("empty grid");
  const double tau_max = tau_grid.back();
  Mat cells = Mat::Zero(static_cast<Eigen::Index>(c_grid.size()),
                        static_cast<Eigen::Index>(tau_grid.size()));
  std::optional<Witness> escape, argmax;
  double best = -1.0;
  const std::size_t total = probe_head_size(model, magnitude, opts) + static_cast<std::size_t>(budget);
  FlowOptions fo = probe_flow(opts);
  for (std::size_t i = 0; i < c_grid.size(); ++i) {
    for (std::size_t s = 0; s < total; ++s) {
      ProbeSample ps = probe_sample(model, c_grid[i], magnitude, tau_max, s, opts);
      auto got = try_flow(model, tau_max, ps.x, ps.d, fo);
      if (!got) continue;
      const Trajectory& tr = *got;
      std::size_t k = 0;
      double run = 0.0;
      for (std::size_t j = 0; j < tau_grid.size(); ++j) {
        while (k < tr.times.size() && tr.times[k] <= tau_grid[j] + 1e-12) {
          run = std::max(run, model.norm(tr.states[k]));
          ++k;
        }
        double cell = run;
        if (tr.escaped && tau_grid[j] >= tr.escaped->first_exceed) cell = INFINITY;
        auto& dst = cells(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        dst = std::max(dst, cell);
        if (std::isfinite(cell) && cell > best) {
          best = cell;
          argmax = Witness{ps.x, ps.d, tau_grid[j], cell, "largest sampled norm"};
        }
      }
      if (tr.escaped && !escape)
        escape = Witness{ps.x, ps.d, tr.escaped->first_exceed, INFINITY, "escape (norm above the explosion threshold)"};
    }
  }
  // Running max over C and tau.
  for (Eigen::Index i = 0; i < cells.rows(); ++i)
    for (Eigen::Index j = 0; j < cells.cols(); ++j) {
      if (i > 0) cells(i, j) = std::max(cells(i, j), cells(i - 1, j));
      if (j > 0) cells(i, j) = std::max(cells(i, j), cells(i, j - 1));
    }
  return {KLSurface(c_grid, tau_grid, cells), escape, argmax};
}

namespace {

nlohmann::json surface_json(const KLSurface& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.values().rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < s.values().cols(); ++j) row.push_back(json_number(s.values()(i, j)));
    rows.push_back(row);
  }
  return {{"r", s.r_grid()}, {"t", s.t_grid()}, {"values", rows}};
}

KLSurface surface_from_json(const nlohmann::json& j) {
  auto r = j.at("r").get<std::vector<double>>();
  auto t = j.at("t").get<std::vector<double>>();
  Mat v(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t k = 0; k < t.size(); ++k) {
      const auto& e = j.at("values")[i][k];
      v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          e.is_string() ? INFINITY : e.get<double>();
    }
  return KLSurface(std::move(r), std::move(t), std::move(v));
}

// Last `levels` ratios of consecutive entries all at least `factor`.
bool sustained_growth(const std::vector<double>& seq, double factor, int levels) {
  if (levels < 1 || seq.size() < static_cast<std::size_t>(levels) + 1) return false;
  for (std::size_t i = seq.size() - static_cast<std::size_t>(levels); i < seq.size(); ++i)
    if (!(seq[i] >= factor * seq[i - 1])) return false;
  return true;
}

}  // namespace

static ProbeReport classify_rfc_impl(const SystemModel& model, const std::vector<double>& c_grid,
                         const std::vector<double>& tau_grid, int budget, const RfcOptions& opts) {
  ProbeReport rep;
  rep.notion = Notion::RFC;
  auto mags = opts.magnitudes.empty() ? default_magnitudes(model) : opts.magnitudes;
  rep.tables["levels"] = nlohmann::json::array();
  std::vector<double> sups;
  std::optional<Witness> last_argmax;
  for (double m : mags) {
    MuTable mu = estimate_mu(model, c_grid, tau_grid, budget, m, opts.sampling);
    rep.tables["levels"].push_back({{"magnitude", m}, {"mu", surface_json(mu.surface)}});
    if (mu.escape) {
      rep.verdict = Verdict::Refuted;
      rep.witnesses.push_back(*mu.escape);
      rep.note = "finite escape from a bounded set of initial states";
      return rep;
    }
    double sup = mu.surface.values().maxCoeff();
    if (sup > opts.threshold) {
      rep.verdict = Verdict::Refuted;
      if (mu.argmax) rep.witnesses.push_back(*mu.argmax);
      rep.note = "reachable norm above the threshold";
      return rep;
    }
    sups.push_back(sup);
    last_argmax = mu.argmax;
  }
  rep.tables["sup_by_level"] = sups;
  if (sustained_growth(sups, opts.growth_factor, opts.growth_levels)) {
    rep.verdict = Verdict::Refuted;
    if (last_argmax) {
      Witness w = *last_argmax;
      w.reason = "reachable norm keeps growing with the disturbance magnitude";
      rep.witnesses.push_back(w);
    }
    rep.note = "reachable set grows without bound under the magnitude sweep";
    return rep;
  }
  rep.verdict = Verdict::Consistent;
  rep.note = "no refutation at this budget";
  return rep;
}

namespace {

struct DeltaSearch {
  double delta = 0.0;  // largest good delta found, 0 if none
  bool refuted = false;
  std::optional<Witness> witness;
  int evaluations = 0;
};

// Is every sample from the delta-ball kept inside the eps-ball on [0, h]?
// Returns the first violating sample.
std::optional<Witness> first_exit(const SystemModel& model, double delta, double eps, double h,
                                  double magnitude, int budget, const SampleOptions& opts) {
  FlowOptions fo = probe_flow(opts);
  fo.record = false;
  fo.stop_norm = eps;
  const std::size_t total = probe_head_size(model, magnitude, opts) + static_cast<std::size_t>(budget);
  for (std::size_t s = 0; s < total; ++s) {
    ProbeSample ps = probe_sample(model, delta, magnitude, h, s, opts);
    auto got = try_flow(model, h, ps.x, ps.d, fo);
    if (!got) continue;
    const Trajectory& tr = *got;
    if (tr.escaped) return Witness{ps.x, ps.d, tr.escaped->first_exceed, INFINITY, "escape (norm above the explosion threshold)"};
    if (tr.stopped)
      return Witness{ps.x, ps.d, tr.final_time(), model.norm(tr.final_state()), "left the eps-ball"};
  }
  return std::nullopt;
}

DeltaSearch search_delta(const SystemModel& model, double eps, double h, double magnitude,
                         int budget, int iterations, int plateau, const SampleOptions& opts) {
  DeltaSearch out;
  std::vector<bool> bad;
  auto w = first_exit(model, eps, eps, h, magnitude, budget, opts);
  ++out.evaluations;
  if (!w) {
    out.delta = eps;
    return out;
  }
  out.witness = w;
  bad.push_back(true);
  double lo = 0.0, hi = eps;
  for (int it = 0; it < iterations; ++it) {
    double mid = 0.5 * (lo + hi);
    auto wm = first_exit(model, mid, eps, h, magnitude, budget, opts);
    ++out.evaluations;
    if (wm) {
      hi = mid;
      out.witness = wm;
    } else {
      lo = mid;
      out.delta = mid;
    }
    bad.push_back(static_cast<bool>(wm));
    // Once a good delta is known to within 5 %, stop refining.
    if (out.delta > 0.0 && (hi - lo) <= 0.05 * hi) break;
  }
  if (out.delta == 0.0) {
    int tail = 0;
    for (auto it = bad.rbegin(); it != bad.rend() && *it; ++it) ++tail;
    out.refuted = tail >= plateau;
  }
  return out;
}

std::vector<double> rep_magnitudes(const SystemModel& model) {
  if (model.disturbances().kind() != DisturbanceSet::Kind::Real) return {1.0};
  std::vector<double> m;
  for (int e = 0; e <= 14; e += 2) m.push_back(std::pow(10.0, e));
  return m;
}

}  // namespace

static ProbeReport classify_rep_impl(const SystemModel& model, const std::vector<double>& h_grid,
                         const std::vector<double>& eps_grid, int budget, const RepOptions& opts) {
  if (!model.equilibrium_at_zero())
    throw std::invalid_argument("REP probe needs 0 to be an equilibrium");
  ProbeReport rep;
  rep.notion = Notion::REP;
  auto mags = opts.magnitudes.empty() ? rep_magnitudes(model) : opts.magnitudes;
  rep.tables["delta"] = nlohmann::json::array();
  bool missing = false;
  for (double eps : eps_grid) {
    for (double h : h_grid) {
      for (double m : mags) {
        DeltaSearch ds = search_delta(model, eps, h, m, budget, opts.bisection_iterations,
                                      opts.plateau_levels, opts.sampling);
        rep.tables["delta"].push_back(
            {{"eps", eps}, {"h", h}, {"magnitude", m}, {"delta", ds.delta}});
        if (ds.refuted) {
          rep.verdict = Verdict::Refuted;
          rep.witnesses.push_back(*ds.witness);
          rep.note = "no delta keeps the eps-ball over the horizon at this magnitude";
          return rep;
        }
        if (ds.delta == 0.0) missing = true;
      }
    }
  }
  rep.verdict = missing ? Verdict::Inconclusive : Verdict::Consistent;
  rep.note = rep.verdict == Verdict::Consistent ? "no refutation at this budget"
                                                : "some cell found no delta without a plateau";
  return rep;
}

namespace {

struct SampleRun {
  ProbeSample sample;
  Trajectory traj;
};

double norm_at(const SystemModel& model, const Trajectory& tr, double t) {
  // First recorded state at or after t.
  auto it = std::lower_bound(tr.times.begin(), tr.times.end(), t - 1e-12);
  if (it == tr.times.end()) return model.norm(tr.final_state());
  return model.norm(tr.states[static_cast<std::size_t>(it - tr.times.begin())]);
}

ProbeReport probe_ugas(const SystemModel& model, const std::vector<double>& r_grid, int budget,
                       const AttractivityOptions& opts, Notion tag) {
  ProbeReport rep;
  rep.notion = tag;
  auto mags = opts.magnitudes.empty() ? default_magnitudes(model) : opts.magnitudes;
  const double T = opts.horizon;
  auto t_grid = linspace(0.0, T, static_cast<std::size_t>(std::max(2, opts.t_points)));
  Mat beta_all = Mat::Zero(static_cast<Eigen::Index>(r_grid.size()),
                           static_cast<Eigen::Index>(t_grid.size()));
  std::vector<double> overshoot;
  std::optional<Witness> overshoot_witness;
  bool unsettled = false;
  FlowOptions fo = probe_flow(opts.sampling);
  rep.tables["levels"] = nlohmann::json::array();
  for (double m : mags) {
    Mat beta = Mat::Zero(beta_all.rows(), beta_all.cols());
    double peak = 0.0;
    std::optional<Witness> peak_w;
    const std::size_t total =
        probe_head_size(model, m, opts.sampling) + static_cast<std::size_t>(budget);
    for (std::size_t i = 0; i < r_grid.size(); ++i) {
      double r = r_grid[i];
      for (std::size_t s = 0; s < total; ++s) {
        ProbeSample ps = probe_sample(model, r, m, T, s, opts.sampling);
        auto got = try_flow(model, T, ps.x, ps.d, fo);
        if (!got) continue;
        const Trajectory& tr = *got;
        if (tr.escaped) {
          rep.verdict = Verdict::Refuted;
          rep.witnesses.push_back({ps.x, ps.d, tr.escaped->first_exceed, INFINITY, "escape (norm above the explosion threshold)"});
          rep.note = "escape (norm above the explosion threshold)";
          return rep;
        }
        double end = model.norm(tr.final_state());
        double mid = norm_at(model, tr, 0.5 * T);
        if (end > std::max(r, mid) && end > 0.0) {
          rep.verdict = Verdict::Refuted;
          rep.witnesses.push_back({ps.x, ps.d, T, end, "norm above the initial radius and growing"});
          rep.note = "growth witness";
          return rep;
        }
        if (end > opts.settle_fraction * r) unsettled = true;
        // Tail suprema on the t grid.
        double tail = 0.0;
        std::size_t k = tr.times.size();
        for (std::size_t j = t_grid.size(); j-- > 0;) {
          while (k > 0 && tr.times[k - 1] >= t_grid[j] - 1e-12) {
            --k;
            tail = std::max(tail, model.norm(tr.states[k]));
          }
          auto& cell = beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          cell = std::max(cell, tail);
        }
        if (r > 0 && tr.max_norm / r > peak) {
          peak = tr.max_norm / r;
          peak_w = Witness{ps.x, ps.d, T, tr.max_norm, "overshoot keeps growing with the magnitude"};
        }
      }
    }
    for (Eigen::Index i = 1; i < beta.rows(); ++i)
      for (Eigen::Index j = 0; j < beta.cols(); ++j) beta(i, j) = std::max(beta(i, j), beta(i - 1, j));
    beta_all = beta_all.cwiseMax(beta);
    rep.tables["levels"].push_back(
        {{"magnitude", m}, {"beta", surface_json(KLSurface(r_grid, t_grid, beta))}, {"overshoot", peak}});
    overshoot.push_back(peak);
    overshoot_witness = peak_w;
  }
  rep.tables["beta"] = surface_json(KLSurface(r_grid, t_grid, beta_all));
  if (sustained_growth(overshoot, opts.overshoot_growth, opts.overshoot_levels)) {
    rep.verdict = Verdict::Refuted;
    if (overshoot_witness) rep.witnesses.push_back(*overshoot_witness);
    rep.note = "overshoot unbounded in the disturbance magnitude (not uniformly stable)";
    return rep;
  }
  rep.verdict = unsettled ? Verdict::Inconclusive : Verdict::Consistent;
  rep.note = unsettled ? "some samples did not settle within the horizon"
                       : "no refutation at this budget";
  return rep;
}

ProbeReport probe_us(const SystemModel& model, const std::vector<double>& eps_grid, int budget,
                     const AttractivityOptions& opts) {
  ProbeReport rep;
  rep.notion = Notion::US;
  auto mags = opts.magnitudes.empty() ? default_magnitudes(model) : opts.magnitudes;
  rep.tables["delta"] = nlohmann::json::array();
  bool missing = false;
  for (double eps : eps_grid) {
    for (double m : mags) {
      DeltaSearch ds = search_delta(model, eps, opts.horizon, m, budget, opts.bisection_iterations,
                                    opts.plateau_levels, opts.sampling);
      rep.tables["delta"].push_back({{"eps", eps}, {"magnitude", m}, {"delta", ds.delta}});
      if (ds.refuted) {
        rep.verdict = Verdict::Refuted;
        rep.witnesses.push_back(*ds.witness);
        rep.note = "no delta keeps the eps-ball over the horizon";
        return rep;
      }
      if (ds.delta == 0.0) missing = true;
    }
  }
  rep.verdict = missing ? Verdict::Inconclusive : Verdict::Consistent;
  rep.note = missing ? "some eps found no delta" : "no refutation at this budget";
  return rep;
}

// Shared by UGATT and the weak notions: per (r, sample) trajectories.
ProbeReport probe_reach(const SystemModel& model, Notion notion, const std::vector<double>& r_grid,
                        const std::vector<double>& eps_grid, int budget,
                        const AttractivityOptions& opts) {
  ProbeReport rep;
  rep.notion = notion;
  auto mags = opts.magnitudes.empty() ? default_magnitudes(model) : opts.magnitudes;
  const double T = opts.horizon;
  FlowOptions fo = probe_flow(opts.sampling);
  bool unresolved = false;
  rep.tables["cells"] = nlohmann::json::array();
  for (double m : mags) {
    const std::size_t head = probe_head_size(model, m, opts.sampling);
    const std::size_t half = head + static_cast<std::size_t>(budget);
    const std::size_t total = head + 2 * static_cast<std::size_t>(budget);
    for (double r : r_grid) {
      // tau_b and tau_2b per eps.
      std::vector<double> tau_b(eps_grid.size(), 0.0), tau_2b(eps_grid.size(), 0.0);
      std::vector<std::optional<Witness>> worst(eps_grid.size());
      for (std::size_t s = 0; s < total; ++s) {
        ProbeSample ps = probe_sample(model, r, m, T, s, opts.sampling);
        auto got = try_flow(model, T, ps.x, ps.d, fo);
        if (!got) continue;
        const Trajectory& tr = *got;
        if (tr.escaped) {
          rep.verdict = Verdict::Refuted;
          rep.witnesses.push_back({ps.x, ps.d, tr.escaped->first_exceed, INFINITY, "escape (norm above the explosion threshold)"});
          rep.note = "escape (norm above the explosion threshold)";
          return rep;
        }
        double end = model.norm(tr.final_state());
        double mid = norm_at(model, tr, 0.5 * T);
        for (std::size_t e = 0; e < eps_grid.size(); ++e) {
          double eps = eps_grid[e];
          double tau;
          if (notion == Notion::UGATT) {
            // Last time above eps.
            tau = 0.0;
            for (std::size_t k = tr.times.size(); k-- > 0;)
              if (model.norm(tr.states[k]) > eps) {
                tau = k + 1 < tr.times.size() ? tr.times[k + 1] : INFINITY;
                break;
              }
          } else {
            tau = INFINITY;
            for (std::size_t k = 0; k < tr.times.size(); ++k)
              if (model.norm(tr.states[k]) <= eps) {
                tau = tr.times[k];
                break;
              }
          }
          if (!std::isfinite(tau) && end > eps && end >= mid) {
            rep.verdict = Verdict::Refuted;
            rep.witnesses.push_back({ps.x, ps.d, T, end, "norm stays above eps without decaying"});
            rep.note = "non-decaying trajectory outside the eps-ball";
            return rep;
          }
          if (s < half) tau_b[e] = std::max(tau_b[e], tau);
          if (tau >= tau_2b[e] || !worst[e]) {
            tau_2b[e] = std::max(tau_2b[e], tau);
            worst[e] = Witness{ps.x, ps.d, tau, tau, "largest entrance time"};
          }
        }
      }
      for (std::size_t e = 0; e < eps_grid.size(); ++e) {
        double eps = eps_grid[e];
        nlohmann::json cell = {{"magnitude", m},
                               {"r", r},
                               {"eps", eps},
                               {"tau_budget", json_number(tau_b[e])},
                               {"tau_double_budget", json_number(tau_2b[e])}};
        if (!std::isfinite(tau_2b[e])) unresolved = true;
        if (notion == Notion::UGATT && std::isfinite(tau_2b[e]) &&
            std::abs(tau_2b[e] - tau_b[e]) > opts.budget_tolerance * std::max(tau_2b[e], 1e-12))
          unresolved = true;
        if (notion == Notion::UniformWeakAttractive && opts.psi2 && opts.alpha) {
          double bound = ((*opts.psi2)(r) + 1.0) / (*opts.alpha)(eps);
          cell["bound"] = json_number(bound);
          if (tau_2b[e] > bound) {
            rep.tables["cells"].push_back(cell);
            rep.verdict = Verdict::Refuted;
            Witness w = *worst[e];
            w.reason = "first hitting time exceeds (psi2(r)+1)/alpha(eps)";
            w.t = bound;
            w.check = "stays_above";
            w.level = eps;
            rep.witnesses.push_back(w);
            rep.note = "Lyapunov hitting-time bound violated";
            return rep;
          }
        }
        rep.tables["cells"].push_back(cell);
      }
    }
  }
  rep.verdict = unresolved ? Verdict::Inconclusive : Verdict::Consistent;
  rep.note = unresolved ? "some entrance times are unresolved at this budget or horizon"
                        : "no refutation at this budget";
  return rep;
}

}  // namespace

static ProbeReport probe_attractivity_impl(const SystemModel& model, Notion notion,
                               const std::vector<double>& r_grid,
                               const std::vector<double>& eps_grid, int budget,
                               const AttractivityOptions& opts) {
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (r_grid.empty()) throw std::invalid_argument("empty r grid");
  switch (notion) {
    case Notion::UGAS:
      return probe_ugas(model, r_grid, budget, opts, Notion::UGAS);
    case Notion::US:
      return probe_us(model, eps_grid, budget, opts);
    case Notion::UAS: {
      std::vector<double> local;
      for (double r : r_grid)
        if (r <= opts.local_radius) local.push_back(r);
      if (local.empty()) local.push_back(opts.local_radius);
      ProbeReport us = probe_us(model, eps_grid, budget, opts);
      ProbeReport att = probe_ugas(model, local, budget, opts, Notion::UAS);
      ProbeReport rep = att;
      rep.tables = {{"us", us.tables}, {"local", att.tables}};
      if (us.verdict == Verdict::Refuted) {
        rep.verdict = Verdict::Refuted;
        rep.witnesses = us.witnesses;
        rep.note = us.note;
      } else if (us.verdict == Verdict::Inconclusive && att.verdict == Verdict::Consistent) {
        rep.verdict = Verdict::Inconclusive;
        rep.note = us.note;
      }
      return rep;
    }
    case Notion::UGATT:
    case Notion::WeakAttractive:
    case Notion::UniformWeakAttractive:
      if (eps_grid.empty()) throw std::invalid_argument("empty eps grid");
      return probe_reach(model, notion, r_grid, eps_grid, budget, opts);
    case Notion::RFC:
    case Notion::REP:
      break;
  }
  throw std::invalid_argument("use classify_rfc / classify_rep for this notion");
}

namespace {

// Samples dropped at the step cap leave a "consistent" verdict unsupported.
ProbeReport account_skipped(ProbeReport rep, long skipped) {
  rep.tables["skipped_stiff"] = skipped;
  if (skipped > 0 && rep.verdict == Verdict::Consistent) {
    rep.verdict = Verdict::Inconclusive;
    rep.note = std::to_string(skipped) + " samples exceeded the step cap";
  }
  return rep;
}

}  // namespace

ProbeReport classify_rfc(const SystemModel& model, const std::vector<double>& c_grid,
                         const std::vector<double>& tau_grid, int budget, const RfcOptions& opts) {
  skipped_stiff = 0;
  return account_skipped(classify_rfc_impl(model, c_grid, tau_grid, budget, opts), skipped_stiff);
}

ProbeReport classify_rep(const SystemModel& model, const std::vector<double>& h_grid,
                         const std::vector<double>& eps_grid, int budget, const RepOptions& opts) {
  skipped_stiff = 0;
  return account_skipped(classify_rep_impl(model, h_grid, eps_grid, budget, opts), skipped_stiff);
}

ProbeReport probe_attractivity(const SystemModel& model, Notion notion,
                               const std::vector<double>& r_grid,
                               const std::vector<double>& eps_grid, int budget,
                               const AttractivityOptions& opts) {
  skipped_stiff = 0;
  return account_skipped(probe_attractivity_impl(model, notion, r_grid, eps_grid, budget, opts),
                         skipped_stiff);
}

KLSurface fit_ugas_beta(const ProbeReport& ugas) {
  if (!ugas.tables.contains("beta")) throw std::invalid_argument("report carries no beta table");
  KLSurface s = surface_from_json(ugas.tables["beta"]);
  if (s.r_grid().front() == 0.0) return s;
  std::vector<double> r{0.0};
  r.insert(r.end(), s.r_grid().begin(), s.r_grid().end());
  Mat v(s.values().rows() + 1, s.values().cols());
  v.row(0).setZero();
  v.bottomRows(s.values().rows()) = s.values();
  return KLSurface(std::move(r), s.t_grid(), std::move(v));
}

SigmaChi decompose_sigma_chi(const KLSurface& mu) {
  const auto& r = mu.r_grid();
  std::vector<double> grid = r, sig;
  for (std::size_t i = 0; i < r.size(); ++i) sig.push_back(mu.at(i, 0));
  if (grid.front() != 0.0) {
    grid.insert(grid.begin(), 0.0);
    sig.insert(sig.begin(), 0.0);
  }
  bool ok = true;
  double gap = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double g = grid[i] - sig[i];
    if (g > 1e-12 * std::max(1.0, grid[i])) ok = false;
    gap = std::max(gap, g);
  }
  // sigma must be a valid K table; a flat or decreasing sample means the
  // identity floor was breached, and is lifted to keep the class tag.
  for (std::size_t i = 1; i < sig.size(); ++i)
    if (!(sig[i] > sig[i - 1])) sig[i] = sig[i - 1] + 1e-12 * std::max(1.0, sig[i - 1]);
  Mat chi = mu.values();
  for (Eigen::Index i = 0; i < chi.rows(); ++i)
    for (Eigen::Index j = 0; j < chi.cols(); ++j) chi(i, j) = mu.values()(i, j) - mu.values()(i, 0);
  return {TabulatedMonotone(grid, sig, ComparisonClass::K), KLSurface(mu.r_grid(), mu.t_grid(), chi), ok,
          gap};
}

nlohmann::json SwitchedBound::to_json() const {
  return {{"M", m},
          {"omega", omega},
          {"M_tilde", m_tilde},
          {"period", period},
          {"chain_ratio", chain_ratio},
          {"witness", witness.to_json()}};
}

SwitchedBound estimate_switched_bound(const SwitchedLinearModel& model, double horizon, int budget,
                                      const SwitchedBoundOptions& opts) {
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be positive");
  if (!(opts.period > 0)) throw std::invalid_argument("period must be positive");
  const auto q = model.modes.size();
  std::vector<DisturbanceSignal> signals;
  for (std::size_t i = 0; i < q; ++i) signals.emplace_back(static_cast<double>(i));
  for (double dwell : opts.dwells) {
    for (std::size_t rot = 0; rot < q && q > 1; ++rot) {
      std::vector<double> cycle;
      for (std::size_t i = 0; i < q; ++i) cycle.push_back(static_cast<double>((i + rot) % q));
      signals.push_back(periodic_signal(cycle, dwell, horizon));
    }
  }
  std::vector<double> idx;
  for (std::size_t i = 0; i < q; ++i) idx.push_back(static_cast<double>(i));
  SignalSampler sampler{DisturbanceSet::finite(idx), 1.0, horizon, opts.pieces, opts.seed, 51};
  for (int b = 0; b < budget; ++b)
    signals.push_back(sampler(sampler.head_size() + static_cast<std::size_t>(b)));

  SwitchedBound out;
  out.period = opts.period;
  out.times = linspace(0.0, horizon, static_cast<std::size_t>(std::max(2, opts.time_points)));
  out.growth.assign(out.times.size(), 0.0);
  const int sub = 20;
  const int periods = std::max(1, static_cast<int>(std::floor(horizon / opts.period + 1e-9)));
  std::vector<std::vector<double>> norms;
  double best_end = -1.0;
  for (const auto& d : signals) {
    Mat phi = Mat::Identity(model.dim, model.dim);
    std::vector<double> row;
    for (std::size_t j = 0; j < out.times.size(); ++j) {
      if (j > 0) phi = model.evolve(d, out.times[j], out.times[j - 1]) * phi;
      double nrm = spectral_norm(phi);
      row.push_back(nrm);
      out.growth[j] = std::max(out.growth[j], nrm);
    }
    if (row.back() > best_end) {
      best_end = row.back();
      out.witness = d;
    }
    norms.push_back(std::move(row));
    // One-period sup over shifts.
    for (int j = 0; j < periods; ++j) {
      double s0 = j * opts.period;
      Mat p = Mat::Identity(model.dim, model.dim);
      double prev = s0;
      for (int l = 1; l <= sub; ++l) {
        double s1 = s0 + opts.period * l / sub;
        p = model.evolve(d, s1, prev) * p;
        prev = s1;
        out.m_tilde = std::max(out.m_tilde, spectral_norm(p));
      }
    }
  }
  // Log-linear least squares for omega, then the smallest M.
  double st = 0, sy = 0, stt = 0, sty = 0;
  int n = 0;
  for (std::size_t j = 1; j < out.times.size(); ++j) {
    double y = std::log(out.growth[j]);
    st += out.times[j];
    sy += y;
    stt += out.times[j] * out.times[j];
    sty += out.times[j] * y;
    ++n;
  }
  double den = n * stt - st * st;
  out.omega = den > 0 ? (n * sty - st * sy) / den : 0.0;
  if (std::abs(out.omega) < 1e-13) out.omega = 0.0;
  out.m = 0.0;
  for (std::size_t j = 0; j < out.times.size(); ++j)
    out.m = std::max(out.m, out.growth[j] * std::exp(-out.omega * out.times[j]));
  for (const auto& row : norms)
    for (std::size_t j = 0; j < out.times.size(); ++j) {
      double k = std::floor(out.times[j] / opts.period + 1e-12);
      out.chain_ratio = std::max(out.chain_ratio, row[j] / std::pow(out.m_tilde, k + 1.0));
    }
  return out;
}

}  // namespace lyap
