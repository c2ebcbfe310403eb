#include "lyap/lyapunov.hpp"

#include "lyap/format.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace lyap {

std::vector<double> geometric_sequence(double h0, double ratio, int terms) {
  if (!(h0 > 0) || !(ratio > 0 && ratio < 1) || terms < 1)
    throw std::invalid_argument("bad geometric sequence");
  std::vector<double> h(static_cast<std::size_t>(terms));
  double v = h0;
  for (auto& e : h) {
    e = v;
    v *= ratio;
  }
  return h;
}

DiniEstimate dini_derivative(const LyapunovCandidate& v, const SystemModel& model, const Vec& x,
                             const DisturbanceSignal& d, std::span<const double> h_sequence,
                             double step) {
  if (h_sequence.empty()) throw std::invalid_argument("empty h sequence");
  for (std::size_t i = 0; i < h_sequence.size(); ++i)
    if (!(h_sequence[i] > 0) || (i > 0 && !(h_sequence[i] < h_sequence[i - 1])))
      throw std::invalid_argument("h sequence must be positive and decreasing");
  DiniEstimate est;
  double v0 = v(x);
  est.value = INFINITY;
  FlowOptions fo;
  fo.record = false;
  for (double h : h_sequence) {
    fo.step = std::min(step, h / 10.0);
    Trajectory tr = flow(model, h, x, d, fo);
    // Only the small-h end matters for the limit; skip h that reach an escape.
    if (tr.escaped) continue;
    double q = (v(tr.final_state()) - v0) / h;
    est.h.push_back(h);
    est.quotients.push_back(q);
    est.value = std::min(est.value, q);
  }
  if (est.h.empty()) throw EscapeError("short-horizon flow escaped for every h", x, d, h_sequence.back());
  return est;
}

DiniEstimate dini_derivative(const LyapunovCandidate& v, const SystemModel& model, const Vec& x,
                             const DisturbanceSignal& d, const DiniOptions& opts) {
  auto h = geometric_sequence(opts.h0, opts.ratio, opts.terms);
  return dini_derivative(v, model, x, d, h, opts.step);
}

std::string_view to_string(DecayVerdict v) {
  return v == DecayVerdict::NoViolationFound ? "no violation found" : "violated";
}

nlohmann::json DecayReport::to_json() const {
  nlohmann::json j;
  j["verdict"] = std::string(to_string(verdict));
  j["worst_margin"] = worst_margin;
  j["tol"] = tol;
  j["samples"] = samples.size();
  if (witness) {
    const auto& s = samples[*witness];
    j["witness"] = {{"x", std::vector<double>(s.x.data(), s.x.data() + s.x.size())},
                    {"signal", s.d.to_json()},
                    {"dini", s.dini},
                    {"bound", s.bound},
                    {"escaped", s.escaped}};
  }
  return j;
}

void DecayReport::write_csv(std::ostream& os) const {
  std::size_t n = samples.empty() ? 0 : static_cast<std::size_t>(samples[0].x.size());
  for (std::size_t i = 1; i <= n; ++i) os << "x_" << i << ",";
  os << "d0,dini,bound,margin,escaped\n";
  for (const auto& s : samples) {
    for (Eigen::Index i = 0; i < s.x.size(); ++i) os << fmt17(s.x(i)) << ",";
    os << fmt17(s.d(0.0)) << "," << fmt17(s.dini) << "," << fmt17(s.bound) << ","
       << fmt17(s.margin) << "," << (s.escaped ? 1 : 0) << "\n";
  }
}

DecayReport verify_decay(const LyapunovCandidate& v, const ScalarFn& alpha,
                         const SystemModel& model, std::span<const Vec> states,
                         std::span<const DisturbanceSignal> disturbances,
                         const DecayOptions& opts) {
  DecayReport rep;
  rep.tol = opts.tol;
  for (const Vec& x : states) {
    for (const DisturbanceSignal& d : disturbances) {
      DecaySample s{x, d, 0.0, -alpha(model.norm(x)), 0.0, false};
      try {
        s.dini = dini_derivative(v, model, x, d, opts.dini).value;
        s.margin = (s.dini - s.bound) / (std::abs(s.bound) + 1e-9);
      } catch (const EscapeError&) {
        s.escaped = true;
        s.dini = INFINITY;
        s.margin = INFINITY;
      }
      if (s.margin > rep.worst_margin) {
        rep.worst_margin = s.margin;
        rep.witness = rep.samples.size();
      }
      rep.samples.push_back(std::move(s));
    }
  }
  rep.verdict = rep.worst_margin <= opts.tol ? DecayVerdict::NoViolationFound
                                             : DecayVerdict::Violated;
  if (rep.verdict == DecayVerdict::NoViolationFound) rep.witness.reset();
  return rep;
}

nlohmann::json IntegralBoundReport::to_json() const {
  return {{"integral", integral}, {"v0", v0},
          {"slack", slack},       {"tol", tol},
          {"dini_integration_max", dini_integration_max},
          {"passed", passed}};
}

IntegralBoundReport verify_integral_bound(const LyapunovCandidate& v, const ScalarFn& alpha,
                                          const SystemModel& model, const Vec& x,
                                          const DisturbanceSignal& d, double horizon,
                                          double quadrature_step) {
  FlowOptions fo;
  fo.step = quadrature_step;
  Trajectory tr = flow(model, horizon, x, d, fo);
  if (tr.escaped) throw EscapeError("trajectory escaped before the horizon", x, d, horizon);
  IntegralBoundReport rep;
  rep.v0 = v(x);
  rep.tol = 1e-4 * rep.v0 + 1e-9;
  double acc = 0.0;
  double prev = alpha(model.norm(tr.states[0]));
  rep.dini_integration_max = v(tr.states[0]) - rep.v0;
  for (std::size_t k = 1; k < tr.states.size(); ++k) {
    double cur = alpha(model.norm(tr.states[k]));
    acc += 0.5 * (prev + cur) * (tr.times[k] - tr.times[k - 1]);
    prev = cur;
    rep.dini_integration_max = std::max(rep.dini_integration_max, v(tr.states[k]) - rep.v0 + acc);
  }
  rep.integral = acc;
  rep.slack = rep.v0 + rep.tol - acc;
  rep.passed = rep.slack >= 0.0 && rep.dini_integration_max <= rep.tol;
  return rep;
}

CoercivityProfile coercivity_profile(const LyapunovCandidate& v,
                                     const std::function<double(const Vec&)>& norm, int dim,
                                     std::span<const double> radii, int direction_budget,
                                     std::span<const Vec> witness_directions, double fraction,
                                     std::uint64_t seed) {
  CoercivityProfile prof;
  prof.fraction = fraction;
  std::vector<Vec> dirs;
  for (int i = 0; i < direction_budget; ++i) {
    auto rng = stream_rng(seed, 31, static_cast<std::uint64_t>(i));
    Vec u = sample_direction(rng, dim);
    dirs.push_back(u / norm(u));
  }
  for (double r : radii) {
    if (!(r > 0)) throw std::invalid_argument("radii must be positive");
    CoercivityRow row;
    row.radius = r;
    for (const Vec& u : dirs) {
      double val = v(r * u);
      row.inf = std::min(row.inf, val);
      row.sup = std::max(row.sup, val);
    }
    for (const Vec& w : witness_directions) {
      double val = v(r * (w / norm(w)));
      row.witness_values.push_back(val);
      row.inf = std::min(row.inf, val);
      row.sup = std::max(row.sup, val);
    }
    const auto& wv = row.witness_values;
    if (wv.size() >= 2) {
      bool decreasing = true;
      for (std::size_t i = 1; i < wv.size(); ++i)
        if (!(wv[i] < wv[i - 1])) decreasing = false;
      if (decreasing && wv.back() < fraction * row.sup) prof.non_coercive = true;
    }
    prof.rows.push_back(std::move(row));
  }
  return prof;
}

}  // namespace lyap
