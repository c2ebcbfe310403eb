#include "lyap/system.hpp"

#include "lyap/format.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace lyap {

SystemModel::SystemModel(Spec spec) : spec_(std::move(spec)) {
  if (spec_.dim < 1) throw std::invalid_argument("model dimension must be positive");
  if (!spec_.rhs && !spec_.propagator)
    throw std::invalid_argument("model needs a vector field or a propagator");
  if (spec_.descriptor.is_null()) spec_.descriptor = {{"model", spec_.name}};
}

namespace {

Vec rk4_step(const SystemModel& m, const Vec& x, double d, double h) {
  Vec k1 = m.rhs(x, d);
  Vec k2 = m.rhs(x + 0.5 * h * k1, d);
  Vec k3 = m.rhs(x + 0.5 * h * k2, d);
  Vec k4 = m.rhs(x + h * k3, d);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

bool finite_state(const Vec& x) { return x.allFinite(); }

}  // namespace

Trajectory flow(const SystemModel& model, double t, const Vec& x, const DisturbanceSignal& d,
                const FlowOptions& opts) {
  if (!(t >= 0) || !std::isfinite(t)) throw std::invalid_argument("flow horizon must be >= 0");
  if (!(opts.step > 0)) throw std::invalid_argument("flow step must be positive");
  if (x.size() != model.dim()) throw std::invalid_argument("state dimension mismatch");
  if (!finite_state(x)) throw std::invalid_argument("initial state must be finite");

  Trajectory traj;
  traj.signal = d;
  traj.times.push_back(0.0);
  traj.states.push_back(x);
  traj.max_norm = model.norm(x);
  if (t == 0.0) return traj;

  Vec state = x;
  double cur = 0.0;
  long steps = 0;
  const bool exact = model.has_propagator();
  const bool adaptive =
      opts.rate_from_state && !exact && (model.rate_hint() || model.local_rate());
  // One integrator step to next_t; false once the run is over.
  auto advance = [&](double next_t, double dval) {
    if (++steps > opts.max_steps) throw StepLimitError("flow exceeded the step cap");
    double dt = next_t - cur;
    Vec next = exact ? model.propagate(dval, dt, state) : rk4_step(model, state, dval, dt);
    double nrm = model.norm(next);
    if (!finite_state(next) || !std::isfinite(nrm) || nrm > opts.explosion_threshold) {
      traj.escaped = EscapeBracket{cur, next_t};
      if (!opts.record && traj.states.size() == 1 && cur > 0.0) {
        traj.times.push_back(cur);
        traj.states.push_back(state);
      }
      return false;
    }
    cur = next_t;
    state = std::move(next);
    traj.max_norm = std::max(traj.max_norm, nrm);
    if (opts.record) {
      traj.times.push_back(cur);
      traj.states.push_back(state);
    }
    if (nrm > opts.stop_norm) {
      traj.stopped = true;
      if (!opts.record) {
        traj.times.push_back(cur);
        traj.states.push_back(state);
      }
      return false;
    }
    return true;
  };
  while (cur < t) {
    double seg_start = cur;
    double seg_end = std::min(t, d.next_breakpoint_after(cur));
    double dval = d(cur);
    if (adaptive) {
      while (cur < seg_end) {
        if (model.equilibrium_at_zero() && state.isZero(0.0)) {
          // Exactly at the equilibrium: the rest of the run stays there.
          traj.times.push_back(t);
          traj.states.push_back(state);
          return traj;
        }
        double rate = model.local_rate() ? model.local_rate()(state, dval)
                                          : model.rate_hint()(std::abs(dval), 1.25 * model.norm(state));
        double h = opts.step;
        if (rate > 0.0 && std::isfinite(rate)) h = std::min(h, opts.rate_safety / rate);
        double next_t = cur + h >= seg_end - 1e-12 * h ? seg_end : cur + h;
        if (!advance(next_t, dval)) return traj;
      }
      continue;
    }
    if (exact && !opts.record && !std::isfinite(opts.stop_norm)) {
      // Nothing to observe in between: one propagator call per segment.
      if (!advance(seg_end, dval)) return traj;
      continue;
    }
    double step = opts.step;
    if (opts.rate_radius > 0.0 && !exact && model.rate_hint()) {
      double rate = model.rate_hint()(std::abs(dval), opts.rate_radius);
      if (rate > 0.0 && std::isfinite(rate)) step = std::min(step, opts.rate_safety / rate);
    }
    auto n = static_cast<long>(std::ceil((seg_end - seg_start) / step - 1e-9));
    n = std::max(n, 1L);
    double h = (seg_end - seg_start) / static_cast<double>(n);
    for (long k = 1; k <= n; ++k) {
      double next_t = k == n ? seg_end : seg_start + static_cast<double>(k) * h;
      if (!advance(next_t, dval)) return traj;
    }
  }
  if (!opts.record) {
    traj.times.push_back(cur);
    traj.states.push_back(state);
  }
  return traj;
}

double choose_step(const SystemModel& model, double base, double magnitude, double radius,
                   double safety) {
  if (!model.rate_hint() || model.has_propagator()) return base;
  double rate = model.rate_hint()(magnitude, radius);
  if (!(rate > 0) || !std::isfinite(rate)) return base;
  return std::min(base, safety / rate);
}

Vec sample_direction(std::mt19937_64& rng, int dim) {
  Vec v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = standard_normal(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

Vec sample_ball(std::mt19937_64& rng, int dim, double radius) {
  Vec dir = sample_direction(rng, dim);
  double u = uniform01(rng);
  double r = u < 0.5 ? radius : radius * std::pow(2.0 * u - 1.0, 1.0 / dim);
  return r * dir;
}

nlohmann::json AxiomReport::to_json() const {
  return {{"identity_max", identity_max},       {"causality_max", causality_max},
          {"cocycle_max", cocycle_max},         {"continuity_max", continuity_max},
          {"samples", samples},                 {"excluded_escaped", excluded_escaped},
          {"identity_exact", identity_exact},   {"causality_exact", causality_exact},
          {"passed", passed}};
}

AxiomReport check_axioms(const SystemModel& model, const AxiomOptions& opts) {
  if (opts.budget < 1) throw std::invalid_argument("sample budget must be >= 1");
  AxiomReport rep;
  FlowOptions fo;
  fo.step = opts.step;
  fo.record = false;
  FlowOptions half = fo;
  half.step = opts.step / 2;
  SignalSampler sampler{model.disturbances(), opts.magnitude, 2.0 * opts.horizon, 8, opts.seed, 11};

  for (int i = 0; i < opts.budget; ++i) {
    auto rng = stream_rng(opts.seed, 12, static_cast<std::uint64_t>(i));
    double t = i == 0 ? 0.0 : opts.horizon * uniform01(rng);
    double h = i == 0 ? 0.0 : opts.horizon * uniform01(rng);
    Vec x = sample_ball(rng, model.dim(), opts.radius);
    DisturbanceSignal d = sampler(static_cast<std::size_t>(i));
    DisturbanceSignal other = sampler(static_cast<std::size_t>(i) + 1000003);

    Trajectory a = flow(model, t, x, d, fo);
    if (a.escaped) {
      ++rep.excluded_escaped;
      continue;
    }
    Trajectory full = flow(model, t + h, x, d, fo);
    if (full.escaped) {
      ++rep.excluded_escaped;
      continue;
    }
    ++rep.samples;

    // Identity: phi(0, x, d) = x bit for bit.
    Trajectory id = flow(model, 0.0, x, d, fo);
    double id_res = (id.final_state() - x).norm();
    if (!(id.final_state().array() == x.array()).all()) rep.identity_exact = false;
    rep.identity_max = std::max(rep.identity_max, id_res);

    // Causality: a signal equal to d on [0, t] gives the same phi(t, x, .).
    if (t > 0.0) {
      Trajectory c = flow(model, t, x, concat_signal(d, other, t), fo);
      if (c.escaped) {
        rep.causality_exact = false;
        rep.causality_max = INFINITY;
      } else {
        double res = (c.final_state() - a.final_state()).norm();
        if (!(c.final_state().array() == a.final_state().array()).all())
          rep.causality_exact = false;
        rep.causality_max = std::max(rep.causality_max, res);
      }
    }

    // Cocycle: phi(h, phi(t, x, d), d(t + .)) = phi(t + h, x, d).
    Trajectory b = flow(model, h, a.final_state(), shift_signal(d, t), fo);
    double co = b.escaped ? INFINITY : (b.final_state() - full.final_state()).norm();
    rep.cocycle_max = std::max(rep.cocycle_max, co);

    // Continuity through integrator convergence under step halving.
    Trajectory fine = flow(model, t + h, x, d, half);
    double cont = fine.escaped ? INFINITY : (fine.final_state() - full.final_state()).norm();
    rep.continuity_max = std::max(rep.continuity_max, cont);
  }
  rep.passed = rep.identity_exact && rep.causality_exact && rep.cocycle_max <= opts.tol;
  return rep;
}

nlohmann::json HomogeneityReport::to_json() const {
  return {{"max_residual", max_residual}, {"worst_lambda", worst_lambda},
          {"samples", samples},           {"excluded_escaped", excluded_escaped},
          {"passed", passed}};
}

HomogeneityReport check_homogeneity(const SystemModel& model, const HomogeneityOptions& opts) {
  if (opts.budget < 1) throw std::invalid_argument("sample budget must be >= 1");
  HomogeneityReport rep;
  FlowOptions fo;
  fo.step = opts.step;
  fo.record = false;
  SignalSampler sampler{model.disturbances(), opts.magnitude, opts.horizon, 8, opts.seed, 21};
  for (int i = 0; i < opts.budget; ++i) {
    auto rng = stream_rng(opts.seed, 22, static_cast<std::uint64_t>(i));
    double lambda = i == 0 ? opts.lambda_max : i == 1 ? 0.0 : opts.lambda_max * uniform01(rng);
    double t = i < 2 ? opts.horizon : opts.horizon * uniform01(rng);
    Vec x = sample_ball(rng, model.dim(), opts.radius);
    DisturbanceSignal d = sampler(static_cast<std::size_t>(i));
    Trajectory a = flow(model, t, x, d, fo);
    Trajectory b = flow(model, t, lambda * x, d, fo);
    if (a.escaped || b.escaped) {
      ++rep.excluded_escaped;
      continue;
    }
    ++rep.samples;
    double res = (b.final_state() - lambda * a.final_state()).norm();
    if (res > rep.max_residual) {
      rep.max_residual = res;
      rep.worst_lambda = lambda;
    }
  }
  rep.passed = rep.max_residual <= opts.tol;
  return rep;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  std::size_t n = traj.states.empty() ? 0 : static_cast<std::size_t>(traj.states[0].size());
  os << "t";
  for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i;
  os << ",d\n";
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << fmt17(traj.times[k]);
    for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) os << "," << fmt17(traj.states[k](i));
    os << "," << fmt17(traj.signal(traj.times[k])) << "\n";
  }
}

}  // namespace lyap
