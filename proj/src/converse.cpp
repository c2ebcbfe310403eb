#include "lyap/converse.hpp"

#include "lyap/format.hpp"
#include "lyap/linalg.hpp"
#include "lyap/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace lyap {

namespace {

nlohmann::json table_json(const TabulatedMonotone& t) {
  return {{"grid", t.grid()}, {"values", t.values()}, {"class", std::string(to_string(t.comparison_class()))}};
}

}  // namespace

void ConverseConfig::validate() const {
  if (rho.comparison_class() != ComparisonClass::Kinf) throw std::invalid_argument("rho must be Kinf");
  if (alpha1.comparison_class() != ComparisonClass::Kinf)
    throw std::invalid_argument("alpha1 must be Kinf");
  const auto& g = rho.grid();
  const auto& v = rho.values();
  for (std::size_t i = 1; i < g.size(); ++i)
    if (v[i] - v[i - 1] > (g[i] - g[i - 1]) * (1.0 + 1e-12))
      throw std::invalid_argument("rho is not unit-Lipschitz on its grid");
  if (rho.tail_slope() > 1.0 + 1e-12) throw std::invalid_argument("rho tail slope exceeds 1");
  if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
  if (!(R > 0)) throw std::invalid_argument("R must be positive");
  if (!(eta > 0 && eta < 1)) throw std::invalid_argument("eta must lie in (0, 1)");
  if (!(quadrature_step > 0)) throw std::invalid_argument("quadrature step must be positive");
  if (disturbance_budget < 0) throw std::invalid_argument("negative disturbance budget");
  if (!(signal_horizon > 0)) throw std::invalid_argument("signal horizon must be positive");
}

nlohmann::json ConverseConfig::to_json() const {
  return {{"rho", table_json(rho)},
          {"alpha1", table_json(alpha1)},
          {"k_max", k_max},
          {"R", R},
          {"disturbance_budget", disturbance_budget},
          {"eta", eta},
          {"quadrature_step", quadrature_step},
          {"seed", seed},
          {"magnitude", magnitude},
          {"pieces", pieces},
          {"signal_horizon", signal_horizon}};
}

double horizon_T(const TabulatedMonotone& alpha1, double R, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(R >= 0)) throw std::invalid_argument("R must be nonnegative");
  return std::log1p(k * alpha1(R));
}

std::vector<DisturbanceSignal> converse_signals(const SystemModel& model, double magnitude,
                                                int budget, double signal_horizon, int pieces,
                                                std::uint64_t seed) {
  SignalSampler sampler{model.disturbances(), magnitude, signal_horizon, pieces, seed, 61};
  std::vector<DisturbanceSignal> out;
  std::size_t total = sampler.head_size() + static_cast<std::size_t>(std::max(budget, 0));
  for (std::size_t i = 0; i < total; ++i) {
    DisturbanceSignal d = sampler(i);
    if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(std::move(d));
  }
  return out;
}

nlohmann::json LipschitzEstimate::to_json() const {
  return {{"value", value},
          {"empirical", empirical},
          {"gronwall", std::isfinite(gronwall) ? nlohmann::json(gronwall) : nlohmann::json(nullptr)},
          {"pairs", pairs}};
}

LipschitzEstimate estimate_flow_lipschitz(const SystemModel& model, double R, double tau, int budget,
                                          const LipschitzOptions& opts) {
  if (!(R > 0) || !(tau > 0)) throw std::invalid_argument("R and tau must be positive");
  auto signals = converse_signals(model, opts.magnitude, opts.disturbance_budget,
                                  opts.signal_horizon, opts.pieces, opts.seed);
  FlowOptions fo;
  fo.step = opts.step;
  LipschitzEstimate est;
  const int n = model.dim();
  if (model.linear()) {
    for (const auto& d : signals) {
      std::vector<Trajectory> cols;
      for (int i = 0; i < n; ++i) {
        Vec e = Vec::Zero(n);
        e(i) = 1.0;
        Trajectory tr = flow(model, tau, e, d, fo);
        if (tr.escaped) throw EscapeError("flow escaped while estimating L", e, d, tr.escaped->first_exceed);
        cols.push_back(std::move(tr));
      }
      const std::size_t steps = cols[0].times.size();
      for (std::size_t k = 0; k < steps; ++k) {
        Mat phi(n, n);
        for (int i = 0; i < n; ++i) phi.col(i) = cols[static_cast<std::size_t>(i)].states[k];
        est.empirical = std::max(est.empirical, n == 1 ? std::abs(phi(0, 0)) : spectral_norm(phi));
      }
      ++est.pairs;
    }
    est.value = est.empirical;
    return est;
  }
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  for (int p = 0; p < budget; ++p) {
    auto rng = stream_rng(opts.seed, 62, static_cast<std::uint64_t>(p));
    Vec x = sample_ball(rng, n, R);
    Vec y = p % 2 == 0 ? Vec(x + 1e-3 * R * sample_direction(rng, n)) : sample_ball(rng, n, R);
    if (model.norm(y) > R) y *= R / model.norm(y);
    double gap = model.norm(x - y);
    if (gap == 0.0) continue;
    const auto& d = signals[static_cast<std::size_t>(p) % signals.size()];
    Trajectory a = flow(model, tau, x, d, fo);
    if (a.escaped) throw EscapeError("flow escaped while estimating L", x, d, a.escaped->first_exceed);
    Trajectory b = flow(model, tau, y, d, fo);
    if (b.escaped) throw EscapeError("flow escaped while estimating L", y, d, b.escaped->first_exceed);
    for (std::size_t k = 0; k < a.states.size(); ++k)
      est.empirical = std::max(est.empirical, model.norm(a.states[k] - b.states[k]) / gap);
    ++est.pairs;
  }
  est.value = est.empirical;
  if (model.lipschitz_hint()) {
    est.gronwall = std::exp(model.lipschitz_hint()(opts.magnitude, R) * tau);
    est.value = std::max(est.value, est.gronwall);
  }
  return est;
}

ConverseTerm::ConverseTerm(std::shared_ptr<const SystemModel> model, int k, ConverseConfig cfg,
                           Kind kind)
    : model_(std::move(model)), k_(k), cfg_(std::move(cfg)), kind_(kind) {
  if (k_ < 1) throw std::invalid_argument("k must be >= 1");
  cfg_.validate();
}

double ConverseTerm::window(double r) const {
  double t = horizon_T(cfg_.alpha1, std::max(r, cfg_.R), k_);
  return kind_ == Kind::Max ? t / (1.0 - cfg_.eta) : t;
}

double ConverseTerm::evaluate(const Vec& x, double step) const {
  const double r = model_->norm(x);
  if (r == 0.0 && model_->equilibrium_at_zero()) return 0.0;
  const double T = window(r);
  const double cut = 1.0 / k_;
  auto signals = converse_signals(*model_, cfg_.magnitude, cfg_.disturbance_budget,
                                  cfg_.signal_horizon, cfg_.pieces, cfg_.seed);
  FlowOptions fo;
  fo.step = step;
  double best = 0.0;
  for (const auto& d : signals) {
    Trajectory tr = flow(*model_, T, x, d, fo);
    if (tr.escaped)
      throw EscapeError("escape inside the converse window (UGAS premise fails)", x, d,
                        tr.escaped->first_exceed);
    double val = 0.0;
    if (kind_ == Kind::Integral) {
      double fa = cfg_.rho(model_->norm(tr.states[0])) - cut;
      for (std::size_t j = 1; j < tr.states.size(); ++j) {
        double fb = cfg_.rho(model_->norm(tr.states[j])) - cut;
        double dt = tr.times[j] - tr.times[j - 1];
        // Trapezoid of max(f, 0) for the linear interpolant, clipped exactly.
        if (fa >= 0 && fb >= 0)
          val += 0.5 * (fa + fb) * dt;
        else if (fa > 0)
          val += 0.5 * fa * fa / (fa - fb) * dt;
        else if (fb > 0)
          val += 0.5 * fb * fb / (fb - fa) * dt;
        fa = fb;
      }
    } else {
      for (std::size_t j = 0; j < tr.states.size(); ++j) {
        double g = std::max(cfg_.rho(model_->norm(tr.states[j])) - cut, 0.0);
        val = std::max(val, std::exp(cfg_.eta * tr.times[j]) * g);
      }
    }
    best = std::max(best, val);
  }
  return best;
}

double ConverseTerm::step_halving_change(const Vec& x) const {
  double a = evaluate(x, cfg_.quadrature_step);
  double b = evaluate(x, 0.5 * cfg_.quadrature_step);
  return std::abs(a - b) / std::max(std::abs(b), 1e-12);
}

nlohmann::json ConverseTerm::metadata() const {
  return {{"kind", kind_ == Kind::Integral ? "integral" : "max"},
          {"k", k_},
          {"window", kind_ == Kind::Integral ? "ln(1 + k*alpha1(max(|x|, R)))"
                                             : "ln(1 + k*alpha1(max(|x|, R))) / (1 - eta)"},
          {"window_at_R", window(cfg_.R)},
          {"config", cfg_.to_json()}};
}

ConverseTerm construct_vk_integral(const SystemModel& model, int k, const ConverseConfig& cfg) {
  return ConverseTerm(std::make_shared<SystemModel>(model), k, cfg, ConverseTerm::Kind::Integral);
}

ConverseTerm construct_vk_max(const SystemModel& model, int k, const ConverseConfig& cfg) {
  return ConverseTerm(std::make_shared<SystemModel>(model), k, cfg, ConverseTerm::Kind::Max);
}

double ConstructedLyapunov::operator()(const Vec& x) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) acc += weights[i] * terms[i](x);
  return acc;
}

double ConstructedLyapunov::psi1(double r) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i)
    acc += weights[i] * gk_threshold(terms[i].k(), terms[i].config().rho(r));
  return acc;
}

nlohmann::json ConstructedLyapunov::metadata() const {
  nlohmann::json j;
  j["kind"] = kind == ConverseTerm::Kind::Integral ? "integral" : "max";
  j["weights"] = weights;
  j["horizons_T_kk"] = horizons;
  j["lipschitz_L_kk"] = lipschitz;
  j["M_kk"] = m_table;
  if (!terms.empty()) {
    j["config"] = terms.front().config().to_json();
    j["window"] = terms.front().metadata()["window"];
  }
  return j;
}

void ConstructedLyapunov::write_table_csv(std::ostream& os, const std::vector<Vec>& states) const {
  std::size_t n = states.empty() ? 0 : static_cast<std::size_t>(states[0].size());
  for (std::size_t i = 1; i <= n; ++i) os << "x_" << i << ",";
  os << "W\n";
  for (const Vec& x : states) {
    for (Eigen::Index i = 0; i < x.size(); ++i) os << fmt17(x(i)) << ",";
    os << fmt17((*this)(x)) << "\n";
  }
}

ConstructedLyapunov assemble_w(const SystemModel& model, const ConverseConfig& cfg,
                               ConverseTerm::Kind kind, int lipschitz_budget) {
  cfg.validate();
  ConstructedLyapunov w;
  w.kind = kind;
  auto shared = std::make_shared<SystemModel>(model);
  LipschitzOptions lo;
  lo.step = cfg.quadrature_step;
  lo.magnitude = cfg.magnitude;
  lo.seed = cfg.seed;
  lo.pieces = cfg.pieces;
  lo.disturbance_budget = cfg.disturbance_budget;
  lo.signal_horizon = cfg.signal_horizon;
  for (int k = 1; k <= cfg.k_max; ++k) {
    double T = horizon_T(cfg.alpha1, k, k);
    LipschitzEstimate L = estimate_flow_lipschitz(model, k, T, lipschitz_budget, lo);
    double M = T * L.value;
    w.horizons.push_back(T);
    w.lipschitz.push_back(L.value);
    w.m_table.push_back(M);
    w.weights.push_back(std::ldexp(1.0, -k) / (1.0 + M));
    w.terms.emplace_back(shared, k, cfg, kind);
  }
  return w;
}

ConverseConfig config_from_beta(const KLSurface& beta, const ConverseConfig& base) {
  SontagFactorization fit = sontag_factorize(beta);
  ConverseConfig cfg = base;
  cfg.alpha1 = fit.alpha1;
  cfg.rho = lipschitz_minorant(fit.alpha2.inverted());
  cfg.validate();
  return cfg;
}

}  // namespace lyap
