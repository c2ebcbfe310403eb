#pragma once

#include "lyap/comparison.hpp"
#include "lyap/system.hpp"

#include <json.hpp>

#include <iosfwd>
#include <memory>
#include <vector>

namespace lyap {

struct ConverseConfig {
  // 1-Lipschitz class Kinf; identity by default.
  TabulatedMonotone rho{{0.0, 1.0}, {0.0, 1.0}, ComparisonClass::Kinf};
  TabulatedMonotone alpha1{{0.0, 1.0}, {0.0, 1.0}, ComparisonClass::Kinf};
  int k_max = 8;
  double R = 1.0;
  int disturbance_budget = 16;
  double eta = 0.5;
  double quadrature_step = 1e-3;
  std::uint64_t seed = 1;
  double magnitude = 1.0;
  int pieces = 8;
  // Random signals switch on a uniform grid of [0, signal_horizon); fixed so
  // that every state sees the same signal set.
  double signal_horizon = 10.0;

  void validate() const;
  nlohmann::json to_json() const;
};

// T(R, k) = ln(1 + k alpha1(R)).
double horizon_T(const TabulatedMonotone& alpha1, double R, int k);

// The signals every converse evaluator maximizes over: corner constants of D,
// then `budget` random piecewise-constant signals, duplicates removed.
std::vector<DisturbanceSignal> converse_signals(const SystemModel& model, double magnitude,
                                                int budget, double signal_horizon, int pieces,
                                                std::uint64_t seed);

struct LipschitzEstimate {
  double value = 1.0;     // max of the two below
  double empirical = 1.0;
  double gronwall = NAN;  // e^{L tau} from the model's lipschitz hint, when present
  int pairs = 0;
  nlohmann::json to_json() const;
};

struct LipschitzOptions {
  double step = 1e-3;
  double magnitude = 1.0;
  std::uint64_t seed = 1;
  int pieces = 8;
  // Signals: converse_signals with these settings (shared with the evaluators).
  int disturbance_budget = 16;
  double signal_horizon = 10.0;
};

// Linear models: sup over sampled signals and t <= tau of the operator norm
// of the propagated identity. Other models: sampled pairs in the R-ball.
// An escaping sample throws EscapeError.
LipschitzEstimate estimate_flow_lipschitz(const SystemModel& model, double R, double tau, int budget,
                                          const LipschitzOptions& opts = {});

class ConverseTerm {
 public:
  enum class Kind { Integral, Max };

  ConverseTerm(std::shared_ptr<const SystemModel> model, int k, ConverseConfig cfg, Kind kind);

  double operator()(const Vec& x) const { return evaluate(x, cfg_.quadrature_step); }
  double evaluate(const Vec& x, double step) const;
  // Relative change of the value under step halving.
  double step_halving_change(const Vec& x) const;
  // Integration (or max) window for a state of norm r.
  double window(double r) const;

  int k() const { return k_; }
  Kind kind() const { return kind_; }
  const ConverseConfig& config() const { return cfg_; }
  nlohmann::json metadata() const;

 private:
  std::shared_ptr<const SystemModel> model_;
  int k_;
  ConverseConfig cfg_;
  Kind kind_;
};

// V_k(x) = max_d int_0^{T(max(|x|,R),k)} G_k(rho(|phi(t,x,d)|)) dt.
ConverseTerm construct_vk_integral(const SystemModel& model, int k, const ConverseConfig& cfg);
// V_k^eta(x) = max_d max_{s <= T(max(|x|,R),k)/(1-eta)} e^{eta s} G_k(rho(|phi(s,x,d)|)).
ConverseTerm construct_vk_max(const SystemModel& model, int k, const ConverseConfig& cfg);

struct ConstructedLyapunov {
  std::vector<ConverseTerm> terms;
  std::vector<double> weights;  // 2^{-k} / (1 + M(k,k))
  std::vector<double> horizons;  // T(k,k)
  std::vector<double> lipschitz;  // L(k,k)
  std::vector<double> m_table;  // M(k,k) = T(k,k) L(k,k)
  ConverseTerm::Kind kind = ConverseTerm::Kind::Integral;

  double operator()(const Vec& x) const;
  // psi1(r) = sum_k w_k G_k(rho(r)).
  double psi1(double r) const;
  nlohmann::json metadata() const;
  // One row per state: x_1..x_n, W.
  void write_table_csv(std::ostream& os, const std::vector<Vec>& states) const;
};

ConstructedLyapunov assemble_w(const SystemModel& model, const ConverseConfig& cfg,
                               ConverseTerm::Kind kind = ConverseTerm::Kind::Integral,
                               int lipschitz_budget = 16);

// alpha1, alpha2 from a Sontag fit of beta; rho the unit-Lipschitz minorant
// of alpha2^{-1}.
ConverseConfig config_from_beta(const KLSurface& beta, const ConverseConfig& base);

}  // namespace lyap
