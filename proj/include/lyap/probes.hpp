#pragma once

#include "lyap/comparison.hpp"
#include "lyap/models.hpp"
#include "lyap/system.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace lyap {

enum class Notion { US, UGAS, UAS, WeakAttractive, UniformWeakAttractive, UGATT, RFC, REP };
std::string_view to_string(Notion n);
Notion parse_notion(std::string_view s);

// "consistent" only ever means: no refutation at this budget.
enum class Verdict { Consistent, Refuted, Inconclusive };
std::string_view to_string(Verdict v);

struct Witness {
  Vec x;
  DisturbanceSignal d;
  double t = 0.0;
  double value = 0.0;  // the measured quantity behind the refutation; +inf for an escape
  std::string reason;
  // How a replay confirms the witness: "escape", "max_norm_at_least" (value)
  // or "stays_above" (level, over [0, t]).
  std::string check = "max_norm_at_least";
  double level = 0.0;

  nlohmann::json to_json() const;
  // A config for `lyap simulate` that replays this witness.
  nlohmann::json replay_config(const SystemModel& model, double step) const;
};

struct ProbeReport {
  Notion notion = Notion::RFC;
  Verdict verdict = Verdict::Inconclusive;
  std::vector<Witness> witnesses;
  nlohmann::json tables;       // per-notion estimates (mu tables, delta maps, tau maps)
  std::string note;

  nlohmann::json to_json() const;
};

// Common sampling knobs. Samples are (x, d) pairs: a deterministic head of
// axis and diagonal directions (dim <= 4) or axis directions, times the corner
// constant signals of D, followed by `budget` random pairs.
struct SampleOptions {
  double step = 1e-3;
  std::uint64_t seed = 1;
  int pieces = 8;
  double rate_safety = 0.25;
  // Per-sample integrator step cap. Samples that exceed it are skipped and
  // counted in the report ("skipped_stiff").
  long max_steps = 2000000;
  // Extra unit directions put in the head (e.g. growth directions).
  std::vector<Vec> extra_directions;
  // Extra periodic signals put in the head.
  std::vector<DisturbanceSignal> extra_signals;
};

struct ProbeSample {
  Vec x;  // in the closed ball of radius r
  DisturbanceSignal d;
};

// Sample `index` for radius r and magnitude m. Pure in (opts.seed, index).
ProbeSample probe_sample(const SystemModel& model, double r, double magnitude, double horizon,
                         std::size_t index, const SampleOptions& opts);
std::size_t probe_head_size(const SystemModel& model, double magnitude, const SampleOptions& opts);

// Magnitudes swept for unbounded D (the set's corners carry the magnitude);
// bounded sets use a single level.
std::vector<double> default_magnitudes(const SystemModel& model);

struct MuTable {
  KLSurface surface;  // rows follow C, columns follow tau; +inf marks an escape
  std::optional<Witness> escape;
  std::optional<Witness> argmax;  // sample attaining the largest finite cell
};

// Lower estimate of mu(C, tau) = sup{|phi(t,x,d)| : |x| <= C, t <= tau}.
// Running max over samples, over C and over tau, so it is monotone in all
// arguments and in the budget.
MuTable estimate_mu(const SystemModel& model, const std::vector<double>& c_grid,
                    const std::vector<double>& tau_grid, int budget, double magnitude = 1.0,
                    const SampleOptions& opts = {});

struct RfcOptions {
  std::vector<double> magnitudes;  // empty: default_magnitudes
  double threshold = 1e6;
  double growth_factor = 1.5;
  int growth_levels = 3;
  SampleOptions sampling;
};

ProbeReport classify_rfc(const SystemModel& model, const std::vector<double>& c_grid,
                         const std::vector<double>& tau_grid, int budget,
                         const RfcOptions& opts = {});

struct RepOptions {
  std::vector<double> magnitudes;  // empty: 1e0, 1e2, ..., 1e14 for unbounded D
  int bisection_iterations = 20;
  int plateau_levels = 5;
  SampleOptions sampling;
};

ProbeReport classify_rep(const SystemModel& model, const std::vector<double>& h_grid,
                         const std::vector<double>& eps_grid, int budget,
                         const RepOptions& opts = {});

struct AttractivityOptions {
  double horizon = 20.0;
  std::vector<double> magnitudes;  // empty: default_magnitudes
  // UGAS: samples must decay below settle_fraction * r.
  double settle_fraction = 0.01;
  double overshoot_growth = 1.5;
  int overshoot_levels = 3;
  // UGATT: tau(budget) vs tau(2 budget) relative tolerance.
  double budget_tolerance = 0.05;
  // UAS uses the radii of r_grid not above this value.
  double local_radius = 0.5;
  int bisection_iterations = 20;
  int plateau_levels = 5;
  // Uniform weak attractivity: compare first hitting times with
  // (psi2(r) + 1) / alpha(eps) when both are given.
  std::optional<ScalarFn> psi2;
  std::optional<ScalarFn> alpha;
  int t_points = 41;
  SampleOptions sampling;
};

ProbeReport probe_attractivity(const SystemModel& model, Notion notion,
                               const std::vector<double>& r_grid,
                               const std::vector<double>& eps_grid, int budget,
                               const AttractivityOptions& opts = {});

// Conservative beta estimate: beta(r, t) = max over samples with |x| <= r of
// sup_{s >= t} |phi(s)|, the last column being the final sampled norm.
KLSurface fit_ugas_beta(const ProbeReport& ugas_report);

struct SigmaChi {
  TabulatedMonotone sigma;
  KLSurface chi;
  bool identity_ok = true;  // sigma(r) >= r on the grid
  double worst_identity_gap = 0.0;
};

SigmaChi decompose_sigma_chi(const KLSurface& mu);

struct SwitchedBound {
  double m = 1.0;
  double omega = 0.0;
  double m_tilde = 1.0;    // sup over signals and shifts of |Phi_{d(.+jh)}(h, 0)|
  double period = 1.0;     // h
  double chain_ratio = 0;  // max |Phi_d(t,0)| / m_tilde^{k+1}, k = floor(t/h); <= 1 expected
  std::vector<double> times;
  std::vector<double> growth;  // g(t) = max_d |Phi_d(t, 0)|
  DisturbanceSignal witness;   // attains g at the horizon
  nlohmann::json to_json() const;
};

struct SwitchedBoundOptions {
  double period = 1.0;
  int time_points = 201;
  std::vector<double> dwells = {0.05, 0.1, 0.2, 0.25, 0.5, 0.75, 1.0};
  std::uint64_t seed = 1;
  int pieces = 8;
};

SwitchedBound estimate_switched_bound(const SwitchedLinearModel& model, double horizon, int budget,
                                      const SwitchedBoundOptions& opts = {});

}  // namespace lyap
