#pragma once

#include "lyap/comparison.hpp"
#include "lyap/system.hpp"

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lyap {

struct LyapunovCandidate {
  std::string name;
  std::function<double(const Vec&)> eval;
  std::optional<ScalarFn> psi1;  // absent for non-coercive candidates
  std::optional<ScalarFn> psi2;
  std::optional<ScalarFn> alpha;

  double operator()(const Vec& x) const { return eval(x); }
};

class EscapeError : public std::runtime_error {
 public:
  EscapeError(const std::string& what, Vec x, DisturbanceSignal d, double t)
      : std::runtime_error(what), x(std::move(x)), d(std::move(d)), t(t) {}
  Vec x;
  DisturbanceSignal d;
  double t;
};

struct DiniOptions {
  double h0 = 1e-2;
  double ratio = 0.5;
  int terms = 10;
  double step = 1e-3;
};

std::vector<double> geometric_sequence(double h0, double ratio, int terms);

struct DiniEstimate {
  double value = 0.0;
  std::vector<double> h;
  std::vector<double> quotients;
};

// Minimum forward-difference quotient of V along the flow over the h sequence.
// Each short flow integrates at step min(step, h/10). An h whose flow escapes
// is skipped; EscapeError only when every h escapes.
DiniEstimate dini_derivative(const LyapunovCandidate& v, const SystemModel& model, const Vec& x,
                             const DisturbanceSignal& d, std::span<const double> h_sequence,
                             double step = 1e-3);
DiniEstimate dini_derivative(const LyapunovCandidate& v, const SystemModel& model, const Vec& x,
                             const DisturbanceSignal& d, const DiniOptions& opts = {});

enum class DecayVerdict { NoViolationFound, Violated };
std::string_view to_string(DecayVerdict v);

struct DecaySample {
  Vec x;
  DisturbanceSignal d;
  double dini = 0.0;
  double bound = 0.0;   // -alpha(|x|)
  double margin = 0.0;  // (dini - bound) / (|bound| + 1e-9)
  bool escaped = false;
};

struct DecayReport {
  std::vector<DecaySample> samples;
  double worst_margin = -INFINITY;
  double tol = 1e-3;
  DecayVerdict verdict = DecayVerdict::NoViolationFound;
  std::optional<std::size_t> witness;  // index of the worst sample when violated

  nlohmann::json to_json() const;
  void write_csv(std::ostream& os) const;
};

struct DecayOptions {
  double tol = 1e-3;
  DiniOptions dini;
};

// Every (x, d) pair of the two sample lists is checked.
DecayReport verify_decay(const LyapunovCandidate& v, const ScalarFn& alpha,
                         const SystemModel& model, std::span<const Vec> states,
                         std::span<const DisturbanceSignal> disturbances,
                         const DecayOptions& opts = {});

struct IntegralBoundReport {
  double integral = 0.0;
  double v0 = 0.0;
  double slack = 0.0;  // v0 + tol - integral
  double tol = 0.0;
  // max over samples t of V(phi(t)) - V(x) + int_0^t alpha
  double dini_integration_max = -INFINITY;
  bool passed = false;
  nlohmann::json to_json() const;
};

IntegralBoundReport verify_integral_bound(const LyapunovCandidate& v, const ScalarFn& alpha,
                                          const SystemModel& model, const Vec& x,
                                          const DisturbanceSignal& d, double horizon,
                                          double quadrature_step);

struct CoercivityRow {
  double radius = 0.0;
  double inf = INFINITY;
  double sup = 0.0;
  std::vector<double> witness_values;  // V(r * w_i) for each witness direction
};

struct CoercivityProfile {
  std::vector<CoercivityRow> rows;
  bool non_coercive = false;
  double fraction = 0.05;
};

// Random directions (prefix-stable in the budget) plus caller-supplied witness
// directions, evaluated on each sphere. Flags non-coercivity when the witness
// values decrease along the list and end below fraction * sup.
CoercivityProfile coercivity_profile(const LyapunovCandidate& v,
                                     const std::function<double(const Vec&)>& norm, int dim,
                                     std::span<const double> radii, int direction_budget,
                                     std::span<const Vec> witness_directions = {},
                                     double fraction = 0.05, std::uint64_t seed = 7);

}  // namespace lyap
