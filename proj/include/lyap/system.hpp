#pragma once

#include "lyap/signal.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lyap {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A simulatable system: either a vector field x' = f(x, d) integrated by RK4,
// or an exact propagator x -> Phi_d(tau) x for constant d over tau.
class SystemModel {
 public:
  using Rhs = std::function<Vec(const Vec& x, double d)>;
  using Propagator = std::function<Vec(double d, double tau, const Vec& x)>;
  using Norm = std::function<double(const Vec& x)>;
  // (disturbance magnitude, state radius) -> bound
  using Hint = std::function<double(double magnitude, double radius)>;
  // Local bound on the stiffness |df/dx| at (x, d).
  using LocalRate = std::function<double(const Vec& x, double d)>;

  struct Spec {
    std::string name;
    int dim = 1;
    Rhs rhs;
    Propagator propagator;
    Norm norm;  // Euclidean when empty
    DisturbanceSet disturbances;
    bool equilibrium_at_zero = true;
    bool linear = false;
    // Lipschitz constant of x -> f(x, d) on the ball of the given radius.
    Hint lipschitz_hint;
    // Bound on the local rate |df/dx|, used to shrink the RK4 step.
    Hint rate_hint;
    // Preferred over rate_hint by state-adaptive flows when present.
    LocalRate local_rate;
    nlohmann::json descriptor;
  };

  explicit SystemModel(Spec spec);

  const std::string& name() const { return spec_.name; }
  int dim() const { return spec_.dim; }
  bool has_propagator() const { return static_cast<bool>(spec_.propagator); }
  bool equilibrium_at_zero() const { return spec_.equilibrium_at_zero; }
  bool linear() const { return spec_.linear; }
  const DisturbanceSet& disturbances() const { return spec_.disturbances; }
  const nlohmann::json& descriptor() const { return spec_.descriptor; }
  const Hint& lipschitz_hint() const { return spec_.lipschitz_hint; }
  const Hint& rate_hint() const { return spec_.rate_hint; }
  const LocalRate& local_rate() const { return spec_.local_rate; }

  double norm(const Vec& x) const { return spec_.norm ? spec_.norm(x) : x.norm(); }
  Vec rhs(const Vec& x, double d) const { return spec_.rhs(x, d); }
  Vec propagate(double d, double tau, const Vec& x) const { return spec_.propagator(d, tau, x); }

 private:
  Spec spec_;
};

struct FlowOptions {
  double step = 1e-3;
  double explosion_threshold = 1e12;
  // Stop early (not an escape) once the norm exceeds this value.
  double stop_norm = std::numeric_limits<double>::infinity();
  // When false only the first and the last state are stored; the norm
  // statistics below are still tracked at every step.
  bool record = true;
  // When positive and the model has a rate hint, each constant-disturbance
  // segment uses step min(step, rate_safety / rate_hint(|d|, rate_radius)).
  double rate_radius = 0.0;
  double rate_safety = 0.25;
  // Re-evaluate the stiffness before every step (local_rate, else the rate
  // hint at radius 1.25|x|) instead of once per segment. Steps are then
  // non-uniform. A run that reaches 0 exactly at an equilibrium stops there.
  bool rate_from_state = false;
  // Hard cap on integrator steps; exceeding it throws StepLimitError.
  long max_steps = 200000000;
};

// A flow needed more steps than FlowOptions::max_steps allows (stiffness).
class StepLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EscapeBracket {
  double last_finite = 0.0;
  double first_exceed = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  DisturbanceSignal signal;
  std::optional<EscapeBracket> escaped;
  bool stopped = false;
  double max_norm = 0.0;

  const Vec& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }
};

// RK4 at the configured step, or the exact propagator. An exact run with
// record = false and no stop_norm takes one propagator step per constant
// piece of d, so max_norm then covers the piece endpoints only.
Trajectory flow(const SystemModel& model, double t, const Vec& x, const DisturbanceSignal& d,
                const FlowOptions& opts = {});

// min(base, safety / rate_hint(magnitude, radius)); base if no hint.
double choose_step(const SystemModel& model, double base, double magnitude, double radius,
                   double safety = 0.25);

struct AxiomOptions {
  int budget = 32;
  double tol = 1e-6;
  double step = 1e-3;
  double horizon = 1.0;
  double radius = 1.0;
  double magnitude = 1.0;
  std::uint64_t seed = 1;
};

struct AxiomReport {
  double identity_max = 0.0;
  double causality_max = 0.0;
  double cocycle_max = 0.0;
  double continuity_max = 0.0;
  int samples = 0;
  int excluded_escaped = 0;
  bool identity_exact = true;
  bool causality_exact = true;
  bool passed = true;
  nlohmann::json to_json() const;
};

AxiomReport check_axioms(const SystemModel& model, const AxiomOptions& opts = {});

struct HomogeneityOptions {
  int budget = 32;
  double tol = 1e-8;
  double lambda_max = 2.0;
  double step = 1e-3;
  double horizon = 1.0;
  double radius = 1.0;
  double magnitude = 1.0;
  std::uint64_t seed = 2;
};

struct HomogeneityReport {
  double max_residual = 0.0;
  double worst_lambda = 0.0;
  int samples = 0;
  int excluded_escaped = 0;
  bool passed = true;
  nlohmann::json to_json() const;
};

HomogeneityReport check_homogeneity(const SystemModel& model, const HomogeneityOptions& opts = {});

// Uniform point in the ball (on the sphere with probability 1/2).
Vec sample_ball(std::mt19937_64& rng, int dim, double radius);
Vec sample_direction(std::mt19937_64& rng, int dim);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace lyap
