#pragma once

#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace lyap {

// Piecewise-constant disturbance: values[i] holds on [breakpoints[i],
// breakpoints[i+1]), the last value holds on [breakpoints.back(), inf).
// Adjacent equal values are merged, so equal signals compare equal.
class DisturbanceSignal {
 public:
  DisturbanceSignal() : DisturbanceSignal(0.0) {}
  explicit DisturbanceSignal(double constant);
  DisturbanceSignal(std::vector<double> breakpoints, std::vector<double> values);

  double operator()(double t) const;
  double tail_value() const { return values_.back(); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& values() const { return values_; }

  // First breakpoint strictly after t, or +inf.
  double next_breakpoint_after(double t) const;

  bool operator==(const DisturbanceSignal&) const = default;

  nlohmann::json to_json() const;
  static DisturbanceSignal from_json(const nlohmann::json& j);

 private:
  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

DisturbanceSignal shift_signal(const DisturbanceSignal& d, double tau);
DisturbanceSignal concat_signal(const DisturbanceSignal& d1, const DisturbanceSignal& d2, double t);

// Periodic switching between the given values with a fixed dwell time,
// truncated at the horizon (the last value is held afterwards).
DisturbanceSignal periodic_signal(const std::vector<double>& cycle, double dwell, double horizon);

// The value set D. Real is unbounded; samplers draw from [-m, m] for a
// magnitude m supplied by the caller's sweep.
class DisturbanceSet {
 public:
  enum class Kind { None, Interval, Real, Finite };

  static DisturbanceSet none();
  static DisturbanceSet interval(double lo, double hi);
  static DisturbanceSet real();
  static DisturbanceSet finite(std::vector<double> values);

  Kind kind() const { return kind_; }
  bool bounded() const { return kind_ != Kind::Real; }
  bool contains(double v) const;
  // Extreme values at magnitude m (for Real: -m, 0, m).
  std::vector<double> corners(double magnitude) const;
  double sample(std::mt19937_64& rng, double magnitude) const;

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& values() const { return values_; }

  nlohmann::json to_json() const;
  static DisturbanceSet from_json(const nlohmann::json& j);

 private:
  Kind kind_ = Kind::None;
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<double> values_;
};

std::uint64_t splitmix64(std::uint64_t x);
// Independent stream for (seed, stream, index); used so that every sample is a
// pure function of its index.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);
double uniform01(std::mt19937_64& rng);
double standard_normal(std::mt19937_64& rng);

// Deterministic signal family: corner constants first, then random
// piecewise-constant signals with `pieces` pieces on a uniform grid of
// [0, horizon). Signal i does not depend on the requested count.
struct SignalSampler {
  DisturbanceSet set;
  double magnitude = 1.0;
  double horizon = 1.0;
  int pieces = 8;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::size_t head_size() const;
  DisturbanceSignal operator()(std::size_t index) const;
  std::vector<DisturbanceSignal> take(std::size_t count) const;
};

}  // namespace lyap
