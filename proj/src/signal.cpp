#include "lyap/signal.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lyap {

DisturbanceSignal::DisturbanceSignal(double constant) : breakpoints_{0.0}, values_{constant} {
  if (!std::isfinite(constant)) throw std::invalid_argument("non-finite disturbance value");
}

DisturbanceSignal::DisturbanceSignal(std::vector<double> breakpoints, std::vector<double> values) {
  if (breakpoints.empty() || breakpoints.size() != values.size())
    throw std::invalid_argument("signal needs one value per breakpoint");
  if (breakpoints.front() != 0.0) throw std::invalid_argument("signal must start at 0");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (!std::isfinite(breakpoints[i]) || !std::isfinite(values[i]))
      throw std::invalid_argument("non-finite signal entry");
    if (i > 0 && !(breakpoints[i] > breakpoints[i - 1]))
      throw std::invalid_argument("breakpoints must be strictly increasing");
  }
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (i > 0 && values[i] == values_.back()) continue;
    breakpoints_.push_back(breakpoints[i]);
    values_.push_back(values[i]);
  }
}

double DisturbanceSignal::operator()(double t) const {
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  if (it == breakpoints_.begin()) return values_.front();
  return values_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
}

double DisturbanceSignal::next_breakpoint_after(double t) const {
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  return it == breakpoints_.end() ? std::numeric_limits<double>::infinity() : *it;
}

nlohmann::json DisturbanceSignal::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t i = 0; i < breakpoints_.size(); ++i)
    j.push_back(nlohmann::json::array({breakpoints_[i], values_[i]}));
  return j;
}

DisturbanceSignal DisturbanceSignal::from_json(const nlohmann::json& j) {
  if (j.is_number()) return DisturbanceSignal(j.get<double>());
  if (!j.is_array()) throw std::invalid_argument("signal must be a number or an array of pairs");
  std::vector<double> b, v;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw std::invalid_argument("signal entries are pairs");
    b.push_back(p[0].get<double>());
    v.push_back(p[1].get<double>());
  }
  return DisturbanceSignal(std::move(b), std::move(v));
}

DisturbanceSignal shift_signal(const DisturbanceSignal& d, double tau) {
  if (!(tau >= 0)) throw std::invalid_argument("shift must be nonnegative");
  if (tau == 0.0) return d;
  std::vector<double> b{0.0}, v{d(tau)};
  for (std::size_t i = 0; i < d.breakpoints().size(); ++i) {
    double s = d.breakpoints()[i] - tau;
    if (s > 0.0) {
      b.push_back(s);
      v.push_back(d.values()[i]);
    }
  }
  return DisturbanceSignal(std::move(b), std::move(v));
}

DisturbanceSignal concat_signal(const DisturbanceSignal& d1, const DisturbanceSignal& d2, double t) {
  if (!(t > 0)) throw std::invalid_argument("concatenation time must be positive");
  std::vector<double> b, v;
  for (std::size_t i = 0; i < d1.breakpoints().size() && d1.breakpoints()[i] < t; ++i) {
    b.push_back(d1.breakpoints()[i]);
    v.push_back(d1.values()[i]);
  }
  for (std::size_t i = 0; i < d2.breakpoints().size(); ++i) {
    double s = d2.breakpoints()[i] + t;
    if (!(s > b.back())) throw std::invalid_argument("concatenation loses breakpoint resolution");
    b.push_back(s);
    v.push_back(d2.values()[i]);
  }
  return DisturbanceSignal(std::move(b), std::move(v));
}

DisturbanceSignal periodic_signal(const std::vector<double>& cycle, double dwell, double horizon) {
  if (cycle.empty() || !(dwell > 0)) throw std::invalid_argument("bad periodic signal");
  std::vector<double> b, v;
  for (std::size_t k = 0;; ++k) {
    double s = static_cast<double>(k) * dwell;
    if (k > 0 && s >= horizon) break;
    b.push_back(s);
    v.push_back(cycle[k % cycle.size()]);
  }
  return DisturbanceSignal(std::move(b), std::move(v));
}

DisturbanceSet DisturbanceSet::none() { return DisturbanceSet{}; }

DisturbanceSet DisturbanceSet::interval(double lo, double hi) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("bad disturbance interval");
  DisturbanceSet s;
  s.kind_ = Kind::Interval;
  s.lo_ = lo;
  s.hi_ = hi;
  return s;
}

DisturbanceSet DisturbanceSet::real() {
  DisturbanceSet s;
  s.kind_ = Kind::Real;
  s.lo_ = -INFINITY;
  s.hi_ = INFINITY;
  return s;
}

DisturbanceSet DisturbanceSet::finite(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("finite disturbance set is empty");
  DisturbanceSet s;
  s.kind_ = Kind::Finite;
  s.values_ = std::move(values);
  return s;
}

bool DisturbanceSet::contains(double v) const {
  switch (kind_) {
    case Kind::None: return v == 0.0;
    case Kind::Interval: return v >= lo_ && v <= hi_;
    case Kind::Real: return std::isfinite(v);
    case Kind::Finite: return std::find(values_.begin(), values_.end(), v) != values_.end();
  }
  return false;
}

std::vector<double> DisturbanceSet::corners(double magnitude) const {
  switch (kind_) {
    case Kind::None: return {0.0};
    case Kind::Interval:
      if (lo_ == hi_) return {lo_};
      return {lo_, hi_};
    case Kind::Real: return {magnitude, -magnitude, 0.0};
    case Kind::Finite: return values_;
  }
  return {0.0};
}

double DisturbanceSet::sample(std::mt19937_64& rng, double magnitude) const {
  double u = uniform01(rng);
  switch (kind_) {
    case Kind::None: return 0.0;
    case Kind::Interval: return lo_ + (hi_ - lo_) * u;
    case Kind::Real: return magnitude * (2.0 * u - 1.0);
    case Kind::Finite: {
      auto i = std::min(values_.size() - 1, static_cast<std::size_t>(u * values_.size()));
      return values_[i];
    }
  }
  return 0.0;
}

nlohmann::json DisturbanceSet::to_json() const {
  switch (kind_) {
    case Kind::None: return {{"kind", "none"}};
    case Kind::Interval: return {{"kind", "interval"}, {"lo", lo_}, {"hi", hi_}};
    case Kind::Real: return {{"kind", "real"}};
    case Kind::Finite: return {{"kind", "finite"}, {"values", values_}};
  }
  return {};
}

DisturbanceSet DisturbanceSet::from_json(const nlohmann::json& j) {
  std::string k = j.at("kind").get<std::string>();
  if (k == "none") return none();
  if (k == "interval") return interval(j.at("lo").get<double>(), j.at("hi").get<double>());
  if (k == "real") return real();
  if (k == "finite") return finite(j.at("values").get<std::vector<double>>());
  throw std::invalid_argument("unknown disturbance set kind: " + k);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::size_t SignalSampler::head_size() const { return set.corners(magnitude).size(); }

DisturbanceSignal SignalSampler::operator()(std::size_t index) const {
  auto corners = set.corners(magnitude);
  if (index < corners.size()) return DisturbanceSignal(corners[index]);
  auto rng = stream_rng(seed, stream, index);
  int n = std::max(1, pieces);
  std::vector<double> b(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    b[static_cast<std::size_t>(i)] = horizon * i / n;
    v[static_cast<std::size_t>(i)] = set.sample(rng, magnitude);
  }
  return DisturbanceSignal(std::move(b), std::move(v));
}

std::vector<DisturbanceSignal> SignalSampler::take(std::size_t count) const {
  std::vector<DisturbanceSignal> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back((*this)(i));
  return out;
}

}  // namespace lyap
