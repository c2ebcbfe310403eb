#include "lyap/comparison.hpp"

#include "lyap/format.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace lyap {

std::string_view to_string(ComparisonClass c) {
  switch (c) {
    case ComparisonClass::K: return "K";
    case ComparisonClass::Kinf: return "Kinf";
    case ComparisonClass::L: return "L";
    case ComparisonClass::PositiveDefinite: return "PositiveDefinite";
  }
  return "?";
}

ComparisonClass parse_comparison_class(std::string_view s) {
  if (s == "K") return ComparisonClass::K;
  if (s == "Kinf") return ComparisonClass::Kinf;
  if (s == "L") return ComparisonClass::L;
  if (s == "PositiveDefinite") return ComparisonClass::PositiveDefinite;
  throw std::invalid_argument("unknown comparison class: " + std::string(s));
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    out[i] = (i + 1 == n) ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

namespace {

bool is_increasing_class(ComparisonClass c) {
  return c == ComparisonClass::K || c == ComparisonClass::Kinf;
}

// Index i with grid[i] <= s < grid[i+1], clamped to [0, n-2].
std::size_t segment(const std::vector<double>& g, double s) {
  auto it = std::upper_bound(g.begin(), g.end(), s);
  std::size_t i = it == g.begin() ? 0 : static_cast<std::size_t>(it - g.begin()) - 1;
  return std::min(i, g.size() - 2);
}

}  // namespace

TabulatedMonotone::TabulatedMonotone(std::vector<double> grid, std::vector<double> values,
                                     ComparisonClass cls)
    : grid_(std::move(grid)), values_(std::move(values)), cls_(cls) {
  if (grid_.size() != values_.size()) throw std::invalid_argument("grid/value size mismatch");
  if (grid_.size() < 2) throw std::invalid_argument("table needs at least two samples");
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (!std::isfinite(grid_[i]) || !std::isfinite(values_[i]))
      throw std::invalid_argument("non-finite table entry");
    if (grid_[i] < 0 || values_[i] < 0) throw std::invalid_argument("negative table entry");
    if (i > 0 && !(grid_[i] > grid_[i - 1]))
      throw std::invalid_argument("grid must be strictly increasing");
  }
  switch (cls_) {
    case ComparisonClass::K:
    case ComparisonClass::Kinf:
      if (grid_[0] != 0.0 || values_[0] != 0.0)
        throw std::invalid_argument("class K tables must pass through (0, 0)");
      for (std::size_t i = 1; i < values_.size(); ++i)
        if (!(values_[i] > values_[i - 1]))
          throw std::invalid_argument("class K values must be strictly increasing");
      break;
    case ComparisonClass::L:
      for (std::size_t i = 1; i < values_.size(); ++i)
        if (values_[i] > values_[i - 1])
          throw std::invalid_argument("class L values must be non-increasing");
      break;
    case ComparisonClass::PositiveDefinite:
      for (std::size_t i = 0; i < values_.size(); ++i) {
        if (grid_[i] == 0.0 && values_[i] != 0.0)
          throw std::invalid_argument("positive definite table must vanish at 0");
        if (grid_[i] > 0.0 && !(values_[i] > 0.0))
          throw std::invalid_argument("positive definite table must be positive off 0");
      }
      break;
  }
}

TabulatedMonotone TabulatedMonotone::from_function(const ScalarFn& f, std::span<const double> grid,
                                                   ComparisonClass cls) {
  std::vector<double> g(grid.begin(), grid.end());
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g[i]);
  return TabulatedMonotone(std::move(g), std::move(v), cls);
}

double TabulatedMonotone::tail_slope() const {
  std::size_t n = grid_.size();
  return (values_[n - 1] - values_[n - 2]) / (grid_[n - 1] - grid_[n - 2]);
}

double TabulatedMonotone::operator()(double s) const {
  if (s <= grid_.front()) return values_.front();
  if (s >= grid_.back()) {
    if (cls_ == ComparisonClass::Kinf) return values_.back() + tail_slope() * (s - grid_.back());
    return values_.back();
  }
  std::size_t i = segment(grid_, s);
  double w = (s - grid_[i]) / (grid_[i + 1] - grid_[i]);
  return values_[i] + w * (values_[i + 1] - values_[i]);
}

double TabulatedMonotone::inverse(double y) const {
  if (!is_increasing_class(cls_)) throw std::logic_error("inverse needs a class K table");
  if (y <= 0) return 0.0;
  if (y >= values_.back()) {
    if (y == values_.back()) return grid_.back();
    if (cls_ != ComparisonClass::Kinf) throw std::domain_error("value outside bounded K range");
    return grid_.back() + (y - values_.back()) / tail_slope();
  }
  auto it = std::lower_bound(values_.begin(), values_.end(), y);
  std::size_t j = static_cast<std::size_t>(it - values_.begin());
  if (values_[j] == y) return grid_[j];
  std::size_t i = j - 1;
  double w = (y - values_[i]) / (values_[j] - values_[i]);
  return grid_[i] + w * (grid_[j] - grid_[i]);
}

TabulatedMonotone TabulatedMonotone::inverted() const {
  if (!is_increasing_class(cls_)) throw std::logic_error("inverted needs a class K table");
  return TabulatedMonotone(values_, grid_, cls_);
}

void TabulatedMonotone::write_csv(std::ostream& os) const {
  os << "abscissa," << to_string(cls_) << "\n";
  for (std::size_t i = 0; i < grid_.size(); ++i)
    os << fmt17(grid_[i]) << "," << fmt17(values_[i]) << "\n";
}

TabulatedMonotone TabulatedMonotone::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty table csv");
  auto head = split_csv(line);
  if (head.size() != 2 || head[0] != "abscissa") throw std::invalid_argument("bad table header");
  std::string tag = head[1];
  while (!tag.empty() && tag.back() == '\r') tag.pop_back();
  ComparisonClass cls = parse_comparison_class(tag);
  std::vector<double> g, v;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != 2) throw std::invalid_argument("bad table row");
    g.push_back(parse_double(cells[0]));
    v.push_back(parse_double(cells[1]));
  }
  return TabulatedMonotone(std::move(g), std::move(v), cls);
}

KLSurface::KLSurface(std::vector<double> r_grid, std::vector<double> t_grid, Eigen::MatrixXd values)
    : r_grid_(std::move(r_grid)), t_grid_(std::move(t_grid)), values_(std::move(values)) {
  if (r_grid_.empty() || t_grid_.empty()) throw std::invalid_argument("empty KL grid");
  if (values_.rows() != static_cast<Eigen::Index>(r_grid_.size()) ||
      values_.cols() != static_cast<Eigen::Index>(t_grid_.size()))
    throw std::invalid_argument("KL values shape mismatch");
  for (std::size_t i = 1; i < r_grid_.size(); ++i)
    if (!(r_grid_[i] > r_grid_[i - 1])) throw std::invalid_argument("r grid must increase");
  for (std::size_t j = 1; j < t_grid_.size(); ++j)
    if (!(t_grid_[j] > t_grid_[j - 1])) throw std::invalid_argument("t grid must increase");
  if (r_grid_.front() < 0 || t_grid_.front() < 0) throw std::invalid_argument("negative grid");
}

KLSurface KLSurface::from_function(const std::function<double(double, double)>& beta,
                                   std::vector<double> r_grid, std::vector<double> t_grid) {
  Eigen::MatrixXd v(r_grid.size(), t_grid.size());
  for (std::size_t i = 0; i < r_grid.size(); ++i)
    for (std::size_t j = 0; j < t_grid.size(); ++j) v(i, j) = beta(r_grid[i], t_grid[j]);
  return KLSurface(std::move(r_grid), std::move(t_grid), std::move(v));
}

double KLSurface::operator()(double r, double t) const {
  auto slice = [&](std::size_t i) {
    if (t_grid_.size() == 1 || t <= t_grid_.front()) return values_(i, 0);
    if (t >= t_grid_.back()) return values_(i, values_.cols() - 1);
    std::size_t j = segment(t_grid_, t);
    double w = (t - t_grid_[j]) / (t_grid_[j + 1] - t_grid_[j]);
    return values_(i, j) + w * (values_(i, j + 1) - values_(i, j));
  };
  if (r_grid_.size() == 1) return slice(0);
  if (r <= r_grid_.front()) return slice(0);
  std::size_t i = segment(r_grid_, r);
  double w = (r - r_grid_[i]) / (r_grid_[i + 1] - r_grid_[i]);
  double a = slice(i), b = slice(i + 1);
  return a + w * (b - a);
}

bool KLSurface::is_class_kl(double tol) const {
  for (Eigen::Index j = 0; j < values_.cols(); ++j)
    for (Eigen::Index i = 1; i < values_.rows(); ++i)
      if (values_(i, j) + tol < values_(i - 1, j)) return false;
  for (Eigen::Index i = 0; i < values_.rows(); ++i)
    for (Eigen::Index j = 1; j < values_.cols(); ++j)
      if (values_(i, j) > values_(i, j - 1) + tol) return false;
  return true;
}

void KLSurface::write_csv(std::ostream& os) const {
  os << "t\\r";
  for (double r : r_grid_) os << "," << fmt17(r);
  os << "\n";
  for (std::size_t j = 0; j < t_grid_.size(); ++j) {
    os << fmt17(t_grid_[j]);
    for (std::size_t i = 0; i < r_grid_.size(); ++i)
      os << "," << fmt17(values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    os << "\n";
  }
}

KLSurface KLSurface::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty KL csv");
  auto head = split_csv(line);
  if (head.size() < 2) throw std::invalid_argument("bad KL header");
  std::vector<double> r;
  for (std::size_t i = 1; i < head.size(); ++i) r.push_back(parse_double(head[i]));
  std::vector<double> t;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != head.size()) throw std::invalid_argument("bad KL row");
    t.push_back(parse_double(cells[0]));
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(parse_double(cells[i]));
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd v(r.size(), t.size());
  for (std::size_t j = 0; j < t.size(); ++j)
    for (std::size_t i = 0; i < r.size(); ++i)
      v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[j][i];
  return KLSurface(std::move(r), std::move(t), std::move(v));
}

double gk_threshold(int k, double r) {
  if (k < 1) throw std::invalid_argument("G_k needs k >= 1");
  return std::max(r - 1.0 / k, 0.0);
}

TabulatedMonotone lipschitz_minorant(const TabulatedMonotone& alpha) {
  if (alpha.comparison_class() != ComparisonClass::Kinf)
    throw std::invalid_argument("lipschitz_minorant needs a Kinf table");
  const auto& g = alpha.grid();
  const auto& a = alpha.values();
  std::size_t n = g.size();
  std::vector<double> rho(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = a[i];
    for (std::size_t j = 0; j < n; ++j) best = std::min(best, a[j] + std::abs(g[i] - g[j]));
    rho[i] = best;
  }
  rho[0] = 0.0;
  // The envelope of a strictly increasing table is strictly increasing; keep
  // that exact in floating point.
  for (std::size_t i = 1; i < n; ++i)
    if (!(rho[i] > rho[i - 1])) rho[i] = std::nextafter(rho[i - 1], INFINITY);
  TabulatedMonotone out(g, rho, ComparisonClass::Kinf);
  double slope = std::min({1.0, alpha.tail_slope(), out.tail_slope()});
  if (slope < out.tail_slope()) {
    // Flatten the last segment so the linear tail stays below alpha and unit-Lipschitz.
    rho[n - 1] = std::max(rho[n - 2] + slope * (g[n - 1] - g[n - 2]),
                          std::nextafter(rho[n - 2], INFINITY));
    out = TabulatedMonotone(g, rho, ComparisonClass::Kinf);
  }
  return out;
}

bool dominates(const KLSurface& beta, const TabulatedMonotone& alpha1,
               const TabulatedMonotone& alpha2, double* worst_r, double* worst_t,
               double* worst_excess) {
  double worst = -INFINITY;
  double wr = 0, wt = 0;
  for (std::size_t i = 0; i < beta.r_grid().size(); ++i) {
    for (std::size_t j = 0; j < beta.t_grid().size(); ++j) {
      double r = beta.r_grid()[i], t = beta.t_grid()[j];
      double b = beta.at(i, j);
      double bound = alpha2(alpha1(r) * std::exp(-t));
      double excess = std::isfinite(b) ? b - bound : INFINITY;
      if (excess > worst) {
        worst = excess;
        wr = r;
        wt = t;
      }
    }
  }
  if (worst_r) *worst_r = wr;
  if (worst_t) *worst_t = wt;
  if (worst_excess) *worst_excess = worst;
  return worst <= 0.0;
}

namespace {

// alpha1(r) = running max over j of alpha2^{-1}(beta(r,t_j)) e^{t_j}, made
// strictly increasing and inflated by a relative 1e-12 to absorb rounding.
TabulatedMonotone fit_alpha1(const KLSurface& beta, const TabulatedMonotone& alpha2, double floor) {
  const auto& r = beta.r_grid();
  std::vector<double> g, v;
  if (r.front() > 0) {
    g.push_back(0.0);
    v.push_back(0.0);
  }
  double running = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < beta.t_grid().size(); ++j)
      m = std::max(m, alpha2.inverse(beta.at(i, j)) * std::exp(beta.t_grid()[j]));
    m *= 1.0 + 1e-12;
    running = std::max(running, m);
    g.push_back(r[i]);
    v.push_back(r[i] == 0.0 ? 0.0 : running + floor * r[i]);
  }
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) v[i] = std::nextafter(v[i - 1], INFINITY);
  return TabulatedMonotone(std::move(g), std::move(v), ComparisonClass::Kinf);
}

// Minimal monotone envelope through the knots (alpha1(r)e^{-t}, beta(r,t)).
TabulatedMonotone fit_alpha2(const KLSurface& beta, const TabulatedMonotone& alpha1, double floor) {
  std::vector<std::pair<double, double>> knots;
  for (std::size_t i = 0; i < beta.r_grid().size(); ++i)
    for (std::size_t j = 0; j < beta.t_grid().size(); ++j)
      knots.emplace_back(alpha1(beta.r_grid()[i]) * std::exp(-beta.t_grid()[j]), beta.at(i, j));
  std::sort(knots.begin(), knots.end());
  std::vector<double> g{0.0}, v{0.0};
  double running = 0.0;
  for (auto [s, b] : knots) {
    running = std::max(running, b);
    if (s <= 0.0) continue;
    if (s == g.back()) {
      v.back() = std::max(v.back(), running + floor * s);
    } else {
      g.push_back(s);
      v.push_back(running + floor * s);
    }
  }
  if (g.size() < 2) {
    g.push_back(1.0);
    v.push_back(1.0);
  }
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) v[i] = std::nextafter(v[i - 1], INFINITY);
  return TabulatedMonotone(std::move(g), std::move(v), ComparisonClass::Kinf);
}

}  // namespace

SontagFactorization sontag_factorize(const KLSurface& beta, const SontagOptions& opts) {
  for (Eigen::Index i = 0; i < beta.values().rows(); ++i)
    for (Eigen::Index j = 0; j < beta.values().cols(); ++j)
      if (!std::isfinite(beta.values()(i, j)) || beta.values()(i, j) < 0)
        throw FactorizationError("surface has non-finite or negative samples",
                                 beta.r_grid()[static_cast<std::size_t>(i)],
                                 beta.t_grid()[static_cast<std::size_t>(j)], INFINITY);
  if (beta.r_grid().size() < 1) throw FactorizationError("empty surface", 0, 0, INFINITY);

  std::vector<double> id_grid{0.0, 1.0};
  TabulatedMonotone alpha2(id_grid, id_grid, ComparisonClass::Kinf);
  TabulatedMonotone alpha1 = fit_alpha1(beta, alpha2, opts.slope_floor);
  SontagFactorization best{alpha1, alpha2, 0, 0.0};
  bool have_best = false;
  int it = 0;
  for (; it < std::max(1, opts.max_iterations); ++it) {
    double wr, wt, ex;
    if (dominates(beta, alpha1, alpha2, &wr, &wt, &ex)) {
      best = SontagFactorization{alpha1, alpha2, it + 1, 0.0};
      have_best = true;
    } else if (!have_best && it + 1 == opts.max_iterations) {
      throw FactorizationError("no dominating pair found", wr, wt, ex);
    }
    TabulatedMonotone next2 = fit_alpha2(beta, alpha1, opts.slope_floor);
    TabulatedMonotone next1 = fit_alpha1(beta, next2, opts.slope_floor);
    double change = 0.0;
    for (double r : beta.r_grid())
      change = std::max(change, std::abs(next1(r) - alpha1(r)) / (1.0 + alpha1(r)));
    alpha1 = std::move(next1);
    alpha2 = std::move(next2);
    if (change < 1e-9) {
      if (dominates(beta, alpha1, alpha2)) best = SontagFactorization{alpha1, alpha2, it + 2, 0.0};
      break;
    }
  }
  if (!have_best) {
    double wr, wt, ex;
    if (!dominates(beta, best.alpha1, best.alpha2, &wr, &wt, &ex))
      throw FactorizationError("no dominating pair found", wr, wt, ex);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < beta.r_grid().size(); ++i)
    for (std::size_t j = 0; j < beta.t_grid().size(); ++j) {
      double bound = best.alpha2(best.alpha1(beta.r_grid()[i]) * std::exp(-beta.t_grid()[j]));
      if (bound > 0) worst = std::max(worst, beta.at(i, j) / bound);
    }
  best.worst_ratio = worst;
  return best;
}

KLSurface kl_from_alpha(const TabulatedMonotone& alpha, std::vector<double> r_grid,
                        std::vector<double> t_grid, const KLFromAlphaOptions& opts) {
  if (alpha.comparison_class() != ComparisonClass::PositiveDefinite &&
      alpha.comparison_class() != ComparisonClass::K &&
      alpha.comparison_class() != ComparisonClass::Kinf)
    throw std::invalid_argument("kl_from_alpha needs a positive definite rate");
  for (std::size_t j = 1; j < t_grid.size(); ++j)
    if (!(t_grid[j] > t_grid[j - 1])) throw std::invalid_argument("t grid must increase");
  if (t_grid.empty() || t_grid.front() < 0) throw std::invalid_argument("bad t grid");

  auto f = [&](double y) { return -alpha(std::max(y, 0.0)); };
  auto rk4 = [&](double y, double h) {
    double k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2), k4 = f(y + h * k3);
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  };
  // One interval with step halving whenever RK4 leaves [0, y].
  auto advance = [&](double y, double h) {
    for (int halvings = 0; halvings < 40; ++halvings) {
      int n = 1 << halvings;
      double sub = h / n;
      double z = y;
      bool ok = true;
      for (int s = 0; s < n && ok; ++s) {
        double next = rk4(z, sub);
        if (!std::isfinite(next) || next > z) {
          ok = false;
          break;
        }
        if (next < opts.floor) return 0.0;
        z = next;
      }
      if (ok) return z;
    }
    throw IntegrationError("step collapse in comparison flow");
  };

  Eigen::MatrixXd v(r_grid.size(), t_grid.size());
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    double y = r_grid[i] < opts.floor ? 0.0 : r_grid[i];
    double t = 0.0;
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
      double target = t_grid[j];
      if (y > 0.0 && target > t) {
        auto n = static_cast<long>(std::ceil((target - t) / opts.max_step - 1e-9));
        n = std::max(n, 1L);
        double h = (target - t) / static_cast<double>(n);
        for (long s = 0; s < n && y > 0.0; ++s) y = advance(y, h);
      }
      t = std::max(t, target);
      v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = y;
    }
  }
  return KLSurface(std::move(r_grid), std::move(t_grid), std::move(v));
}

}  // namespace lyap
