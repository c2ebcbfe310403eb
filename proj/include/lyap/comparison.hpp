#pragma once

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lyap {

using ScalarFn = std::function<double(double)>;

enum class ComparisonClass { K, Kinf, L, PositiveDefinite };

std::string_view to_string(ComparisonClass c);
ComparisonClass parse_comparison_class(std::string_view s);

// Monotone piecewise-linear table. K and Kinf tables start at (0, 0) and are
// strictly increasing; Kinf extrapolates linearly with the last segment slope,
// K, L and PositiveDefinite tables hold the last value.
class TabulatedMonotone {
 public:
  TabulatedMonotone(std::vector<double> grid, std::vector<double> values, ComparisonClass cls);

  static TabulatedMonotone from_function(const ScalarFn& f, std::span<const double> grid,
                                         ComparisonClass cls);

  double operator()(double s) const;

  // Smallest preimage; K/Kinf only. Values above a bounded K table's range
  // raise std::domain_error.
  double inverse(double y) const;

  // The inverse as a table (swap of axes). K/Kinf only.
  TabulatedMonotone inverted() const;

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  ComparisonClass comparison_class() const { return cls_; }
  double tail_slope() const;

  void write_csv(std::ostream& os) const;
  static TabulatedMonotone read_csv(std::istream& is);

  operator ScalarFn() const {
    return [t = *this](double s) { return t(s); };
  }

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
  ComparisonClass cls_;
};

// Samples beta(r_i, t_j); rows follow r_grid, columns follow t_grid. Only
// the shape is validated on construction; is_class_kl() checks monotonicity.
class KLSurface {
 public:
  KLSurface(std::vector<double> r_grid, std::vector<double> t_grid, Eigen::MatrixXd values);

  static KLSurface from_function(const std::function<double(double, double)>& beta,
                                 std::vector<double> r_grid, std::vector<double> t_grid);

  // Bilinear interpolation; clamps t beyond the grid, extrapolates r linearly
  // from the last two r samples.
  double operator()(double r, double t) const;

  bool is_class_kl(double tol = 0.0) const;

  const std::vector<double>& r_grid() const { return r_grid_; }
  const std::vector<double>& t_grid() const { return t_grid_; }
  const Eigen::MatrixXd& values() const { return values_; }
  double at(std::size_t i, std::size_t j) const { return values_(i, j); }

  // Header row "t\r,r_0,...", then one row per t: t_j, beta(r_0,t_j), ...
  // Infinite entries are written as "inf".
  void write_csv(std::ostream& os) const;
  static KLSurface read_csv(std::istream& is);

 private:
  std::vector<double> r_grid_;
  std::vector<double> t_grid_;
  Eigen::MatrixXd values_;
};

double gk_threshold(int k, double r);

TabulatedMonotone lipschitz_minorant(const TabulatedMonotone& alpha);

struct SontagFactorization {
  TabulatedMonotone alpha1;
  TabulatedMonotone alpha2;
  int iterations = 0;
  double worst_ratio = 0.0;  // max over grid of beta / alpha2(alpha1 e^{-t})
};

class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(const std::string& what, double r, double t, double excess)
      : std::runtime_error(what), r(r), t(t), excess(excess) {}
  double r;
  double t;
  double excess;
};

struct SontagOptions {
  int max_iterations = 20;
  double slope_floor = 1e-9;
};

SontagFactorization sontag_factorize(const KLSurface& beta, const SontagOptions& opts = {});

bool dominates(const KLSurface& beta, const TabulatedMonotone& alpha1,
               const TabulatedMonotone& alpha2, double* worst_r = nullptr,
               double* worst_t = nullptr, double* worst_excess = nullptr);

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KLFromAlphaOptions {
  double floor = 1e-12;
  double max_step = 1e-3;
};

KLSurface kl_from_alpha(const TabulatedMonotone& alpha, std::vector<double> r_grid,
                        std::vector<double> t_grid, const KLFromAlphaOptions& opts = {});

std::vector<double> linspace(double a, double b, std::size_t n);

}  // namespace lyap
