#pragma once

#include "lyap/lyapunov.hpp"
#include "lyap/system.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace lyap {

enum class ScalarVariant { I, II, III, IV };
ScalarVariant parse_scalar_variant(std::string_view tag);
std::string_view to_string(ScalarVariant v);

// x' = |d|(x - x^3), d x, x/(|d|+1) + d max(|x|-1, 0), x/(|d|+1); D = R.
SystemModel build_scalar_example(ScalarVariant variant);

// x' = d x y - x^3 - x^{1/3}, y' = -y^3 - y^{1/3} (signed cube roots); D = R.
SystemModel build_ugatt_example();

// Time to reach 0 of y' = -y^3 - y^{1/3} from y0 (quadrature).
double ugatt_y_hitting_time(double y0);

double signed_cbrt(double x);

struct BlowupExample {
  SystemModel model;
  LyapunovCandidate v;
  double c = 3.0;

  // Pieces of the construction, exposed for checks.
  std::function<double(const Vec&)> vdot_base;  // derivative of V along F
  std::function<double(const Vec&)> time_scale;  // h
  std::function<Vec(const Vec&)> base_field;     // F
};

// The planar field F2 = h F with the non-coercive candidate V. Pinned:
// delta = tanh, eps1 = 2 tanh, eps2 = tanh/2, rho = (2/pi) atan,
// eta(x) = S(-c - x) with S a smooth step, W = eta(x1)(1 + (2/pi) atan x2).
// psi is C-infinity: psi^{-1}(z1) = chi(1 + z1) with chi(u) = u - 1 for
// u >= 1 and u - 1 - exp(1/u - 1/(1-u)) below, so psi' is flat at z1 = -1
// and the extension of F is smooth. h is a smooth blend of the max rule.
BlowupExample build_blowup_example(double c = 3.0);

struct BlockOperatorModel {
  int n_blocks = 0;
  double epsilon = 0.0;
  std::vector<Mat> blocks;                // A_i, i = 1..n
  std::vector<Mat> lyapunov_blocks;       // P_i, ||P_i||_2 = 1
  std::vector<Vec> p_eigenvalues;         // ascending
  std::vector<Mat> p_eigenvectors;        // columns
  std::vector<double> lambda_min;         // lambda_min(P_i)
  std::vector<bool> decay_certified;      // A_i^T P_i + P_i A_i + P_i < 0 (quad precision)
  std::vector<int> offsets;               // start of block i in the state vector
  int dim = 0;

  SystemModel system() const;
  LyapunovCandidate candidate() const;
  double v(const Vec& x) const;
  // Unit vector along the lambda_min(P_i) eigendirection of block i (1-based).
  Vec witness_direction(int i) const;
  // Unit direction of largest growth of e^{A_n t} in the last block.
  Vec growth_direction(double t) const;
  Vec block_exp_apply(int i, double t, const Vec& xi) const;
};

// Blocks are cached per n; building n = 40 takes a few seconds once.
BlockOperatorModel build_l2_block_model(int n, double epsilon);

struct SwitchedLinearModel {
  std::vector<Mat> modes;
  int dim = 0;

  Mat evolve(const DisturbanceSignal& d, double t, double s) const;
  SystemModel system() const;
};

SwitchedLinearModel build_switched_linear(std::vector<Mat> modes);

// x' = A x integrated by RK4 (linear, homogeneous, no disturbance).
SystemModel build_linear_ode(const Mat& a, std::string name = "linear");

// Generic vector-field model.
SystemModel build_ode(std::string name, int dim, SystemModel::Rhs rhs, DisturbanceSet set,
                      bool equilibrium_at_zero = true);

SystemModel build_model_from_descriptor(const nlohmann::json& descriptor);

struct ZooEntry {
  std::string name;
  SystemModel model;
  bool linear = false;
  // Parameters used by suites that sweep the zoo.
  double radius = 1.0;
};

// Scalar examples (i)-(iv), the planar attractive example, the blow-up field,
// the block model (n = 6, eps = 0 and 0.25), a Hurwitz switched pair and the
// linear decay x' = -x.
std::vector<ZooEntry> model_zoo();

nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j);

}  // namespace lyap
