#include "lyap/models.hpp"

#include "lyap/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>
#include <unordered_map>

namespace lyap {

namespace {

constexpr double kTwoOverPi = 2.0 / M_PI;

Vec vec1(double v) {
  Vec out(1);
  out(0) = v;
  return out;
}

}  // namespace

ScalarVariant parse_scalar_variant(std::string_view tag) {
  if (tag == "i") return ScalarVariant::I;
  if (tag == "ii") return ScalarVariant::II;
  if (tag == "iii") return ScalarVariant::III;
  if (tag == "iv") return ScalarVariant::IV;
  throw std::invalid_argument("unknown scalar variant: " + std::string(tag));
}

std::string_view to_string(ScalarVariant v) {
  switch (v) {
    case ScalarVariant::I: return "i";
    case ScalarVariant::II: return "ii";
    case ScalarVariant::III: return "iii";
    case ScalarVariant::IV: return "iv";
  }
  return "?";
}

SystemModel build_scalar_example(ScalarVariant variant) {
  SystemModel::Spec s;
  s.name = "scalar_" + std::string(to_string(variant));
  s.dim = 1;
  s.disturbances = DisturbanceSet::real();
  s.descriptor = {{"model", "scalar"}, {"variant", std::string(to_string(variant))}};
  switch (variant) {
    case ScalarVariant::I:
      s.rhs = [](const Vec& x, double d) {
        double v = x(0);
        return vec1(std::abs(d) * (v - v * v * v));
      };
      s.lipschitz_hint = [](double m, double r) { return m * std::max(1.0, 3.0 * r * r); };
      s.rate_hint = [](double m, double r) {
        double reach = std::max(r, 1.0);
        return m * (1.0 + 3.0 * reach * reach);
      };
      break;
    case ScalarVariant::II:
      s.rhs = [](const Vec& x, double d) { return vec1(d * x(0)); };
      s.lipschitz_hint = [](double m, double) { return m; };
      s.rate_hint = [](double m, double) { return m; };
      s.linear = true;
      break;
    case ScalarVariant::III:
      s.rhs = [](const Vec& x, double d) {
        double v = x(0);
        return vec1(v / (std::abs(d) + 1.0) + d * std::max(std::abs(v) - 1.0, 0.0));
      };
      s.lipschitz_hint = [](double m, double r) { return r <= 1.0 ? 1.0 : 1.0 + m; };
      s.rate_hint = [](double m, double r) { return r <= 1.0 ? 1.0 : 1.0 + m; };
      break;
    case ScalarVariant::IV:
      s.rhs = [](const Vec& x, double d) { return vec1(x(0) / (std::abs(d) + 1.0)); };
      s.lipschitz_hint = [](double, double) { return 1.0; };
      s.rate_hint = [](double, double) { return 1.0; };
      s.linear = true;
      break;
  }
  return SystemModel(std::move(s));
}

double signed_cbrt(double x) { return std::cbrt(x); }

SystemModel build_ugatt_example() {
  SystemModel::Spec s;
  s.name = "ugatt";
  s.dim = 2;
  s.disturbances = DisturbanceSet::real();
  s.descriptor = {{"model", "ugatt"}};
  s.rhs = [](const Vec& z, double d) {
    double x = z(0), y = z(1);
    Vec out(2);
    out(0) = d * x * y - x * x * x - signed_cbrt(x);
    out(1) = -y * y * y - signed_cbrt(y);
    return out;
  };
  // |x| stays below max(|x0|, sqrt(|d| |y|)); the cube-root term is ignored.
  s.rate_hint = [](double m, double r) { return m * r + 3.0 * std::max(r * r, m * r) + 1.0; };
  // The Jacobian is upper triangular; its diagonal sets the stiffness.
  s.local_rate = [](const Vec& z, double d) {
    double x = z(0), y = z(1);
    return 1.25 * (std::abs(d * y) + 3.0 * (x * x + y * y)) + 1.0;
  };
  return SystemModel(std::move(s));
}

double ugatt_y_hitting_time(double y0) {
  // Substituting y = u^3 turns dy / (y^3 + y^{1/3}) into 3u / (u^8 + 1) du.
  double y = std::abs(y0);
  if (y == 0.0) return 0.0;
  if (std::isinf(y)) return 1.5 * M_PI / (2.0 * std::sqrt(2.0));
  auto simpson = [](auto f, double upper) {
    const int n = 20000;
    double h = upper / n, acc = f(0.0) + f(upper);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return acc * h / 3.0;
  };
  double upper = std::cbrt(y);
  if (upper <= 1.0) return simpson([](double u) { return 3.0 * u / (std::pow(u, 8) + 1.0); }, upper);
  // Beyond u = 1 integrate the tail in w = 1/u.
  double tail = simpson([](double w) { return 3.0 * std::pow(w, 5) / (std::pow(w, 8) + 1.0); }, 1.0 / upper);
  return ugatt_y_hitting_time(INFINITY) - tail;
}

namespace {

double smooth_step(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  double a = std::exp(-1.0 / u), b = std::exp(-1.0 / (1.0 - u));
  return a / (a + b);
}

double smooth_step_deriv(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  double s = smooth_step(u);
  return s * (1.0 - s) * (1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u)));
}

double log_cosh(double x) {
  double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

struct BlowupParts {
  double c;

  double eta(double x) const { return smooth_step(-c - x); }
  double deta(double x) const { return -smooth_step_deriv(-c - x); }

  // x1 = psi^{-1}(z1) and psi'(x1) for z1 > -1, through u = 1 + z1.
  static double chi(double u) {
    if (u >= 1.0) return u - 1.0;
    return u - 1.0 - std::exp(1.0 / u - 1.0 / (1.0 - u));
  }
  static double dpsi(double u) {
    if (u >= 1.0) return 1.0;
    double b = std::exp(1.0 / u - 1.0 / (1.0 - u));
    return 1.0 / (1.0 + b * (1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u))));
  }

  Vec field(const Vec& z) const {
    Vec out(2);
    double z1 = z(0), z2 = z(1);
    if (z1 <= -1.0) {
      out << 0.0, -1.0 - 0.5 * std::tanh(z2);
      return out;
    }
    double u = 1.0 + z1, x1 = chi(u);
    out << dpsi(u) * (-2.0 * std::tanh(x1) - std::tanh(z2)), std::tanh(x1) - 0.5 * std::tanh(z2);
    return out;
  }

  double v(const Vec& z) const {
    double z1 = z(0), z2 = z(1);
    if (z1 <= -1.0) return 2.0 + kTwoOverPi * std::atan(z2);
    double x1 = chi(1.0 + z1);
    double v1 = log_cosh(x1) + log_cosh(z2);
    return kTwoOverPi * std::atan(v1) + eta(x1) * (1.0 + kTwoOverPi * std::atan(z2));
  }

  double vdot(const Vec& z) const {
    double z1 = z(0), z2 = z(1);
    if (z1 <= -1.0) return kTwoOverPi / (1.0 + z2 * z2) * (-1.0 - 0.5 * std::tanh(z2));
    double x1 = chi(1.0 + z1);
    double t1 = std::tanh(x1), t2 = std::tanh(z2);
    double f1 = -2.0 * t1 - t2, f2 = t1 - 0.5 * t2;
    double v1 = log_cosh(x1) + log_cosh(z2);
    double v1dot = -2.0 * t1 * t1 - 0.5 * t2 * t2;
    double v2dot = kTwoOverPi / (1.0 + v1 * v1) * v1dot;
    double wdot = deta(x1) * (1.0 + kTwoOverPi * std::atan(z2)) * f1 +
                  eta(x1) * kTwoOverPi / (1.0 + z2 * z2) * f2;
    return v2dot + wdot;
  }

  // Smooth max of 1 and |z| / |Vdot|, blended in over 1 <= |z| <= 2.
  double h_outer(const Vec& z) const {
    double a = z.norm() / std::abs(vdot(z)), e = a - 1.0;
    return 0.5 * (1.0 + a + std::sqrt(e * e + 1e-2));
  }

  double h(const Vec& z) const {
    double r = z.norm();
    if (r <= 1.0) return 1.0;
    return 1.0 + smooth_step(r - 1.0) * (h_outer(z) - 1.0);
  }
};

double blowup_psi2(double r) {
  // |x1| <= r + exp(1/(1-r) - 1/r) on the r-ball, log cosh(s) <= s^2/2, V <= 3.
  double q = r + std::exp(1.0 / (1.0 - r) - 1.0 / r);
  double core = r < 1.0 ? std::min(3.0, (q * q + r * r) / M_PI) : 3.0;
  return core + (1.0 - std::exp(-r));
}

}  // namespace

BlowupExample build_blowup_example(double c) {
  if (!(c > 0) || !std::isfinite(c)) throw std::invalid_argument("c must be positive");
  // eps1(-c) < -1 and delta(-c) < -sup|eps2| = -1/2.
  if (!(2.0 * std::tanh(-c) < -1.0) || !(std::tanh(-c) < -0.5))
    throw std::invalid_argument("c too small for the blow-up construction");
  auto parts = std::make_shared<BlowupParts>(BlowupParts{c});

  SystemModel::Spec s;
  s.name = "blowup";
  s.dim = 2;
  s.disturbances = DisturbanceSet::none();
  s.descriptor = {{"model", "blowup"},
                  {"c", c},
                  {"delta", "tanh"},
                  {"eps1", "2*tanh"},
                  {"eps2", "0.5*tanh"},
                  {"psi", "inverse of chi(u) = u-1-exp(1/u-1/(1-u)) on (0,1), u-1 on [1,inf); u = 1+z1"},
                  {"h", "1 on |z|<=1; 1+S(|z|-1)(smax(1,|z|/|Vdot|)-1); smax(a,b)=(a+b+sqrt((a-b)^2+0.01))/2"},
                  {"rho", "(2/pi)*atan"},
                  {"eta", "smooth step S(-c-x)"},
                  {"W", "eta(x1)*(1+(2/pi)*atan(x2))"}};
  s.rhs = [parts](const Vec& z, double) -> Vec { return parts->h(z) * parts->field(z); };

  LyapunovCandidate v;
  v.name = "blowup_V";
  v.eval = [parts](const Vec& z) { return parts->v(z); };
  v.psi2 = ScalarFn(blowup_psi2);

  BlowupExample ex{SystemModel(std::move(s)), std::move(v), c, nullptr, nullptr, nullptr};
  ex.vdot_base = [parts](const Vec& z) { return parts->vdot(z); };
  ex.time_scale = [parts](const Vec& z) { return parts->h(z); };
  ex.base_field = [parts](const Vec& z) { return parts->field(z); };
  return ex;
}

namespace {

struct BlockCache {
  std::mutex mu;
  std::map<int, ExtendedLyapunovSolution> solved;
};

BlockCache& block_cache() {
  static BlockCache cache;
  return cache;
}

Mat bidiagonal(int i, double diag) {
  Mat a = Mat::Zero(i, i);
  for (int k = 0; k < i; ++k) {
    a(k, k) = diag;
    if (k + 1 < i) a(k, k + 1) = 1.0;
  }
  return a;
}

}  // namespace

BlockOperatorModel build_l2_block_model(int n, double epsilon) {
  if (n < 1) throw std::invalid_argument("need at least one block");
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("epsilon must be in [0, 0.5)");
  BlockOperatorModel m;
  m.n_blocks = n;
  m.epsilon = epsilon;
  auto& cache = block_cache();
  for (int i = 1; i <= n; ++i) {
    m.offsets.push_back(m.dim);
    m.dim += i;
    m.blocks.push_back(bidiagonal(i, -1.0 + epsilon));
    std::lock_guard<std::mutex> lock(cache.mu);
    auto it = cache.solved.find(i);
    if (it == cache.solved.end())
      it = cache.solved.emplace(i, solve_shifted_lyapunov_extended(bidiagonal(i, -1.0), 0.5)).first;
    const auto& sol = it->second;
    if (!sol.decay_certified) throw std::runtime_error("Lyapunov block failed the decay check");
    m.lyapunov_blocks.push_back(sol.p);
    m.p_eigenvalues.push_back(sol.eigenvalues);
    m.p_eigenvectors.push_back(sol.eigenvectors);
    m.lambda_min.push_back(sol.eigenvalues(0));
    m.decay_certified.push_back(sol.decay_certified);
  }
  return m;
}

Vec BlockOperatorModel::block_exp_apply(int i, double t, const Vec& xi) const {
  // e^{A_i t} = e^{(eps-1)t} sum_k t^k/k! N^k with N the upper shift.
  Vec acc = xi;
  Vec term = xi;
  for (int k = 1; k < i; ++k) {
    Vec shifted = Vec::Zero(i);
    shifted.head(i - 1) = term.tail(i - 1);
    term = shifted * (t / k);
    acc += term;
  }
  return std::exp((epsilon - 1.0) * t) * acc;
}

double BlockOperatorModel::v(const Vec& x) const {
  double acc = 0.0;
  for (int i = 1; i <= n_blocks; ++i) {
    auto xi = x.segment(offsets[i - 1], i);
    Vec proj = p_eigenvectors[i - 1].transpose() * xi;
    acc += (p_eigenvalues[i - 1].array() * proj.array().square()).sum();
  }
  return acc;
}

SystemModel BlockOperatorModel::system() const {
  auto self = std::make_shared<BlockOperatorModel>(*this);
  SystemModel::Spec s;
  s.name = "l2_block";
  s.dim = dim;
  s.disturbances = DisturbanceSet::none();
  s.linear = true;
  s.descriptor = {{"model", "l2_block"}, {"n", n_blocks}, {"epsilon", epsilon}};
  s.rhs = [self](const Vec& x, double) -> Vec {
    Vec out(x.size());
    for (int i = 1; i <= self->n_blocks; ++i)
      out.segment(self->offsets[i - 1], i) =
          self->blocks[i - 1] * x.segment(self->offsets[i - 1], i);
    return out;
  };
  s.propagator = [self](double, double tau, const Vec& x) {
    Vec out(x.size());
    for (int i = 1; i <= self->n_blocks; ++i)
      out.segment(self->offsets[i - 1], i) =
          self->block_exp_apply(i, tau, x.segment(self->offsets[i - 1], i));
    return out;
  };
  return SystemModel(std::move(s));
}

LyapunovCandidate BlockOperatorModel::candidate() const {
  auto self = std::make_shared<BlockOperatorModel>(*this);
  LyapunovCandidate c;
  c.name = "l2_block_V";
  c.eval = [self](const Vec& x) { return self->v(x); };
  c.psi2 = ScalarFn([](double r) { return r * r; });
  return c;
}

Vec BlockOperatorModel::witness_direction(int i) const {
  if (i < 1 || i > n_blocks) throw std::out_of_range("block index out of range");
  Vec x = Vec::Zero(dim);
  Vec q = p_eigenvectors[static_cast<std::size_t>(i - 1)].col(0);
  x.segment(offsets[static_cast<std::size_t>(i - 1)], i) = q / q.norm();
  return x;
}

Vec BlockOperatorModel::growth_direction(double t) const {
  Mat e = expm(blocks.back() * t);
  Eigen::JacobiSVD<Mat> svd(e, Eigen::ComputeFullV);
  Vec x = Vec::Zero(dim);
  x.segment(offsets.back(), n_blocks) = svd.matrixV().col(0);
  return x;
}

namespace {

int mode_index(double d, std::size_t count) {
  double r = std::round(d);
  if (r != d || r < 0 || r >= static_cast<double>(count))
    throw std::invalid_argument("disturbance value is not a valid mode index");
  return static_cast<int>(r);
}

struct ExpCache {
  std::mutex mu;
  std::unordered_map<std::uint64_t, Mat> table;
};

}  // namespace

SwitchedLinearModel build_switched_linear(std::vector<Mat> modes) {
  if (modes.empty()) throw std::invalid_argument("need at least one mode");
  const auto n = modes[0].rows();
  for (const auto& a : modes)
    if (a.rows() != n || a.cols() != n)
      throw std::invalid_argument("modes must be square of equal dimension");
  return SwitchedLinearModel{std::move(modes), static_cast<int>(n)};
}

Mat SwitchedLinearModel::evolve(const DisturbanceSignal& d, double t, double s) const {
  if (!(t >= s)) throw std::invalid_argument("evolve needs t >= s");
  Mat phi = Mat::Identity(dim, dim);
  double cur = s;
  while (cur < t) {
    double next = std::min(t, d.next_breakpoint_after(cur));
    int q = mode_index(d(cur), modes.size());
    phi = expm(modes[static_cast<std::size_t>(q)] * (next - cur)) * phi;
    cur = next;
  }
  return phi;
}

SystemModel SwitchedLinearModel::system() const {
  auto modes_copy = std::make_shared<std::vector<Mat>>(modes);
  auto cache = std::make_shared<ExpCache>();
  SystemModel::Spec s;
  s.name = "switched";
  s.dim = dim;
  std::vector<double> idx;
  for (std::size_t q = 0; q < modes.size(); ++q) idx.push_back(static_cast<double>(q));
  s.disturbances = DisturbanceSet::finite(idx);
  s.linear = true;
  nlohmann::json jm = nlohmann::json::array();
  for (const auto& a : modes) jm.push_back(matrix_to_json(a));
  s.descriptor = {{"model", "switched"}, {"modes", jm}};
  s.rhs = [modes_copy](const Vec& x, double d) -> Vec {
    return (*modes_copy)[static_cast<std::size_t>(mode_index(d, modes_copy->size()))] * x;
  };
  s.propagator = [modes_copy, cache](double d, double tau, const Vec& x) -> Vec {
    int q = mode_index(d, modes_copy->size());
    std::uint64_t bits;
    std::memcpy(&bits, &tau, sizeof bits);
    std::uint64_t key = splitmix64(bits) ^ static_cast<std::uint64_t>(q);
    std::lock_guard<std::mutex> lock(cache->mu);
    auto it = cache->table.find(key);
    if (it == cache->table.end()) {
      if (cache->table.size() > 4096) cache->table.clear();
      it = cache->table.emplace(key, expm((*modes_copy)[static_cast<std::size_t>(q)] * tau)).first;
    }
    return it->second * x;
  };
  return SystemModel(std::move(s));
}

SystemModel build_linear_ode(const Mat& a, std::string name) {
  if (a.rows() != a.cols() || a.rows() == 0) throw std::invalid_argument("need a square matrix");
  double nrm = spectral_norm(a);
  SystemModel::Spec s;
  s.name = std::move(name);
  s.dim = static_cast<int>(a.rows());
  s.disturbances = DisturbanceSet::none();
  s.linear = true;
  s.descriptor = {{"model", "linear"}, {"A", matrix_to_json(a)}};
  s.rhs = [a](const Vec& x, double) -> Vec { return a * x; };
  s.lipschitz_hint = [nrm](double, double) { return nrm; };
  s.rate_hint = [nrm](double, double) { return nrm; };
  return SystemModel(std::move(s));
}

SystemModel build_ode(std::string name, int dim, SystemModel::Rhs rhs, DisturbanceSet set,
                      bool equilibrium_at_zero) {
  SystemModel::Spec s;
  s.name = name;
  s.dim = dim;
  s.rhs = std::move(rhs);
  s.disturbances = std::move(set);
  s.equilibrium_at_zero = equilibrium_at_zero;
  s.descriptor = {{"model", "ode"}, {"name", name}};
  return SystemModel(std::move(s));
}

nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

Mat matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument("ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

SystemModel build_model_from_descriptor(const nlohmann::json& desc) {
  if (!desc.is_object() || !desc.contains("model"))
    throw std::invalid_argument("model descriptor needs a \"model\" field");
  std::string kind = desc.at("model").get<std::string>();
  if (kind == "scalar")
    return build_scalar_example(parse_scalar_variant(desc.at("variant").get<std::string>()));
  if (kind == "ugatt") return build_ugatt_example();
  if (kind == "blowup") return build_blowup_example(desc.value("c", 3.0)).model;
  if (kind == "l2_block")
    return build_l2_block_model(desc.value("n", 20), desc.value("epsilon", 0.0)).system();
  if (kind == "switched") {
    std::vector<Mat> modes;
    for (const auto& m : desc.at("modes")) modes.push_back(matrix_from_json(m));
    return build_switched_linear(std::move(modes)).system();
  }
  if (kind == "linear") return build_linear_ode(matrix_from_json(desc.at("A")));
  throw std::invalid_argument("unknown model kind: " + kind);
}

std::vector<ZooEntry> model_zoo() {
  std::vector<ZooEntry> zoo;
  for (auto v : {ScalarVariant::I, ScalarVariant::II, ScalarVariant::III, ScalarVariant::IV}) {
    auto m = build_scalar_example(v);
    zoo.push_back({m.name(), m, false, 1.0});
  }
  zoo.back().linear = true;  // x/(|d|+1) is linear in x
  zoo[1].linear = true;      // d x
  zoo.push_back({"ugatt", build_ugatt_example(), false, 1.0});
  zoo.push_back({"blowup", build_blowup_example().model, false, 1.0});
  zoo.push_back({"l2_block_eps0", build_l2_block_model(6, 0.0).system(), true, 1.0});
  zoo.push_back({"l2_block_eps025", build_l2_block_model(6, 0.25).system(), true, 1.0});
  Mat a0(2, 2), a1(2, 2);
  a0 << -1.0, 1.0, -1.0, -1.0;
  a1 << -2.0, 0.5, -0.5, -1.0;
  zoo.push_back({"switched_hurwitz", build_switched_linear({a0, a1}).system(), true, 1.0});
  zoo.push_back({"linear_decay", build_linear_ode(-Mat::Identity(1, 1), "linear_decay"), true, 1.0});
  return zoo;
}

}  // namespace lyap
