#include "lyap/linalg.hpp"

#include <boost/multiprecision/float128.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace lyap {

Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("expm needs a square matrix");
  if (a.rows() == 0) return a;
  return a.exp();
}

double spectral_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(0);
}

namespace {

using quad = boost::multiprecision::float128;
template <class T>
using Dense = std::vector<std::vector<T>>;

// (B)^T P + P B = -I for upper triangular B, by forward substitution.
template <class T>
Dense<T> triangular_lyapunov(const Dense<T>& b) {
  const std::size_t n = b.size();
  Dense<T> p(n, std::vector<T>(n, T(0)));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      T s = j == k ? T(-1) : T(0);
      for (std::size_t l = 0; l < j; ++l) s -= b[l][j] * p[l][k];
      for (std::size_t l = 0; l < k; ++l) s -= p[j][l] * b[l][k];
      T denom = b[j][j] + b[k][k];
      if (denom == T(0)) throw std::runtime_error("singular Lyapunov operator");
      p[j][k] = s / denom;
    }
  }
  return p;
}

// Cyclic Jacobi for symmetric matrices; a is overwritten by its (almost)
// diagonal form, v receives the eigenvectors as columns.
template <class T>
void jacobi_eigen(Dense<T>& a, Dense<T>& v, T rel_tol) {
  const std::size_t n = a.size();
  v.assign(n, std::vector<T>(n, T(0)));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = T(1);
  for (int sweep = 0; sweep < 100; ++sweep) {
    T off = 0, tot = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) off += a[i][j] * a[i][j];
        tot += a[i][j] * a[i][j];
      }
    if (off <= tot * rel_tol) return;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == T(0)) continue;
        T theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        T t = (theta >= 0 ? T(1) : T(-1)) / (abs(theta) + sqrt(theta * theta + 1));
        T c = 1 / sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          T akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          T apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          T vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  throw std::runtime_error("Jacobi eigensolver did not converge");
}

// Smallest LDL^T pivot; negative or zero when the matrix is not positive definite.
template <class T>
T min_ldl_pivot(Dense<T> m) {
  const std::size_t n = m.size();
  T smallest = n ? m[0][0] : T(0);
  for (std::size_t k = 0; k < n; ++k) {
    T piv = m[k][k];
    if (k == 0 || piv < smallest) smallest = piv;
    if (!(piv > T(0))) return piv;
    for (std::size_t i = k + 1; i < n; ++i) {
      T f = m[i][k] / piv;
      for (std::size_t j = k + 1; j < n; ++j) m[i][j] -= f * m[k][j];
    }
  }
  return smallest;
}

}  // namespace

ExtendedLyapunovSolution solve_shifted_lyapunov_extended(const Eigen::MatrixXd& a, double shift) {
  const auto n = static_cast<std::size_t>(a.rows());
  if (a.rows() != a.cols() || n == 0) throw std::invalid_argument("need a square matrix");
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (a(i, j) != 0.0) throw std::invalid_argument("matrix must be upper triangular");

  Dense<quad> aq(n, std::vector<quad>(n)), b(n, std::vector<quad>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      aq[i][j] = quad(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      b[i][j] = aq[i][j] + (i == j ? quad(shift) : quad(0));
    }
  Dense<quad> p = triangular_lyapunov(b);
  Dense<quad> diag = p, vecs;
  jacobi_eigen(diag, vecs, quad(1e-64));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return diag[x][x] < diag[y][y]; });
  quad top = diag[order.back()][order.back()];
  if (!(top > quad(0))) throw std::runtime_error("Lyapunov solution is not positive definite");

  ExtendedLyapunovSolution out;
  out.unnormalized_norm = static_cast<double>(top);
  out.p.resize(a.rows(), a.cols());
  out.eigenvalues.resize(a.rows());
  out.eigenvectors.resize(a.rows(), a.cols());
  Dense<quad> pn(n, std::vector<quad>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      pn[i][j] = p[i][j] / top;
      out.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(pn[i][j]);
    }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t k = order[c];
    out.eigenvalues(static_cast<Eigen::Index>(c)) = static_cast<double>(diag[k][k] / top);
    for (std::size_t i = 0; i < n; ++i)
      out.eigenvectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          static_cast<double>(vecs[i][k]);
  }

  // -(A^T P + P A + P) for the normalized P.
  Dense<quad> m(n, std::vector<quad>(n, quad(0)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      quad s = pn[i][j];
      for (std::size_t l = 0; l < n; ++l) s += aq[l][i] * pn[l][j] + pn[i][l] * aq[l][j];
      m[i][j] = -s;
    }
  quad piv = min_ldl_pivot(m);
  out.decay_min_pivot = static_cast<double>(piv);
  out.decay_certified = piv > quad(0);
  return out;
}

Eigen::MatrixXd solve_lyapunov_kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || q.rows() != n || q.cols() != n)
    throw std::invalid_argument("Lyapunov solve needs square matrices of equal size");
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n * n, n * n);
  // vec(A^T P + P A) = (I kron A^T + A^T kron I) vec(P)
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      k.block(i * n, j * n, n, n) += id(i, j) * a.transpose();
      k.block(i * n, j * n, n, n) += a(j, i) * id;
    }
  Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(q.data(), n * n);
  Eigen::VectorXd sol = k.fullPivLu().solve(rhs);
  Eigen::MatrixXd p = Eigen::Map<Eigen::MatrixXd>(sol.data(), n, n);
  return 0.5 * (p + p.transpose());
}

}  // namespace lyap
