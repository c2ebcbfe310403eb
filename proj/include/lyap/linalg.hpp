#pragma once

#include <Eigen/Dense>

namespace lyap {

// Matrix exponential (Padé scaling and squaring).
Eigen::MatrixXd expm(const Eigen::MatrixXd& a);

// Spectral norm via SVD.
double spectral_norm(const Eigen::MatrixXd& a);

// Result of the quad-precision solve of (A+sI)^T P + P (A+sI) = -I for upper
// triangular A, rescaled so that ||P||_2 = 1 and rounded to double.
struct ExtendedLyapunovSolution {
  Eigen::MatrixXd p;             // normalized P
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // columns, orthonormal
  double unnormalized_norm = 0.0;
  // Cholesky of -(A^T P + P A + P) succeeded in quad precision.
  bool decay_certified = false;
  // Smallest LDL^T pivot of -(A^T P + P A + P) (normalized P), quad precision.
  double decay_min_pivot = 0.0;
};

ExtendedLyapunovSolution solve_shifted_lyapunov_extended(const Eigen::MatrixXd& upper_triangular,
                                                         double shift);

// Double-precision solve of A^T P + P A = -Q by Kronecker vectorization; used
// for small problems and as a cross-check.
Eigen::MatrixXd solve_lyapunov_kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q);

}  // namespace lyap
