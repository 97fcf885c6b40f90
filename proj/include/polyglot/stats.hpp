#pragma once

#include <vector>

#include <Eigen/Dense>

namespace polyglot {

/// Regularized incomplete beta I_x(a, b) by continued fraction (modified Lentz).
double incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// Two-sided p-value P(|T| >= |t|).
double student_t_two_sided_p(double t, double df);

struct EigenDecomposition {
  /// Descending.
  Eigen::VectorXd values;
  /// Column i is the unit eigenvector for values[i].
  Eigen::MatrixXd vectors;
};

/// Cyclic Jacobi rotations on a symmetric matrix. Converges to off-diagonal
/// mass below 1e-15 of the Frobenius norm, or throws DegenerateError.
EigenDecomposition jacobi_eigen(const Eigen::MatrixXd& symmetric);

/// Fractional ranks (1-based; ties share the mean of their positions).
std::vector<double> average_ranks(const std::vector<double>& values);

double median(std::vector<double> values);

}  // namespace polyglot
