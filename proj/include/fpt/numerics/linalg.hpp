#pragma once

#include <functional>
#include <span>

#include "fpt/numerics/matrix.hpp"

namespace fpt {

struct EigenDecomposition {
  Vector eigenvalues;  // descending
  Matrix eigenvectors;  // column k pairs with eigenvalues[k]
};

// Basic dense helpers (double precision).
Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
double frobenius_norm(const Matrix& m);
double trace(const Matrix& m);
/// X^T X, the D x D Gram matrix of the rows of X.
Matrix gram(const Matrix& x);
/// Subtract the column means.
Matrix center_columns(const Matrix& x);

/// Row-wise softmax with max subtraction. Throws InvalidInput on non-finite entries.
Matrix softmax_rows(const Matrix& m);

/// gamma * (v - mean) / sqrt(var + eps) + beta, population variance.
Vector layer_norm(std::span<const double> v, std::span<const double> gamma, std::span<const double> beta,
                  double eps);

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps until the off-diagonal Frobenius norm drops below 1e-12 (relative to
/// the input's Frobenius norm when that exceeds 1) or 100 sweeps elapse, in
/// which case NumericalFailure is raised. Eigenvalues are returned in
/// descending order; each eigenvector's largest-magnitude component is made
/// positive (first index wins ties).
EigenDecomposition sym_eig(const Matrix& s);

/// Largest singular value, sqrt(lambda_max(m^T m)).
double spectral_norm(const Matrix& m);

/// Central-difference gradient of f at x with step h.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                        double h);

}  // namespace fpt
