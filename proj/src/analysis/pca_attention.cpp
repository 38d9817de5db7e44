#include <cmath>

#include "fpt/analysis/analysis.hpp"

namespace fpt::analysis {

namespace {

void check_shapes(const Matrix& x, const Matrix& a) {
  require(x.rows() >= 1 && x.cols() >= 1, ErrorKind::ShapeError, "X must be non-empty");
  require(a.rows() == x.cols() && a.cols() == x.cols(), ErrorKind::ShapeError,
          "A must be " + std::to_string(x.cols()) + "x" + std::to_string(x.cols()));
}

}  // namespace

double attention_objective(const Matrix& x, const Matrix& a) {
  check_shapes(x, a);
  const Matrix xc = center_columns(x);
  const Matrix sa = matmul(gram(xc), a);
  double total = 0.0;
  for (std::size_t i = 0; i < xc.rows(); ++i)
    for (std::size_t r = 0; r < xc.cols(); ++r) {
      double v = xc(i, r);
      for (std::size_t k = 0; k < xc.cols(); ++k) v -= sa(r, k) * xc(i, k);
      total += v * v;
    }
  return total;
}

double attention_objective_trace(const Matrix& x, const Matrix& a) {
  check_shapes(x, a);
  const Matrix s = gram(center_columns(x));
  const Matrix m = Matrix::identity(s.rows()) - matmul(s, a);
  return trace(matmul(matmul(m, s), transpose(m)));
}

PcaAttentionSolution optimal_pca_attention(const Matrix& x, std::size_t m) {
  require(x.rows() >= 1 && x.cols() >= 1, ErrorKind::ShapeError, "X must be non-empty");
  const std::size_t d = x.cols();
  require(m >= 1 && m <= d, ErrorKind::InvalidInput, "rank m must be in [1, " + std::to_string(d) + "]");
  PcaAttentionSolution sol;
  sol.eigen = sym_eig(gram(center_columns(x)));
  const double lam_m = sol.eigen.eigenvalues[m - 1];
  require(lam_m > 1e-10, ErrorKind::RankDeficient,
          "eigenvalue " + std::to_string(m) + " of X^T X is " + std::to_string(lam_m) + "; rank below m");
  sol.a_star = Matrix(d, d);
  for (std::size_t k = 0; k < m; ++k) {
    const double w = 1.0 / sol.eigen.eigenvalues[k];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        sol.a_star(r, c) += w * sol.eigen.eigenvectors(r, k) * sol.eigen.eigenvectors(c, k);
  }
  sol.rank = m;
  sol.objective = attention_objective(x, sol.a_star);
  return sol;
}

}  // namespace fpt::analysis
