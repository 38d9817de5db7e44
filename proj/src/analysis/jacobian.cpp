#include <algorithm>
#include <cmath>

#include "fpt/analysis/analysis.hpp"
#include "fpt/numerics/parallel.hpp"

namespace fpt::analysis {

namespace {

Matrix attention_probs(const Matrix& x, const Matrix& a) {
  return softmax_rows(matmul(matmul(x, a), transpose(x)));
}

Matrix attend(const Matrix& x, const Matrix& a) { return matmul(attention_probs(x, a), x); }

double sq_dist(std::span<const double> u, std::span<const double> v) {
  double s = 0;
  for (std::size_t k = 0; k < u.size(); ++k) s += (u[k] - v[k]) * (u[k] - v[k]);
  return s;
}

}  // namespace

Matrix attention_jacobian(const Matrix& x, const Matrix& a, double h) {
  require(a.rows() == x.cols() && a.cols() == x.cols(), ErrorKind::ShapeError, "A must be D x D");
  const std::size_t n = x.size();
  require(n <= kJacobianMaxEntries, ErrorKind::InvalidInput,
          "N*D = " + std::to_string(n) + " exceeds " + std::to_string(kJacobianMaxEntries));
  Matrix j(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    Matrix xp = x, xm = x;
    xp.flat()[c] += h;
    xm.flat()[c] -= h;
    const Matrix fp = attend(xp, a), fm = attend(xm, a);
    for (std::size_t r = 0; r < n; ++r) j(r, c) = (fp.flat()[r] - fm.flat()[r]) / (2.0 * h);
  }
  return j;
}

JacobianCheck jacobian_bound_check(const Matrix& x, const Matrix& a) {
  JacobianCheck out;
  out.lhs = spectral_norm(attention_jacobian(x, a));
  const Matrix p = attention_probs(x, a);
  const Matrix centers = matmul(p, x);  // row i: sum_j P_ij x_j
  const double an = spectral_norm(a);
  const std::size_t n = x.rows();
  double b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    b += an * (p(i, i) + 0.5) * sq_dist(x.row(i), centers.row(i));
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) b += an * p(i, j) * sq_dist(x.row(j), centers.row(i));
    double xi = 0;
    for (double v : x.row(i)) xi += v * v;
    b += 0.5 * an * xi;
  }
  out.rhs_without_n = b;
  out.rhs = static_cast<double>(n) + b;
  out.holds = out.lhs <= out.rhs * (1.0 + kJacobianSlack);
  return out;
}

std::size_t JacobianAudit::holds() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const auto& c) { return c.holds; }));
}

JacobianAudit jacobian_audit(std::size_t n_tokens, std::size_t dim, std::size_t trials, std::uint64_t seed,
                             double a_norm_max) {
  require(n_tokens >= 1 && dim >= 1, ErrorKind::InvalidInput, "N and D must be positive");
  require(n_tokens * dim <= kJacobianMaxEntries, ErrorKind::InvalidInput,
          "N*D = " + std::to_string(n_tokens * dim) + " exceeds " + std::to_string(kJacobianMaxEntries));
  JacobianAudit audit{n_tokens, dim, std::vector<JacobianCheck>(trials)};
  parallel_for(trials, [&](std::size_t t) {
    RandomStream rng(derive_seed(seed, t));
    const double scale = rng.uniform(0.1, 3.0);
    Matrix x(n_tokens, dim), a(dim, dim);
    for (auto& v : x.flat()) v = scale * rng.gaussian();
    for (auto& v : a.flat()) v = rng.gaussian();
    const double norm = spectral_norm(a);
    const double target = rng.uniform(0.0, a_norm_max);
    if (norm > 0.0)
      for (auto& v : a.flat()) v *= target / norm;
    audit.checks[t] = jacobian_bound_check(x, a);
  });
  return audit;
}

}  // namespace fpt::analysis
