#include <cmath>

#include "fpt/analysis/analysis.hpp"

namespace fpt::analysis {

SgdCheck sgd_conditioning_check(const Matrix& g, const Matrix& y, double eps, std::uint64_t seed,
                                double radius_factor, std::size_t max_steps) {
  require(g.rows() >= 1 && g.cols() >= 1, ErrorKind::ShapeError, "G must be non-empty");
  require(y.rows() == g.rows() && y.cols() >= 1, ErrorKind::ShapeError, "Y must have one row per row of G");
  require(eps > 0.0 && radius_factor > 0.0, ErrorKind::InvalidInput, "eps and radius_factor must be positive");
  const std::size_t n = g.rows(), d = g.cols(), tout = y.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  const Matrix s = inv_n * gram(g);
  const auto eig = sym_eig(s);
  SgdCheck out;
  out.sigma_min = eig.eigenvalues.back();
  require(out.sigma_min > 1e-12 * std::max(1.0, eig.eigenvalues.front()), ErrorKind::RankDeficient,
          "(1/N) G^T G is singular (sigma_min " + std::to_string(out.sigma_min) + ")");

  // W* = S^-1 (1/N) G^T Y through the eigendecomposition
  const Matrix gty = inv_n * matmul(transpose(g), y);
  const Matrix& v = eig.eigenvectors;
  Matrix proj = matmul(transpose(v), gty);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t c = 0; c < tout; ++c) proj(k, c) /= eig.eigenvalues[k];
  const Matrix w_star = matmul(v, proj);
  const Matrix resid = matmul(g, w_star) - y;
  out.optimum = 0.5 * inv_n * frobenius_norm(resid) * frobenius_norm(resid);
  const double radius = radius_factor * frobenius_norm(w_star);

  Matrix w(d, tout), diff(d, tout), sd(d, tout);
  Vector r(tout);
  RandomStream rng(seed);
  double running = 0.0;
  for (std::size_t t = 1; t <= max_steps; ++t) {
    const auto i = static_cast<std::size_t>(rng.below(n));
    for (std::size_t c = 0; c < tout; ++c) {
      double acc = -y(i, c);
      for (std::size_t k = 0; k < d; ++k) acc += g(i, k) * w(k, c);
      r[c] = acc;
    }
    const double eta = 1.0 / (out.sigma_min * static_cast<double>(t));
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t c = 0; c < tout; ++c) w(k, c) -= eta * g(i, k) * r[c];
    const double norm = frobenius_norm(w);
    if (norm > radius)
      for (auto& e : w.flat()) e *= radius / norm;

    // F(W) - F(W*) = 1/2 tr(D^T S D)
    for (std::size_t k = 0; k < d * tout; ++k) diff.flat()[k] = w.flat()[k] - w_star.flat()[k];
    double gap = 0.0;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) {
        const double sab = s(a, b);
        if (sab == 0.0) continue;
        for (std::size_t c = 0; c < tout; ++c) gap += diff(a, c) * sab * diff(b, c);
      }
    running += 0.5 * gap;
    if (running / static_cast<double>(t) <= eps) {
      out.steps_taken = t;
      return out;
    }
  }
  fail(ErrorKind::NumericalFailure,
       "SGD did not reach eps=" + std::to_string(eps) + " in " + std::to_string(max_steps) + " steps");
}

std::pair<Matrix, Matrix> conditioned_design(double sigma, std::size_t n_rows, std::size_t dim) {
  require(sigma > 0.0 && dim >= 1 && n_rows >= 2 * dim && n_rows % (2 * dim) == 0, ErrorKind::InvalidInput,
          "conditioned_design needs sigma > 0 and n_rows a multiple of 2*dim");
  Matrix g(n_rows, dim), y(n_rows, 1);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const std::size_t k = i % dim;
    const double lam = k == 0 ? 1.0 : sigma;
    g(i, k) = std::sqrt(static_cast<double>(dim) * lam) * ((i / dim) % 2 ? -1.0 : 1.0);
    y(i, 0) = g(i, k);
  }
  return {g, y};
}

std::vector<SgdRateRow> sgd_rate_sweep(std::span<const double> sigmas, double eps, std::size_t repeats,
                                       std::uint64_t seed) {
  require(repeats >= 1, ErrorKind::InvalidInput, "repeats must be >= 1");
  std::vector<SgdRateRow> rows;
  for (double sigma : sigmas) {
    const auto [g, y] = conditioned_design(sigma);
    SgdRateRow row{sigma, 0.0, 0.0};
    for (std::size_t k = 0; k < repeats; ++k) {
      const auto c = sgd_conditioning_check(g, y, eps, derive_seed(seed, k));
      row.sigma_min = c.sigma_min;
      row.mean_steps += static_cast<double>(c.steps_taken);
    }
    row.mean_steps /= static_cast<double>(repeats);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace fpt::analysis
