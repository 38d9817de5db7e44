#include <algorithm>
#include <cmath>
#include <limits>

#include "fpt/analysis/analysis.hpp"
#include "fpt/numerics/parallel.hpp"

namespace fpt::analysis {

ConvergenceProblem random_convergence_problem(std::size_t d, std::uint64_t seed) {
  require(d >= 1, ErrorKind::InvalidInput, "dimension must be positive");
  RandomStream rng(seed);
  ConvergenceProblem p;
  p.mu.resize(d);
  double norm = 0;
  for (auto& v : p.mu) {
    v = rng.gaussian();
    norm += v * v;
  }
  for (auto& v : p.mu) v /= std::sqrt(norm);
  const double qk = 0.3 / std::sqrt(static_cast<double>(d)), sv = 1.0 / std::sqrt(static_cast<double>(d));
  p.wq = p.wk = p.wv = Matrix(d, d);
  for (auto& v : p.wq.flat()) v = qk * rng.gaussian();
  for (auto& v : p.wk.flat()) v = qk * rng.gaussian();
  for (auto& v : p.wv.flat()) v = sv * rng.gaussian();
  return p;
}

ConvergenceResult attention_mean_convergence(const Vector& mu, double sigma, const Matrix& wq, const Matrix& wk,
                                             const Matrix& wv, std::span<const std::size_t> n_grid,
                                             std::size_t trials, std::uint64_t seed) {
  const std::size_t d = mu.size();
  require(d >= 1, ErrorKind::InvalidInput, "mu must be non-empty");
  require(wq.rows() == d && wk.rows() == d && wq.cols() == wk.cols() && wv.rows() == d, ErrorKind::ShapeError,
          "Wq, Wk, Wv must have d rows and Wq, Wk equal widths");
  require(sigma >= 0.0, ErrorKind::InvalidInput, "sigma must be >= 0");
  require(trials >= 1 && !n_grid.empty(), ErrorKind::InvalidInput, "need trials and grid points");

  const Matrix a = matmul(wq, transpose(wk));
  const double sd = sigma / std::sqrt(static_cast<double>(d)), inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Vector target(wv.cols(), 0.0);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t c = 0; c < wv.cols(); ++c) target[c] += mu[k] * wv(k, c);

  ConvergenceResult r;
  r.n.assign(n_grid.begin(), n_grid.end());
  for (std::size_t gi = 0; gi < r.n.size(); ++gi) {
    const std::size_t n = r.n[gi];
    require(n >= 1, ErrorKind::InvalidInput, "grid sizes must be positive");
    Vector err(trials);
    parallel_for(trials, [&](std::size_t t) {
      RandomStream rng(derive_seed(derive_seed(seed, gi), t));
      Matrix x(n, d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) x(i, k) = mu[k] + sd * rng.gaussian();
      Vector qa(d, 0.0);  // x_q A
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t c = 0; c < d; ++c) qa[c] += x(0, k) * a(k, c);
      Vector w(n);
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < d; ++k) s += qa[k] * x(i, k);
        w[i] = s * inv_sqrt_d;
        top = std::max(top, w[i]);
      }
      double z = 0;
      for (auto& v : w) z += (v = std::exp(v - top));
      Vector pooled(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) pooled[k] += w[i] / z * x(i, k);
      double e = 0;
      for (std::size_t c = 0; c < wv.cols(); ++c) {
        double o = 0;
        for (std::size_t k = 0; k < d; ++k) o += pooled[k] * wv(k, c);
        e = std::max(e, std::abs(o - target[c]));
      }
      err[t] = e;
    });
    double m = 0;
    for (double e : err) m += e;
    r.mean_error.push_back(m / static_cast<double>(trials));
  }

  Vector lx, ly;
  for (std::size_t i = 0; i < r.n.size(); ++i)
    if (r.mean_error[i] > 0.0) {
      lx.push_back(std::log(static_cast<double>(r.n[i])));
      ly.push_back(std::log(r.mean_error[i]));
    }
  if (lx.size() < 2) {
    r.slope = r.intercept = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(lx.size());
  my /= static_cast<double>(lx.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  r.slope = sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
  r.intercept = my - r.slope * mx;
  return r;
}

}  // namespace fpt::analysis
