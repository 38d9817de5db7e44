#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "fpt/numerics/matrix.hpp"
#include "fpt/numerics/rng.hpp"

namespace fpt::oracle {

/// Mean cosine similarity over i < j by a plain double loop; zero-norm pairs count 0.
inline double mean_pair_cosine(const Matrix& h) {
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = i + 1; j < h.rows(); ++j) {
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t k = 0; k < h.cols(); ++k) {
        dot += h(i, k) * h(j, k);
        ni += h(i, k) * h(i, k);
        nj += h(j, k) * h(j, k);
      }
      sum += (ni > 0 && nj > 0) ? dot / std::sqrt(ni * nj) : 0.0;
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

/// Columns of a (rows x cols) gaussian matrix, centered and orthonormalized
/// by modified Gram-Schmidt. Requires rows > cols.
inline Matrix centered_orthonormal(std::size_t rows, std::size_t cols, RandomStream& rng) {
  Matrix q(rows, cols);
  for (auto& v : q.flat()) v = rng.gaussian();
  for (std::size_t c = 0; c < cols; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < rows; ++r) mean += q(r, c);
    mean /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) q(r, c) -= mean;
  }
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0;
      for (std::size_t r = 0; r < rows; ++r) dot += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < rows; ++r) q(r, c) -= dot * q(r, p);
    }
    double n = 0;
    for (std::size_t r = 0; r < rows; ++r) n += q(r, c) * q(r, c);
    n = std::sqrt(n);
    for (std::size_t r = 0; r < rows; ++r) q(r, c) /= n;
  }
  return q;
}

/// Centered X (n x d) with X^T X = R diag(lambda) R^T for a random rotation R,
/// so the spectrum is known in advance.
inline Matrix x_with_spectrum(std::size_t n, const std::vector<double>& lambda, RandomStream& rng) {
  const std::size_t d = lambda.size();
  const Matrix q = centered_orthonormal(n, d, rng);
  // random rotation: Gram-Schmidt on a square gaussian
  Matrix rot(d, d);
  for (auto& v : rot.flat()) v = rng.gaussian();
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0;
      for (std::size_t r = 0; r < d; ++r) dot += rot(r, c) * rot(r, p);
      for (std::size_t r = 0; r < d; ++r) rot(r, c) -= dot * rot(r, p);
    }
    double nn = 0;
    for (std::size_t r = 0; r < d; ++r) nn += rot(r, c) * rot(r, c);
    for (std::size_t r = 0; r < d; ++r) rot(r, c) /= std::sqrt(nn);
  }
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0;
      for (std::size_t k = 0; k < d; ++k) v += q(i, k) * std::sqrt(lambda[k]) * rot(c, k);
      x(i, c) = v;
    }
  return x;
}

/// sum_i |x_i - S A x_i|^2 for already centered X, S = X^T X, by loops.
inline double pca_objective(const Matrix& x, const Matrix& a) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix s(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) s(r, c) += x(i, r) * x(i, c);
  double total = 0;
  std::vector<double> ax(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      ax[r] = 0;
      for (std::size_t c = 0; c < d; ++c) ax[r] += a(r, c) * x(i, c);
    }
    for (std::size_t r = 0; r < d; ++r) {
      double v = x(i, r);
      for (std::size_t c = 0; c < d; ++c) v -= s(r, c) * ax[c];
      total += v * v;
    }
  }
  return total;
}

/// Brute-force rank-m minimizer of pca_objective over A = U V^T: gradient
/// descent with Armijo backtracking, `restarts` random starts of `steps`
/// steps each. Returns the best objective found. X must be centered.
inline double brute_force_rank_m(const Matrix& x, std::size_t m, std::uint64_t seed, std::size_t restarts = 10,
                                 std::size_t steps = 5000) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix s(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) s(r, c) += x(i, r) * x(i, c);
  double tr = 0;
  for (std::size_t k = 0; k < d; ++k) tr += s(k, k);
  const double init = 1.0 / std::sqrt(std::max(tr, 1e-12));

  auto compose = [&](const Matrix& u, const Matrix& v) {
    Matrix a(d, d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t k = 0; k < m; ++k) a(r, c) += u(r, k) * v(c, k);
    return a;
  };
  // dF/dA = -2 S E^T X with E_i = x_i - S A x_i stacked as rows
  auto grad_a = [&](const Matrix& a) {
    Matrix e(n, d);
    std::vector<double> ax(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < d; ++r) {
        ax[r] = 0;
        for (std::size_t c = 0; c < d; ++c) ax[r] += a(r, c) * x(i, c);
      }
      for (std::size_t r = 0; r < d; ++r) {
        double v = x(i, r);
        for (std::size_t c = 0; c < d; ++c) v -= s(r, c) * ax[c];
        e(i, r) = v;
      }
    }
    Matrix etx(d, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) etx(r, c) += e(i, r) * x(i, c);
    Matrix g(d, d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t k = 0; k < d; ++k) g(r, c) -= 2.0 * s(r, k) * etx(k, c);
    return g;
  };

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t rs = 0; rs < restarts; ++rs) {
    RandomStream rng(derive_seed(seed, rs));
    Matrix u(d, m), v(d, m);
    for (auto& w : u.flat()) w = init * rng.gaussian();
    for (auto& w : v.flat()) w = init * rng.gaussian();
    double f = pca_objective(x, compose(u, v));
    double step = 1.0 / std::max(tr * tr, 1e-12);
    for (std::size_t it = 0; it < steps; ++it) {
      const Matrix ga = grad_a(compose(u, v));
      Matrix gu(d, m), gv(d, m);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t c = 0; c < d; ++c) {
            gu(r, k) += ga(r, c) * v(c, k);
            gv(r, k) += ga(c, r) * u(c, k);
          }
      double g2 = 0;
      for (double w : gu.flat()) g2 += w * w;
      for (double w : gv.flat()) g2 += w * w;
      if (g2 == 0.0) break;
      step *= 2.0;
      for (int bt = 0; bt < 60; ++bt) {
        Matrix un = u, vn = v;
        for (std::size_t k = 0; k < u.size(); ++k) {
          un.flat()[k] -= step * gu.flat()[k];
          vn.flat()[k] -= step * gv.flat()[k];
        }
        const double fn = pca_objective(x, compose(un, vn));
        if (fn <= f - 1e-4 * step * g2) {
          u = std::move(un);
          v = std::move(vn);
          f = fn;
          break;
        }
        step *= 0.5;
      }
    }
    best = std::min(best, f);
  }
  return best;
}

/// Analytic Jacobian of vec(softmax(X A X^T) X) by the chain rule:
/// d f_i / d x_k = P_ik I + sum_j x_j (d P_ij / d x_k)^T,
/// d P_ij / d x_k = P_ij (d s_ij/d x_k - sum_l P_il d s_il/d x_k),
/// d s_il / d x_k = [i==k] A x_l + [l==k] A^T x_i.
inline Matrix attention_jacobian_analytic(const Matrix& x, const Matrix& a) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) s += x(i, r) * a(r, c) * x(j, c);
      p(i, j) = s;
      top = std::max(top, s);
    }
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (p(i, j) = std::exp(p(i, j) - top));
    for (std::size_t j = 0; j < n; ++j) p(i, j) /= z;
  }
  // ds[i][l][k] as a d-vector: derivative of s_il w.r.t. x_k
  auto ds = [&](std::size_t i, std::size_t l, std::size_t k) {
    std::vector<double> g(d, 0.0);
    if (i == k)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) g[r] += a(r, c) * x(l, c);
    if (l == k)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) g[r] += a(c, r) * x(i, c);
    return g;
  };
  Matrix j(n * d, n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> mean_ds(d, 0.0);
      for (std::size_t l = 0; l < n; ++l) {
        const auto g = ds(i, l, k);
        for (std::size_t r = 0; r < d; ++r) mean_ds[r] += p(i, l) * g[r];
      }
      for (std::size_t jj = 0; jj < n; ++jj) {
        auto g = ds(i, jj, k);
        for (std::size_t r = 0; r < d; ++r) g[r] = p(i, jj) * (g[r] - mean_ds[r]);
        for (std::size_t out = 0; out < d; ++out)
          for (std::size_t in = 0; in < d; ++in) j(i * d + out, k * d + in) += x(jj, out) * g[in];
      }
      for (std::size_t r = 0; r < d; ++r) j(i * d + r, k * d + r) += p(i, k);
    }
  return j;
}

}  // namespace fpt::oracle
