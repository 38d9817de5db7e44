#include "fpt/numerics/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fpt {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::ShapeError,
          std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

void require_finite(const Matrix& m, const char* op) {
  require(m.all_finite(), ErrorKind::InvalidInput, std::string(op) + ": non-finite entry");
}

double max_abs(const Matrix& m) {
  double out = 0.0;
  for (double v : m.flat()) out = std::max(out, std::abs(v));
  return out;
}

}  // namespace

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorKind::ShapeError,
          "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += s * brow[j];
    }
  }
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.flat()[i] += b.flat()[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.flat()[i] -= b.flat()[i];
  return c;
}

Matrix operator*(double s, const Matrix& m) {
  Matrix c = m;
  for (double& v : c.flat()) v *= s;
  return c;
}

double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.flat()) acc += v * v;
  return std::sqrt(acc);
}

double trace(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorKind::ShapeError, "trace of non-square matrix");
  double acc = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, i);
  return acc;
}

Matrix gram(const Matrix& x) {
  const std::size_t d = x.cols();
  Matrix g(d, d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) g(i, j) += row[i] * row[j];
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

Matrix center_columns(const Matrix& x) {
  Matrix c = x;
  if (x.rows() == 0) return c;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
    mean /= static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) c(i, j) -= mean;
  }
  return c;
}

Matrix softmax_rows(const Matrix& m) {
  require_finite(m, "softmax_rows");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    const double hi = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - hi);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

Vector layer_norm(std::span<const double> v, std::span<const double> gamma, std::span<const double> beta,
                  double eps) {
  require(v.size() == gamma.size() && v.size() == beta.size(), ErrorKind::ShapeError,
          "layer_norm: lengths " + std::to_string(v.size()) + ", " + std::to_string(gamma.size()) + ", " +
              std::to_string(beta.size()));
  require(!v.empty(), ErrorKind::ShapeError, "layer_norm: empty vector");
  require(eps >= 0.0, ErrorKind::InvalidInput, "layer_norm: negative eps");
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  const double denom = std::sqrt(var + eps);
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = denom > 0.0 ? (v[i] - mean) / denom : 0.0;
    out[i] = gamma[i] * z + beta[i];
  }
  return out;
}

EigenDecomposition sym_eig(const Matrix& s) {
  require(s.rows() == s.cols(), ErrorKind::ShapeError, "sym_eig: matrix not square");
  require_finite(s, "sym_eig");
  const std::size_t n = s.rows();
  const double scale = std::max(1.0, max_abs(s));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      require(std::abs(s(i, j) - s(j, i)) <= 1e-10 * scale, ErrorKind::InvalidInput,
              "sym_eig: asymmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");

  Matrix a = s;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (s(i, j) + s(j, i));
  Matrix v = Matrix::identity(n);

  const double threshold = 1e-12 * std::max(1.0, frobenius_norm(a));
  constexpr int kMaxSweeps = 100;
  auto off_norm = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) acc += a(i, j) * a(i, j);
    return std::sqrt(acc);
  };

  int sweep = 0;
  while (off_norm() > threshold) {
    if (++sweep > kMaxSweeps) fail(ErrorKind::NumericalFailure, "sym_eig: Jacobi did not converge in 100 sweeps");
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle from the symmetric Schur decomposition of the (p,q) block.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.eigenvalues[k] = a(src, src);
    double norm = 0.0;
    std::size_t pivot = 0;
    for (std::size_t r = 0; r < n; ++r) {
      norm += v(r, src) * v(r, src);
      if (std::abs(v(r, src)) > std::abs(v(pivot, src))) pivot = r;
    }
    norm = std::sqrt(norm);
    const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, k) = sign * v(r, src) / norm;
  }
  return out;
}

double spectral_norm(const Matrix& m) {
  require_finite(m, "spectral_norm");
  if (m.empty()) return 0.0;
  // Eigen-solve the smaller of the two Gram matrices.
  const Matrix g = m.rows() < m.cols() ? gram(transpose(m)) : gram(m);
  const auto eig = sym_eig(g);
  return std::sqrt(std::max(0.0, eig.eigenvalues.front()));
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                        double h) {
  require(h > 0.0, ErrorKind::InvalidInput, "finite_diff_grad: step must be positive");
  Vector point(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    require(std::isfinite(up) && std::isfinite(down), ErrorKind::NumericalFailure,
            "finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace fpt
