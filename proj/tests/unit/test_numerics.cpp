#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fpt/numerics/error.hpp"
#include "fpt/numerics/linalg.hpp"
#include "fpt/numerics/parallel.hpp"
#include "fpt/numerics/rng.hpp"

using namespace fpt;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RandomStream& rng) {
  Matrix m(r, c);
  for (auto& v : m.flat()) v = rng.gaussian();
  return m;
}

Matrix random_symmetric(std::size_t n, RandomStream& rng) {
  Matrix a = random_matrix(n, n, rng);
  return 0.5 * (a + transpose(a));
}

// Straight-loop product used as an oracle for the library's matmul.
Matrix loop_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no fpt::Error thrown";
  return ErrorKind::InvalidInput;
}

}  // namespace

TEST(Softmax, SymmetricPair) {
  const Matrix p = softmax_rows(Matrix{{0.0, 0.0}});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
}

TEST(Softmax, LogTwo) {
  const Matrix p = softmax_rows(Matrix{{std::log(2.0), 0.0}});
  EXPECT_NEAR(p(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeEqualLogitsDoNotOverflow) {
  const Matrix p = softmax_rows(Matrix{{1000.0, 1000.0, 1000.0}});
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p(0, j), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  auto rng = seeded_rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m = random_matrix(4, 9, rng);
    for (auto& v : m.flat()) v *= 1e4 * rng.uniform();
    const Matrix p = softmax_rows(m);
    Matrix shifted = m;
    const double c = rng.uniform(-50, 50);
    for (auto& v : shifted.flat()) v += c;
    const Matrix q = softmax_rows(shifted);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < p.cols(); ++j) {
        EXPECT_GE(p(i, j), 0.0);
        EXPECT_LE(p(i, j), 1.0);
        EXPECT_NEAR(p(i, j), q(i, j), 1e-12);
        s += p(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_EQ(kind_of([] { softmax_rows(Matrix{{0.0, std::nan("")}}); }), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of([] { softmax_rows(Matrix{{INFINITY, 0.0}}); }), ErrorKind::InvalidInput);
}

TEST(LayerNorm, ConstantInputIsZero) {
  const Vector v{5, 5, 5, 5}, g(4, 1.0), b(4, 0.0);
  for (double x : layer_norm(v, g, b, 1e-5)) EXPECT_EQ(x, 0.0);
}

TEST(LayerNorm, UnitVariancePair) {
  const Vector v{1, -1}, g(2, 1.0), b(2, 0.0);
  const Vector y = layer_norm(v, g, b, 0.0);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], -1.0);
}

TEST(LayerNorm, AffineComposition) {
  auto rng = seeded_rng(3);
  Vector v(10);
  for (auto& x : v) x = rng.gaussian(2.0, 3.0);
  const Vector z = layer_norm(v, Vector(10, 1.0), Vector(10, 0.0), 1e-5);
  const Vector y = layer_norm(v, Vector(10, 2.0), Vector(10, 3.0), 1e-5);
  double mean = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(y[i], 2.0 * z[i] + 3.0, 1e-12);
    mean += z[i];
  }
  EXPECT_NEAR(mean / 10.0, 0.0, 1e-12);
}

TEST(LayerNorm, LengthMismatch) {
  EXPECT_EQ(kind_of([] { layer_norm(Vector{1, 2, 3}, Vector{1, 1}, Vector{0, 0, 0}, 1e-5); }), ErrorKind::ShapeError);
}

TEST(SymEig, Diagonal) {
  const auto e = sym_eig(Matrix{{4, 0}, {0, 1}});
  EXPECT_DOUBLE_EQ(e.eigenvalues[0], 4.0);
  EXPECT_DOUBLE_EQ(e.eigenvalues[1], 1.0);
  EXPECT_EQ(e.eigenvectors, Matrix::identity(2));
}

TEST(SymEig, Analytic2x2) {
  const auto e = sym_eig(Matrix{{2, 1}, {1, 2}});
  EXPECT_NEAR(e.eigenvalues[0], 3.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[1], 1.0, 1e-14);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(e.eigenvectors(0, 0), r, 1e-14);
  EXPECT_NEAR(e.eigenvectors(1, 0), r, 1e-14);
  // Largest-magnitude component positive, first index on ties.
  EXPECT_NEAR(e.eigenvectors(0, 1), r, 1e-14);
  EXPECT_NEAR(e.eigenvectors(1, 1), -r, 1e-14);
}

TEST(SymEig, RandomReconstructionAndOrthonormality) {
  auto rng = seeded_rng(11);
  for (std::size_t n : {1u, 2u, 3u, 6u, 12u, 30u}) {
    const Matrix s = random_symmetric(n, rng);
    const auto e = sym_eig(s);
    Matrix lam(n, n);
    double eig_sum = 0;
    for (std::size_t k = 0; k < n; ++k) {
      lam(k, k) = e.eigenvalues[k];
      eig_sum += e.eigenvalues[k];
      if (k > 0) EXPECT_GE(e.eigenvalues[k - 1], e.eigenvalues[k]);
      double norm = 0;
      for (std::size_t i = 0; i < n; ++i) norm += e.eigenvectors(i, k) * e.eigenvectors(i, k);
      EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-10);
    }
    const Matrix rec = loop_matmul(loop_matmul(e.eigenvectors, lam), transpose(e.eigenvectors));
    EXPECT_LE(frobenius_norm(rec - s), 1e-8) << "n=" << n;
    EXPECT_LE(frobenius_norm(loop_matmul(transpose(e.eigenvectors), e.eigenvectors) - Matrix::identity(n)), 1e-8);
    EXPECT_NEAR(eig_sum, trace(s), 1e-8);
  }
}

TEST(SymEig, RejectsAsymmetric) {
  EXPECT_EQ(kind_of([] { sym_eig(Matrix{{1, 2}, {0, 1}}); }), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of([] { sym_eig(Matrix(2, 3)); }), ErrorKind::ShapeError);
}

TEST(SpectralNorm, DiagonalAndRankOne) {
  EXPECT_NEAR(spectral_norm(Matrix{{3, 0}, {0, -5}}), 5.0, 1e-12);
  // outer((1,2),(2,0))
  EXPECT_NEAR(spectral_norm(Matrix{{2, 0}, {4, 0}}), 2.0 * std::sqrt(5.0), 1e-12);
}

TEST(SpectralNorm, MatchesEigenOracleAndIsSubmultiplicative) {
  auto rng = seeded_rng(5);
  for (int t = 0; t < 20; ++t) {
    const Matrix m = random_matrix(4, 7, rng);
    const auto e = sym_eig(loop_matmul(transpose(m), m));
    EXPECT_NEAR(spectral_norm(m), std::sqrt(e.eigenvalues[0]), 1e-8);
    const Matrix a = random_matrix(5, 3, rng), b = random_matrix(3, 6, rng);
    EXPECT_LE(spectral_norm(matmul(a, b)), spectral_norm(a) * spectral_norm(b) + 1e-8);
  }
}

TEST(Matmul, MatchesLoopOracle) {
  auto rng = seeded_rng(9);
  const Matrix a = random_matrix(5, 7, rng), b = random_matrix(7, 3, rng);
  EXPECT_LE(frobenius_norm(matmul(a, b) - loop_matmul(a, b)), 1e-12);
  EXPECT_EQ(kind_of([&] { matmul(a, a); }), ErrorKind::ShapeError);
}

TEST(FiniteDiff, Square) {
  const auto g = finite_diff_grad([](std::span<const double> x) { return x[0] * x[0]; }, Vector{3.0}, 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(FiniteDiff, ConstantAndLinear) {
  auto rng = seeded_rng(1);
  Vector a(6), x(6);
  for (auto& v : a) v = rng.gaussian();
  for (auto& v : x) v = rng.gaussian();
  for (double v : finite_diff_grad([](std::span<const double>) { return 4.2; }, x, 1e-4)) EXPECT_EQ(v, 0.0);
  const auto g = finite_diff_grad(
      [&](std::span<const double> y) {
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += a[i] * y[i];
        return s;
      },
      x, 1e-4);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(g[i], a[i], 1e-9);
}

TEST(FiniteDiff, QuadraticForm) {
  auto rng = seeded_rng(2);
  const std::size_t n = 5;
  Matrix b = random_matrix(n, n, rng);
  Matrix q = loop_matmul(transpose(b), b) + Matrix::identity(n);
  Vector x(n);
  for (auto& v : x) v = rng.gaussian();
  const auto g = finite_diff_grad(
      [&](std::span<const double> y) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) s += 0.5 * y[i] * q(i, j) * y[j];
        return s;
      },
      x, 1e-5);
  for (std::size_t i = 0; i < n; ++i) {
    double qx = 0;
    for (std::size_t j = 0; j < n; ++j) qx += q(i, j) * x[j];
    EXPECT_NEAR(g[i], qx, 1e-6 * std::max(1.0, std::abs(qx)));
  }
}

TEST(FiniteDiff, NonFiniteEvaluation) {
  EXPECT_EQ(kind_of([] {
              finite_diff_grad([](std::span<const double> x) { return std::log(x[0]); }, Vector{0.0}, 1e-3);
            }),
            ErrorKind::NumericalFailure);
}

TEST(Rng, Deterministic) {
  auto a = seeded_rng(42), b = seeded_rng(42), c = seeded_rng(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, GaussianMeanAndVariance) {
  auto rng = seeded_rng(42);
  double s = 0, s2 = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    s += g;
    s2 += g * g;
  }
  EXPECT_LT(std::abs(s / n), 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, UniformRangeAndBelow) {
  auto rng = seeded_rng(8);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ++counts[rng.below(7)];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Rng, PermutationIsPermutation) {
  auto rng = seeded_rng(4);
  auto p = rng.permutation(50);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_EQ(derive_seed(1, 5), derive_seed(1, 5));
}

TEST(Parallel, CoversEveryIndexAndPropagatesErrors) {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_EQ(kind_of([] {
              parallel_for(10, [](std::size_t i) {
                if (i == 3) fail(ErrorKind::IoError, "boom");
              });
            }),
            ErrorKind::IoError);
}

TEST(ErrorKinds, MessagesCarryKind) {
  try {
    fail(ErrorKind::RankDeficient, "lambda_m too small");
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "RankDeficient: lambda_m too small");
  }
}
