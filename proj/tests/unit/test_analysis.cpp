#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "analysis_oracles.hpp"
#include "fpt/analysis/analysis.hpp"
#include "task_fixtures.hpp"
#include "test_support.hpp"

using namespace fpt;
using namespace fpt::analysis;
using fpt::testing::throws_kind;

namespace {

Matrix gaussian(std::size_t r, std::size_t c, RandomStream& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.flat()) v = scale * rng.gaussian();
  return m;
}

backbone::ForwardTrace trace_of(std::initializer_list<Matrix> layers) { return {std::vector<Matrix>(layers)}; }

}  // namespace

// ---- token similarity ----

TEST(TokenSimilarity, IdenticalTokensGiveOne) {
  const auto p = token_similarity(trace_of({Matrix(5, 3, 0.7), Matrix(4, 2, -1.0)}));
  ASSERT_EQ(p.mean.size(), 2u);
  EXPECT_NEAR(p.mean[0], 1.0, 1e-15);
  EXPECT_NEAR(p.mean[1], 1.0, 1e-15);
  EXPECT_EQ(p.histogram[0].back(), 10u);
}

TEST(TokenSimilarity, OrthogonalBasisGivesZero) {
  const auto p = token_similarity(trace_of({Matrix::identity(4)}));
  EXPECT_DOUBLE_EQ(p.mean[0], 0.0);
  EXPECT_EQ(p.histogram[0][kSimilarityBins / 2], 6u);
}

TEST(TokenSimilarity, MatchesDoubleLoopOracle) {
  auto rng = seeded_rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.below(10);
    const auto tr = trace_of({gaussian(n, 6, rng), gaussian(n, 6, rng), gaussian(n, 6, rng, 3.0)});
    const auto p = token_similarity(tr);
    for (std::size_t l = 0; l < 3; ++l) {
      EXPECT_NEAR(p.mean[l], oracle::mean_pair_cosine(tr.layers[l]), 1e-12);
      EXPECT_GE(p.mean[l], -1.0);
      EXPECT_LE(p.mean[l], 1.0);
      EXPECT_EQ(std::accumulate(p.histogram[l].begin(), p.histogram[l].end(), std::size_t{0}), n * (n - 1) / 2);
    }
  }
}

TEST(TokenSimilarity, ZeroNormTokenWarns) {
  Matrix h(3, 2, 1.0);
  h(1, 0) = h(1, 1) = 0.0;
  const auto p = token_similarity(trace_of({h}));
  EXPECT_NEAR(p.mean[0], 1.0 / 3.0, 1e-15);
  EXPECT_FALSE(p.warnings.empty());
}

TEST(TokenSimilarity, SingleTokenRejected) {
  EXPECT_TRUE(throws_kind([] { token_similarity(trace_of({Matrix(1, 4, 1.0)})); }, ErrorKind::InvalidInput));
}

TEST(TokenSimilarity, PooledOverTraces) {
  auto rng = seeded_rng(2);
  std::vector<backbone::ForwardTrace> ts{trace_of({gaussian(4, 3, rng)}), trace_of({gaussian(4, 3, rng)})};
  const auto p = token_similarity(ts);
  const double want = 0.5 * (oracle::mean_pair_cosine(ts[0].layers[0]) + oracle::mean_pair_cosine(ts[1].layers[0]));
  EXPECT_NEAR(p.mean[0], want, 1e-12);
  EXPECT_EQ(std::accumulate(p.histogram[0].begin(), p.histogram[0].end(), std::size_t{0}), 12u);
}

// ---- attention objective ----

TEST(AttentionObjective, ZeroAGivesTotalVariance) {
  auto rng = seeded_rng(3);
  const auto x = oracle::x_with_spectrum(9, {5.0, 2.0, 0.5}, rng);
  EXPECT_NEAR(attention_objective(x, Matrix(3, 3)), 7.5, 1e-10);
}

TEST(AttentionObjective, CentersInternally) {
  auto rng = seeded_rng(4);
  auto x = oracle::x_with_spectrum(9, {5.0, 2.0, 0.5}, rng);
  const Matrix a = gaussian(3, 3, rng, 0.1);
  const double base = attention_objective(x, a);
  for (std::size_t i = 0; i < x.rows(); ++i) x(i, 1) += 3.0;
  EXPECT_NEAR(attention_objective(x, a), base, 1e-9 * std::max(1.0, base));
}

TEST(AttentionObjective, SumAndTraceFormsAgree) {
  auto rng = seeded_rng(5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 1 + rng.below(6), n = 2 + rng.below(15);
    const Matrix x = gaussian(n, d, rng);
    const Matrix a = gaussian(d, d, rng, 0.2);
    const double s = attention_objective(x, a), tr = attention_objective_trace(x, a);
    EXPECT_NEAR(s, tr, 1e-8 * std::max(1.0, s));
    EXPECT_NEAR(oracle::pca_objective(center_columns(x), a), s, 1e-8 * std::max(1.0, s));
  }
}

TEST(AttentionObjective, SymmetricATraceSquaredForm) {
  // tr((I - S A)^2 S) only coincides with the objective for symmetric A
  auto rng = seeded_rng(6);
  const Matrix x = center_columns(gaussian(10, 4, rng));
  Matrix b = gaussian(4, 4, rng, 0.1);
  const Matrix a = b + transpose(b);
  const Matrix s = gram(x);
  const Matrix m = Matrix::identity(4) - matmul(s, a);
  EXPECT_NEAR(trace(matmul(matmul(m, m), s)), attention_objective(x, a), 1e-8);
}

TEST(AttentionObjective, ShapeMismatch) {
  EXPECT_TRUE(throws_kind([] { attention_objective(Matrix(4, 3), Matrix(2, 2)); }, ErrorKind::ShapeError));
}

// ---- optimal PCA attention ----

TEST(PcaAttention, DiagonalExample) {
  const double r2 = std::sqrt(2.0), h = 1.0 / std::sqrt(2.0);
  const Matrix x{{r2, 0}, {-r2, 0}, {0, h}, {0, -h}};
  const auto sol = optimal_pca_attention(x, 1);
  EXPECT_NEAR(sol.a_star(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(sol.a_star(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(sol.a_star(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(sol.a_star(1, 1), 0.0, 1e-12);
  EXPECT_NEAR(sol.objective, 1.0, 1e-12);
  EXPECT_NEAR(oracle::brute_force_rank_m(x, 1, 17), 1.0, 1e-4);
}

TEST(PcaAttention, FullRankGivesZero) {
  auto rng = seeded_rng(7);
  const auto x = oracle::x_with_spectrum(12, {9.0, 4.0, 1.0, 0.25}, rng);
  EXPECT_NEAR(optimal_pca_attention(x, 4).objective, 0.0, 1e-8);
}

TEST(PcaAttention, TailSumAndBruteForce) {
  auto rng = seeded_rng(8);
  const std::vector<double> lam{6.0, 3.0, 1.5, 0.5};
  const auto x = oracle::x_with_spectrum(12, lam, rng);
  const auto sol = optimal_pca_attention(x, 2);
  EXPECT_NEAR(sol.objective, lam[2] + lam[3], 1e-6);
  EXPECT_LE(sol.objective, oracle::brute_force_rank_m(x, 2, 99) + 1e-4);
}

TEST(PcaAttention, SolutionIsSymmetricPsdOfRankM) {
  auto rng = seeded_rng(9);
  const auto x = gaussian(14, 5, rng);
  for (std::size_t m = 1; m <= 5; ++m) {
    const auto sol = optimal_pca_attention(x, m);
    EXPECT_NEAR(frobenius_norm(sol.a_star - transpose(sol.a_star)), 0.0, 1e-12);
    const auto e = sym_eig(sol.a_star);
    std::size_t nonzero = 0;
    for (double v : e.eigenvalues) {
      EXPECT_GE(v, -1e-8);
      if (v > 1e-10) ++nonzero;
    }
    EXPECT_LE(nonzero, m);
    EXPECT_GE(sol.objective, 0.0);
  }
}

TEST(PcaAttention, BeatsRandomRankMMatrices) {
  auto rng = seeded_rng(10);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 2 + rng.below(5), m = 1 + rng.below(d);
    const Matrix x = gaussian(d + 2 + rng.below(8), d, rng);
    const double best = optimal_pca_attention(x, m).objective;
    for (int k = 0; k < 50; ++k) {
      const Matrix u = gaussian(d, m, rng, 0.3), v = gaussian(d, m, rng, 0.3);
      EXPECT_LE(best, attention_objective(x, matmul(u, transpose(v))) + 1e-9);
    }
  }
}

TEST(PcaAttention, RankDeficient) {
  const Matrix x{{1, 2}, {2, 4}, {-3, -6}};
  EXPECT_TRUE(throws_kind([&] { optimal_pca_attention(x, 2); }, ErrorKind::RankDeficient));
  EXPECT_NO_THROW(optimal_pca_attention(x, 1));
  EXPECT_TRUE(throws_kind([&] { optimal_pca_attention(x, 0); }, ErrorKind::InvalidInput));
}

// ---- Jacobian bound ----

TEST(Jacobian, FiniteDifferencesMatchAnalyticOracle) {
  auto rng = seeded_rng(12);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 1 + rng.below(5), d = 1 + rng.below(4);
    const Matrix x = gaussian(n, d, rng), a = gaussian(d, d, rng, 0.5);
    const Matrix fd = attention_jacobian(x, a);
    const Matrix an = oracle::attention_jacobian_analytic(x, a);
    EXPECT_LT(frobenius_norm(fd - an), 1e-7 * std::max(1.0, frobenius_norm(an)));
  }
}

TEST(Jacobian, BoundMatchesHandComputation) {
  auto rng = seeded_rng(13);
  const Matrix x = gaussian(3, 2, rng), a = gaussian(2, 2, rng, 0.4);
  const auto c = jacobian_bound_check(x, a);
  Matrix p = softmax_rows(matmul(matmul(x, a), transpose(x)));
  const double an = spectral_norm(a);
  double b = 3.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double m0 = p(i, 0) * x(0, 0) + p(i, 1) * x(1, 0) + p(i, 2) * x(2, 0);
    const double m1 = p(i, 0) * x(0, 1) + p(i, 1) * x(1, 1) + p(i, 2) * x(2, 1);
    for (std::size_t j = 0; j < 3; ++j) {
      const double dist = std::pow(x(j, 0) - m0, 2) + std::pow(x(j, 1) - m1, 2);
      b += an * (i == j ? p(i, i) + 0.5 : p(i, j)) * dist;
    }
    b += 0.5 * an * (x(i, 0) * x(i, 0) + x(i, 1) * x(i, 1));
  }
  EXPECT_NEAR(c.rhs, b, 1e-12 * b);
  EXPECT_NEAR(c.rhs - c.rhs_without_n, 3.0, 1e-12);
  EXPECT_NEAR(c.lhs, spectral_norm(oracle::attention_jacobian_analytic(x, a)), 1e-7);
}

TEST(Jacobian, ZeroAUniformAttention) {
  auto rng = seeded_rng(14);
  const Matrix x = gaussian(4, 3, rng);
  const auto c = jacobian_bound_check(x, Matrix(3, 3));
  EXPECT_NEAR(c.lhs, 1.0, 1e-8);  // J = (1/N) 1 1^T kron I
  EXPECT_DOUBLE_EQ(c.rhs, 4.0);
  EXPECT_TRUE(c.holds);
}

TEST(Jacobian, SingleTokenIsIdentity) {
  auto rng = seeded_rng(15);
  const Matrix x = gaussian(1, 3, rng), a = gaussian(3, 3, rng);
  const auto c = jacobian_bound_check(x, a);
  EXPECT_NEAR(c.lhs, 1.0, 1e-8);
  EXPECT_TRUE(c.holds);
}

TEST(Jacobian, RandomizedAuditHolds) {
  for (std::size_t n : {2u, 4u, 6u})
    for (std::size_t d : {1u, 3u, 4u}) {
      const auto audit = jacobian_audit(n, d, 50, 100 + n * 10 + d);
      EXPECT_EQ(audit.holds(), 50u) << "N=" << n << " D=" << d;
    }
}

TEST(Jacobian, SizeCap) {
  EXPECT_TRUE(throws_kind([] { jacobian_bound_check(Matrix(33, 16), Matrix(16, 16)); }, ErrorKind::InvalidInput));
  EXPECT_TRUE(throws_kind([] { jacobian_audit(100, 6, 1, 0); }, ErrorKind::InvalidInput));
}

// ---- concentration ----

TEST(Convergence, ZeroVarianceIsExact) {
  const auto p = random_convergence_problem(8, 1);
  const std::vector<std::size_t> grid{16, 64, 256, 1024};
  const auto r = attention_mean_convergence(p.mu, 0.0, p.wq, p.wk, p.wv, grid, 10, 2);
  for (double e : r.mean_error) EXPECT_LE(e, 1e-10);
}

TEST(Convergence, SlopeNearMinusHalfAndStable) {
  const auto p = random_convergence_problem(8, 1);
  const std::vector<std::size_t> grid{16, 64, 256, 1024};
  const auto a = attention_mean_convergence(p.mu, 0.1, p.wq, p.wk, p.wv, grid, 200, 3);
  const auto b = attention_mean_convergence(p.mu, 0.1, p.wq, p.wk, p.wv, grid, 400, 3);
  EXPECT_GE(a.slope, -0.7);
  EXPECT_LE(a.slope, -0.3);
  EXPECT_LT(std::abs(a.slope - b.slope), 0.1);
  for (std::size_t i = 1; i < a.mean_error.size(); ++i) EXPECT_LT(a.mean_error[i], a.mean_error[i - 1]);
}

TEST(Convergence, SingleTokenErrorIsItsDeviation) {
  // n = 1: softmax weight 1, so the error is |(x_1 - mu) Wv|_inf
  const auto p = random_convergence_problem(4, 5);
  const std::vector<std::size_t> grid{1};
  const auto r = attention_mean_convergence(p.mu, 0.2, p.wq, p.wk, Matrix::identity(4), grid, 4000, 6);
  // E max_k abs(z_k) over 4 iid N(0, 0.01) coordinates is about 0.1 * 1.4642
  EXPECT_NEAR(r.mean_error[0], 0.1 * 1.4642, 0.005);
}

// ---- SGD conditioning ----

TEST(Sgd, OrthonormalRealizableCase) {
  auto rng = seeded_rng(20);
  const std::size_t n = 32;
  Matrix g = oracle::centered_orthonormal(n, 3, rng);
  for (auto& v : g.flat()) v *= std::sqrt(static_cast<double>(n));  // (1/N) G^T G = I
  Matrix w(3, 2);
  for (auto& v : w.flat()) v = rng.gaussian();
  const Matrix y = matmul(g, w);
  const auto c = sgd_conditioning_check(g, y, 1e-3, 1);
  EXPECT_NEAR(c.sigma_min, 1.0, 1e-10);
  EXPECT_NEAR(c.optimum, 0.0, 1e-20);
  EXPECT_GT(c.steps_taken, 0u);
}

TEST(Sgd, DesignHasRequestedConditioning) {
  const auto [g, y] = conditioned_design(0.01);
  const auto e = sym_eig((1.0 / 64.0) * gram(g));
  EXPECT_NEAR(e.eigenvalues.front(), 1.0, 1e-12);
  EXPECT_NEAR(e.eigenvalues.back(), 0.01, 1e-12);
}

TEST(Sgd, WellConditionedNeedsFewerSteps) {
  const auto [g1, y1] = conditioned_design(1.0);
  const auto [g2, y2] = conditioned_design(0.01);
  EXPECT_LT(sgd_conditioning_check(g1, y1, 1e-3, 4).steps_taken, sgd_conditioning_check(g2, y2, 1e-3, 4).steps_taken);
}

TEST(Sgd, StepsTimesSigmaRoughlyConstant) {
  const std::vector<double> sigmas{1.0, 0.1, 0.01};
  const auto rows = sgd_rate_sweep(sigmas, 1e-3, 5, 0);
  ASSERT_EQ(rows.size(), 3u);
  const double base = rows[0].mean_steps * rows[0].sigma_min;
  for (const auto& r : rows) {
    const double v = r.mean_steps * r.sigma_min;
    EXPECT_GT(v, base / 10.0);
    EXPECT_LT(v, base * 10.0);
  }
}

TEST(Sgd, SingularDesign) {
  Matrix g(8, 2);
  for (std::size_t i = 0; i < 8; ++i) g(i, 0) = g(i, 1) = (i % 2 ? 1.0 : -1.0);
  EXPECT_TRUE(throws_kind([&] { sgd_conditioning_check(g, Matrix(8, 1), 1e-3, 0); }, ErrorKind::RankDeficient));
}

TEST(Sgd, BudgetExhausted) {
  const auto [g, y] = conditioned_design(0.01);
  EXPECT_TRUE(throws_kind([&] { sgd_conditioning_check(g, y, 1e-6, 0, 2.0, 100); }, ErrorKind::NumericalFailure));
}

// ---- max-entropy dual ----

TEST(MaxEnt, ClosedFormExamples) {
  EXPECT_NEAR(maxent_dual_solve(0.5, 0.5), std::log(2.0), 1e-10);
  EXPECT_NEAR(maxent_dual_solve(0.2, 0.2), std::log(1.25), 1e-10);
}

TEST(MaxEnt, GridMatchesClosedForm) {
  double worst = 0;
  for (int i = 1; i <= 10; ++i)
    for (int j = 1; j <= 10; ++j) {
      const double q = i / 11.0, g = j / 11.0;
      worst = std::max(worst, std::abs(maxent_dual_solve(q, g) - std::log(g / (q * (1 - g)))));
    }
  EXPECT_LE(worst, 1e-9);
}

TEST(MaxEnt, ExtremeButValidInputs) {
  EXPECT_NEAR(maxent_dual_solve(1e-6, 0.999), std::log(0.999 / (1e-6 * 0.001)), 1e-9);
  EXPECT_NEAR(maxent_dual_solve(0.999, 1e-6), std::log(1e-6 / (0.999 * (1 - 1e-6))), 1e-9);
}

TEST(MaxEnt, DegenerateDual) {
  for (double g : {0.0, 1.0, 1.5, -0.1})
    EXPECT_TRUE(throws_kind([&] { maxent_dual_solve(0.5, g); }, ErrorKind::InvalidInput)) << g;
  EXPECT_TRUE(throws_kind([] { maxent_dual_solve(1.0, 0.5); }, ErrorKind::InvalidInput));
}

// ---- mixed-weight sweep ----

namespace {

struct SweepSetup {
  tasks::RunSpec spec;
  backbone::BackboneConfig cfg;
  backbone::ParameterStore weights;
};

SweepSetup sweep_setup() {
  SweepSetup s;
  s.spec = fixtures::small_forecast_spec(1, 16);
  s.spec.backbone.d_model = 16;
  s.spec.backbone.n_heads = 2;
  s.spec.backbone.d_ff = 32;
  s.spec.train.max_steps_per_epoch = 3;
  s.cfg = s.spec.backbone;
  s.cfg.head_tokens = 11;
  s.cfg.head_out = 24;
  auto rng = seeded_rng(77);
  s.weights = backbone::init_random(s.cfg, rng);
  return s;
}

}  // namespace

TEST(MixSweep, ShapeRangeAndDeterminism) {
  const auto s = sweep_setup();
  const auto d = fixtures::sinusoid(1200);
  const std::vector<double> ratios{0.0, 0.5, 1.0};
  SweepOptions o;
  o.pca_components = 2;
  o.eval_windows = 4;
  const auto rows = mixed_weights_similarity_sweep(&s.weights, s.spec, d, ratios, 5, o);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    ASSERT_EQ(r.similarity.mean.size(), s.cfg.n_layers + 1);
    ASSERT_EQ(r.pca_similarity.mean.size(), s.cfg.n_layers + 1);
    for (double m : r.similarity.mean) {
      EXPECT_GE(m, -1.0);
      EXPECT_LE(m, 1.0);
    }
    for (double m : r.pca_similarity.mean) {
      EXPECT_GE(m, -1.0);
      EXPECT_LE(m, 1.0);
    }
    EXPECT_TRUE(std::isfinite(r.test_mse));
  }
  const std::vector<double> zero{0.0};
  const auto again = mixed_weights_similarity_sweep(&s.weights, s.spec, d, zero, 5, o);
  EXPECT_EQ(again[0].similarity.mean, rows[0].similarity.mean);
  EXPECT_EQ(again[0].similarity.histogram, rows[0].similarity.histogram);
  EXPECT_EQ(again[0].test_mse, rows[0].test_mse);

  const auto csv = to_csv(std::span<const SweepRow>(rows));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(to_json(std::span<const SweepRow>(rows)).size(), 3u);
}

TEST(MixSweep, MissingWeights) {
  const auto s = sweep_setup();
  const std::vector<double> ratios{0.0};
  EXPECT_TRUE(throws_kind(
      [&] { mixed_weights_similarity_sweep(nullptr, s.spec, fixtures::sinusoid(1200), ratios, 0); },
      ErrorKind::MissingWeights));
}

// ---- serialization ----

TEST(AnalysisJson, NonFiniteBecomesNull) {
  ConvergenceResult r;
  r.n = {1, 2};
  r.mean_error = {0.0, 0.0};
  r.slope = r.intercept = std::nan("");
  const auto j = to_json(r);
  EXPECT_TRUE(j["slope"].is_null());
  EXPECT_NE(to_csv(r).find("n,mean_error,log_n,log_error"), std::string::npos);
}
