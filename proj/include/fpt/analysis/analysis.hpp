#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fpt/backbone/model.hpp"
#include "fpt/backbone/params.hpp"
#include "fpt/data/dataset.hpp"
#include "fpt/numerics/linalg.hpp"
#include "fpt/tasks/config.hpp"

namespace fpt::analysis {

// ---- token similarity ----

inline constexpr std::size_t kSimilarityBins = 20;

/// Per-layer cosine similarity over distinct token pairs. Histogram bins
/// split [-1, 1] evenly; 1.0 falls in the last bin.
struct TokenSimilarityProfile {
  Vector mean;
  std::vector<std::vector<std::size_t>> histogram;
  std::size_t pairs_per_layer = 0;
  std::vector<std::string> warnings;
};

/// Throws InvalidInput for fewer than two tokens. Zero-norm tokens count as
/// similarity 0 and add a warning.
TokenSimilarityProfile token_similarity(const backbone::ForwardTrace& trace, std::size_t bins = kSimilarityBins);
/// Pooled over several traces: histograms add up, means are over all pairs.
TokenSimilarityProfile token_similarity(std::span<const backbone::ForwardTrace> traces,
                                        std::size_t bins = kSimilarityBins);

// ---- attention as PCA ----

/// sum_i |x_i - S A x_i|^2 with S = X^T X, after centering the columns of X.
double attention_objective(const Matrix& x, const Matrix& a);
/// The same value as tr((I - S A) S (I - S A)^T). For symmetric A this is
/// tr((I - S A)^2 S).
double attention_objective_trace(const Matrix& x, const Matrix& a);

struct PcaAttentionSolution {
  Matrix a_star;
  std::size_t rank = 0;
  double objective = 0.0;
  EigenDecomposition eigen;  // of X^T X, X centered
};

/// A* = sum_{i<=m} v_i v_i^T / lambda_i. RankDeficient when lambda_m <= 1e-10.
PcaAttentionSolution optimal_pca_attention(const Matrix& x, std::size_t m);

// ---- Jacobian bound ----

struct JacobianCheck {
  double lhs = 0.0;             // |J|_2 by central differences
  double rhs = 0.0;             // bound including the additive N
  double rhs_without_n = 0.0;
  bool holds = false;           // lhs <= rhs up to finite-difference slack
};

inline constexpr std::size_t kJacobianMaxEntries = 512;
inline constexpr double kJacobianStep = 1e-6;
inline constexpr double kJacobianSlack = 1e-6;  // relative

/// Jacobian of vec(softmax(X A X^T) X) with respect to vec(X), row-major.
Matrix attention_jacobian(const Matrix& x, const Matrix& a, double h = kJacobianStep);
JacobianCheck jacobian_bound_check(const Matrix& x, const Matrix& a);

struct JacobianAudit {
  std::size_t n_tokens = 0, dim = 0;
  std::vector<JacobianCheck> checks;
  std::size_t holds() const;
};

/// X ~ N(0, s^2) with s ~ U(0.1, 3); A gaussian rescaled to |A|_2 ~ U(0, a_norm_max).
JacobianAudit jacobian_audit(std::size_t n_tokens, std::size_t dim, std::size_t trials, std::uint64_t seed,
                             double a_norm_max = 1.0);

// ---- concentration of attention output ----

struct ConvergenceProblem {
  Vector mu;
  Matrix wq, wk, wv;
};

/// Unit-norm mu, Wq and Wk with N(0, (0.3/sqrt d)^2) entries, Wv with
/// N(0, 1/d) entries.
ConvergenceProblem random_convergence_problem(std::size_t d, std::uint64_t seed);

struct ConvergenceResult {
  std::vector<std::size_t> n;
  Vector mean_error;
  double slope = 0.0;  // NaN when fewer than two errors are positive
  double intercept = 0.0;
};

/// Tokens x_i ~ N(mu, sigma^2/d I); the query is the first token. Error is
/// |softmax(x_q Wq Wk^T X^T / sqrt d) X Wv - mu Wv|_inf averaged over trials,
/// slope from a least-squares fit of log error on log n.
ConvergenceResult attention_mean_convergence(const Vector& mu, double sigma, const Matrix& wq, const Matrix& wk,
                                             const Matrix& wv, std::span<const std::size_t> n_grid,
                                             std::size_t trials, std::uint64_t seed);

// ---- SGD conditioning ----

struct SgdCheck {
  std::size_t steps_taken = 0;
  double sigma_min = 0.0;
  double optimum = 0.0;  // objective at the least-squares solution
};

/// Projected SGD with eta_t = 1/(sigma_min t) on (1/2N) sum |g_i^T W - y_i|^2,
/// started at W = 0 and projected onto the ball of radius
/// radius_factor * |W*|_F. Stops once the running average of the
/// suboptimality over steps 1..t is <= eps. RankDeficient for a singular
/// Gram matrix, NumericalFailure when max_steps is exhausted.
SgdCheck sgd_conditioning_check(const Matrix& g, const Matrix& y, double eps, std::uint64_t seed,
                                double radius_factor = 2.0, std::size_t max_steps = 100'000'000);

/// N x d design with (1/N) G^T G = diag(1, sigma, ..., sigma); rows are
/// signed scaled basis vectors. Y = G * ones(d, 1).
std::pair<Matrix, Matrix> conditioned_design(double sigma, std::size_t n_rows = 64, std::size_t dim = 2);

struct SgdRateRow {
  double sigma = 0.0;
  double sigma_min = 0.0;
  double mean_steps = 0.0;
};

/// conditioned_design for each sigma, steps averaged over `repeats` seeds.
std::vector<SgdRateRow> sgd_rate_sweep(std::span<const double> sigmas, double eps, std::size_t repeats,
                                       std::uint64_t seed);

// ---- max-entropy dual ----

/// argmin_l log(1 + q e^l) - l g by bisection on the derivative. InvalidInput
/// unless 0 < q < 1 and 0 < g < 1.
double maxent_dual_solve(double q, double g);

// ---- mixed-weight sweep ----

/// Similarity profiles of a trained forecaster (layout of a forecasting run
/// with `spec`) over the first eval_windows test windows; the second profile
/// uses PCA attention and is empty when pca_components is 0.
std::pair<TokenSimilarityProfile, TokenSimilarityProfile> forecaster_similarity(
    const backbone::ParameterStore& trained, const tasks::RunSpec& spec, const data::TimeSeriesDataset& d,
    std::size_t eval_windows = 8, std::size_t pca_components = 0);

struct SweepRow {
  double ratio = 0.0;
  TokenSimilarityProfile similarity;
  TokenSimilarityProfile pca_similarity;  // empty unless pca_components > 0
  double test_mse = 0.0;
};

struct SweepOptions {
  backbone::MixMode mode = backbone::MixMode::replace;
  std::size_t eval_windows = 8;
  std::size_t pca_components = 0;
};

/// For each ratio: load `pretrained` into the run's forecasting backbone,
/// mix its frozen tensors with a fresh init, fine-tune the trainable group
/// with spec.train, then trace the first eval_windows test windows.
/// MissingWeights when pretrained is null.
std::vector<SweepRow> mixed_weights_similarity_sweep(const backbone::ParameterStore* pretrained,
                                                     const tasks::RunSpec& spec, const data::TimeSeriesDataset& d,
                                                     std::span<const double> ratios, std::uint64_t seed,
                                                     const SweepOptions& opts = {});

// ---- serialization ----

nlohmann::json to_json(const TokenSimilarityProfile& p);
nlohmann::json to_json(const PcaAttentionSolution& s);
nlohmann::json to_json(const JacobianCheck& c);
nlohmann::json to_json(const JacobianAudit& a);
nlohmann::json to_json(const ConvergenceResult& r);
nlohmann::json to_json(const SgdCheck& c);
nlohmann::json to_json(std::span<const SgdRateRow> rows);
nlohmann::json to_json(std::span<const SweepRow> rows);

std::string to_csv(const TokenSimilarityProfile& p);
std::string to_csv(const JacobianAudit& a);
std::string to_csv(const ConvergenceResult& r);
std::string to_csv(std::span<const SgdRateRow> rows);
std::string to_csv(std::span<const SweepRow> rows);

}  // namespace fpt::analysis
