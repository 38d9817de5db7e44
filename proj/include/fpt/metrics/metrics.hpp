#pragma once

#include <span>
#include <string>
#include <vector>

namespace fpt::metrics {

double mse(std::span<const double> y, std::span<const double> yhat);
double mae(std::span<const double> y, std::span<const double> yhat);

/// 200/n * sum |y - yhat| / (|y| + |yhat|), in percent. Terms whose
/// denominator is zero contribute 0.
double smape(std::span<const double> y, std::span<const double> yhat);

/// Mean absolute error scaled by the in-sample seasonal-naive error at period m.
/// Throws DegenerateScale when the in-sample naive error is zero.
double mase(std::span<const double> y, std::span<const double> yhat, std::span<const double> insample,
            std::size_t m);

/// 0.5 * (smape / smape_ref + mase / mase_ref). References come from the
/// dataset's reference forecaster and must be positive.
double owa(double smape, double mase, double smape_ref, double mase_ref);

/// 100/n * sum |y - yhat| / |y|. Throws DegenerateScale on any zero actual.
double mape(std::span<const double> y, std::span<const double> yhat);

/// sum |y - yhat| / sum |y|. Throws DegenerateScale when sum |y| == 0.
double nd(std::span<const double> y, std::span<const double> yhat);

struct Prf1 {
  double precision = 0.0;  // NaN when nothing was predicted positive
  double recall = 0.0;     // NaN when the truth has no positives
  double f1 = 0.0;         // 0 whenever precision or recall is undefined
  std::vector<std::string> warnings;
};

/// Expand predictions over contiguous true-anomaly segments: a segment that
/// contains any predicted point is predicted in full.
std::vector<int> point_adjust(std::span<const int> pred, std::span<const int> truth);

Prf1 prf1(std::span<const int> pred, std::span<const int> truth, bool point_adjust = false);

}  // namespace fpt::metrics
