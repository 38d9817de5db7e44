#include "fpt/metrics/metrics.hpp"

#include <cmath>
#include <limits>

#include "fpt/numerics/error.hpp"

namespace fpt::metrics {

namespace {

template <class A, class B>
void require_pair(std::span<A> y, std::span<B> yhat, const char* name) {
  require(y.size() == yhat.size(), ErrorKind::ShapeError,
          std::string(name) + ": lengths " + std::to_string(y.size()) + " vs " + std::to_string(yhat.size()));
  require(!y.empty(), ErrorKind::ShapeError, std::string(name) + ": empty input");
}

double mean_abs_error(std::span<const double> y, std::span<const double> yhat) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - yhat[i]);
  return acc / static_cast<double>(y.size());
}

}  // namespace

double mse(std::span<const double> y, std::span<const double> yhat) {
  require_pair(y, yhat, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return acc / static_cast<double>(y.size());
}

double mae(std::span<const double> y, std::span<const double> yhat) {
  require_pair(y, yhat, "mae");
  return mean_abs_error(y, yhat);
}

double smape(std::span<const double> y, std::span<const double> yhat) {
  require_pair(y, yhat, "smape");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double denom = std::abs(y[i]) + std::abs(yhat[i]);
    if (denom > 0.0) acc += std::abs(y[i] - yhat[i]) / denom;
  }
  return 200.0 * acc / static_cast<double>(y.size());
}

double mase(std::span<const double> y, std::span<const double> yhat, std::span<const double> insample,
            std::size_t m) {
  require_pair(y, yhat, "mase");
  require(m >= 1, ErrorKind::InvalidInput, "mase: seasonal period must be positive");
  require(insample.size() > m, ErrorKind::InvalidInput, "mase: in-sample series must be longer than the period");
  double scale = 0.0;
  for (std::size_t t = m; t < insample.size(); ++t) scale += std::abs(insample[t] - insample[t - m]);
  scale /= static_cast<double>(insample.size() - m);
  require(scale > 0.0, ErrorKind::DegenerateScale, "mase: in-sample seasonal-naive error is zero");
  return mean_abs_error(y, yhat) / scale;
}

double owa(double smape_value, double mase_value, double smape_ref, double mase_ref) {
  require(smape_ref > 0.0 && mase_ref > 0.0, ErrorKind::InvalidInput, "owa: reference values must be positive");
  return 0.5 * (smape_value / smape_ref + mase_value / mase_ref);
}

double mape(std::span<const double> y, std::span<const double> yhat) {
  require_pair(y, yhat, "mape");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    require(y[i] != 0.0, ErrorKind::DegenerateScale, "mape: zero actual at index " + std::to_string(i));
    acc += std::abs(y[i] - yhat[i]) / std::abs(y[i]);
  }
  return 100.0 * acc / static_cast<double>(y.size());
}

double nd(std::span<const double> y, std::span<const double> yhat) {
  require_pair(y, yhat, "nd");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += std::abs(y[i] - yhat[i]);
    den += std::abs(y[i]);
  }
  require(den > 0.0, ErrorKind::DegenerateScale, "nd: sum of |actuals| is zero");
  return num / den;
}

std::vector<int> point_adjust(std::span<const int> pred, std::span<const int> truth) {
  require_pair(pred, truth, "point_adjust");
  std::vector<int> out(pred.begin(), pred.end());
  std::size_t i = 0;
  while (i < truth.size()) {
    if (truth[i] == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool hit = false;
    while (j < truth.size() && truth[j] != 0) hit = hit || pred[j] != 0, ++j;
    if (hit)
      for (std::size_t k = i; k < j; ++k) out[k] = 1;
    i = j;
  }
  return out;
}

Prf1 prf1(std::span<const int> pred_in, std::span<const int> truth, bool adjust) {
  require_pair(pred_in, truth, "prf1");
  const std::vector<int> pred = adjust ? point_adjust(pred_in, truth) : std::vector<int>(pred_in.begin(), pred_in.end());
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool t = truth[i] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  Prf1 out;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (tp + fp > 0) {
    out.precision = tp / (tp + fp);
  } else {
    out.precision = nan;
    out.warnings.emplace_back("precision undefined: no points flagged");
  }
  if (tp + fn > 0) {
    out.recall = tp / (tp + fn);
  } else {
    out.recall = nan;
    out.warnings.emplace_back("recall undefined: no anomalies in ground truth");
  }
  if (std::isnan(out.precision) || std::isnan(out.recall) || out.precision + out.recall == 0.0) {
    out.f1 = 0.0;
    if (std::isnan(out.precision) || std::isnan(out.recall)) out.warnings.emplace_back("F1 reported as 0");
  } else {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

}  // namespace fpt::metrics
