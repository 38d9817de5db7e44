#include <algorithm>
#include <cmath>

#include "fpt/analysis/analysis.hpp"

namespace fpt::analysis {

namespace {

struct Accumulator {
  std::vector<double> sum;
  std::vector<std::size_t> pairs;
  std::vector<std::vector<std::size_t>> hist;
  std::size_t zero_norm = 0;
};

std::size_t bin_of(double s, std::size_t bins) {
  const double u = (std::clamp(s, -1.0, 1.0) + 1.0) / 2.0;
  return std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)));
}

void add_trace(Accumulator& acc, const backbone::ForwardTrace& trace, std::size_t bins) {
  if (acc.sum.empty()) {
    acc.sum.assign(trace.layers.size(), 0.0);
    acc.pairs.assign(trace.layers.size(), 0);
    acc.hist.assign(trace.layers.size(), std::vector<std::size_t>(bins, 0));
  }
  require(trace.layers.size() == acc.sum.size(), ErrorKind::ShapeError, "traces have different layer counts");
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const Matrix& h = trace.layers[l];
    require(h.rows() >= 2, ErrorKind::InvalidInput, "token similarity needs at least two tokens per layer");
    Vector norm(h.rows());
    for (std::size_t i = 0; i < h.rows(); ++i) {
      double s = 0;
      for (double v : h.row(i)) s += v * v;
      norm[i] = std::sqrt(s);
      if (norm[i] == 0.0) ++acc.zero_norm;
    }
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = i + 1; j < h.rows(); ++j) {
        double c = 0.0;
        if (norm[i] > 0.0 && norm[j] > 0.0) {
          double dot = 0;
          for (std::size_t k = 0; k < h.cols(); ++k) dot += h(i, k) * h(j, k);
          c = std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
        }
        acc.sum[l] += c;
        ++acc.pairs[l];
        ++acc.hist[l][bin_of(c, bins)];
      }
  }
}

TokenSimilarityProfile finish(Accumulator& acc) {
  TokenSimilarityProfile p;
  p.mean.resize(acc.sum.size());
  for (std::size_t l = 0; l < acc.sum.size(); ++l) p.mean[l] = acc.sum[l] / static_cast<double>(acc.pairs[l]);
  p.histogram = std::move(acc.hist);
  p.pairs_per_layer = acc.pairs.empty() ? 0 : acc.pairs.front();
  if (acc.zero_norm)
    p.warnings.push_back(std::to_string(acc.zero_norm) + " zero-norm token(s) given similarity 0");
  return p;
}

}  // namespace

TokenSimilarityProfile token_similarity(const backbone::ForwardTrace& trace, std::size_t bins) {
  return token_similarity(std::span(&trace, 1), bins);
}

TokenSimilarityProfile token_similarity(std::span<const backbone::ForwardTrace> traces, std::size_t bins) {
  require(!traces.empty(), ErrorKind::InvalidInput, "no traces");
  require(bins >= 1, ErrorKind::InvalidInput, "need at least one histogram bin");
  Accumulator acc;
  for (const auto& t : traces) {
    require(!t.layers.empty(), ErrorKind::InvalidInput, "empty forward trace");
    add_trace(acc, t, bins);
  }
  return finish(acc);
}

}  // namespace fpt::analysis
