#include <cmath>

#include "common.hpp"

namespace fpt::tasks {

data::TimeSeriesDataset synthetic_donor_corpus(const DonorConfig& dc) {
  require(dc.n_series >= 1 && dc.series_len >= 2, ErrorKind::InvalidInput, "donor corpus needs series");
  RandomStream rng(dc.seed);
  Matrix values(dc.series_len, dc.n_series);
  for (std::size_t c = 0; c < dc.n_series; ++c) {
    const std::size_t n_sines = 2 + rng.below(2);
    std::vector<double> period, amp, phase;
    for (std::size_t k = 0; k < n_sines; ++k) {
      period.push_back(rng.uniform(5.0, 90.0));
      amp.push_back(rng.uniform(0.3, 1.5));
      phase.push_back(rng.uniform(0.0, 2 * M_PI));
    }
    const bool square = rng.bernoulli(0.5);
    const double p2 = rng.uniform(8.0, 64.0), a2 = rng.uniform(0.2, 1.0), off = rng.uniform(0.0, p2);
    const double trend = rng.gaussian(0.0, 1e-3);
    for (std::size_t t = 0; t < dc.series_len; ++t) {
      const double td = static_cast<double>(t);
      double v = trend * td;
      for (std::size_t k = 0; k < n_sines; ++k) v += amp[k] * std::sin(2 * M_PI * td / period[k] + phase[k]);
      const double frac = std::fmod(td + off, p2) / p2;
      v += square ? a2 * (frac < 0.5 ? 1.0 : -1.0) : a2 * (2.0 * frac - 1.0);
      values(t, c) = v + rng.gaussian(0.0, 0.05);
    }
  }
  return data::make_dataset("synthetic_donor", std::move(values));
}

backbone::ParameterStore pretrain_synthetic_donor(const RunSpec& spec, const DonorConfig& dc) {
  RunSpec s = spec;
  s.task = TaskSpec::forecast(spec.task.horizon.value_or(24));
  s.window.horizon = *s.task.horizon;
  s.window.stride = dc.window_stride;
  s.train.ablation = AblationArm::no_pretrain;
  s.train.epochs = dc.epochs;
  s.train.seed = dc.seed;
  s.validate();
  return detail::train_forecaster(synthetic_donor_corpus(dc), s, nullptr).store;
}

}  // namespace fpt::tasks
