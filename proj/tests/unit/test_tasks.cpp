#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fpt/tasks/runners.hpp"
#include "task_fixtures.hpp"
#include "test_support.hpp"

using namespace fpt;
using namespace fpt::tasks;
using fpt::testing::throws_kind;

namespace {

backbone::BackboneConfig tiny_backbone() {
  backbone::BackboneConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_tokens = 12;
  c.head_tokens = 11;
  c.head_out = 24;
  return c;
}

double variance(const data::TimeSeriesDataset& d) {
  const auto x = d.channel(0);
  double m = 0, v = 0;
  for (double u : x) m += u;
  m /= static_cast<double>(x.size());
  for (double u : x) v += (u - m) * (u - m);
  return v / static_cast<double>(x.size());
}

}  // namespace

TEST(TaskSpec, ExactlyTheFieldsOfItsKind) {
  EXPECT_NO_THROW(TaskSpec::forecast(24).validate());
  auto t = TaskSpec::forecast(24);
  t.n_classes = 3;
  EXPECT_TRUE(throws_kind([&] { t.validate(); }, ErrorKind::InvalidInput));
  auto c = TaskSpec::classification(2);
  c.horizon = 4;
  EXPECT_TRUE(throws_kind([&] { c.validate(); }, ErrorKind::InvalidInput));
  EXPECT_TRUE(throws_kind([] { TaskSpec::classification(1).validate(); }, ErrorKind::InvalidInput));
  EXPECT_TRUE(throws_kind([] { TaskSpec::imputation({0.0}).validate(); }, ErrorKind::InvalidInput));
  EXPECT_TRUE(throws_kind([] { TaskSpec::anomaly(1.0).validate(); }, ErrorKind::InvalidInput));
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.early_stop_patience = 0;
  EXPECT_TRUE(throws_kind([&] { t.validate(); }, ErrorKind::InvalidInput));
  EXPECT_EQ(parse_ablation_arm("no_pretrain_freeze"), AblationArm::no_pretrain_freeze);
  EXPECT_TRUE(throws_kind([] { parse_ablation_arm("frozen"); }, ErrorKind::InvalidInput));
}

TEST(RunSpecJson, RoundTripAndUnknownKeys) {
  auto s = fixtures::small_forecast_spec();
  const auto back = run_spec_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
  auto j = to_json(s);
  j["train"]["epoch"] = 3;
  EXPECT_TRUE(throws_kind([&] { run_spec_from_json(j); }, ErrorKind::InvalidInput));
  j = to_json(s);
  j["backbone"]["d_model"] = "wide";
  EXPECT_TRUE(throws_kind([&] { run_spec_from_json(j); }, ErrorKind::InvalidInput));
  const auto a = task_spec_from_json({{"kind", "anomaly"}, {"anomaly_ratio", 0.01}});
  EXPECT_DOUBLE_EQ(*a.anomaly_quantile, 0.99);
}

TEST(Ablation, ArmsMapToInitAndMask) {
  const auto cfg = tiny_backbone();
  auto rng = seeded_rng(1);
  const auto weights = backbone::init_random(cfg, rng);

  auto r1 = seeded_rng(2);
  EXPECT_TRUE(throws_kind([&] { make_ablation(AblationArm::fpt, cfg, r1, nullptr); }, ErrorKind::MissingWeights));
  EXPECT_TRUE(throws_kind([&] { make_ablation(AblationArm::no_freeze, cfg, r1, nullptr); }, ErrorKind::MissingWeights));

  auto r2 = seeded_rng(2);
  const auto npf = make_ablation(AblationArm::no_pretrain_freeze, cfg, r2);
  for (const auto& name : npf.store.names())
    EXPECT_EQ(npf.mask.is_trainable(name), !backbone::is_frozen_block_tensor(name)) << name;

  auto r3 = seeded_rng(2);
  const auto g0 = make_ablation(AblationArm::gpt0, cfg, r3);
  EXPECT_EQ(g0.cfg.n_layers, 0u);
  EXPECT_FALSE(g0.store.contains("blocks.0.ln1.gamma"));

  auto r4 = seeded_rng(2);
  const auto nf = make_ablation(AblationArm::no_freeze, cfg, r4, &weights);
  EXPECT_EQ(nf.mask.trainable.size(), nf.store.size());
  EXPECT_EQ(nf.store, weights);
}

TEST(Ablation, TransferKeepsFreshTensorsTheWeightsLack) {
  auto cfg = tiny_backbone();
  auto rng = seeded_rng(1);
  auto donor_cfg = cfg;
  donor_cfg.n_layers = 3;
  donor_cfg.head_out = 7;
  donor_cfg.max_tokens = 20;
  const auto weights = backbone::init_random(donor_cfg, rng);
  auto r = seeded_rng(5);
  const auto m = make_ablation(AblationArm::fpt, cfg, r, &weights);
  EXPECT_EQ(m.store.at("blocks.1.attn.wq"), weights.at("blocks.1.attn.wq"));
  EXPECT_NE(m.store.at("output_head.w").data, std::vector<float>(m.store.at("output_head.w").numel(), 0.0f));
  EXPECT_NE(m.store.at("output_head.w").shape, weights.at("output_head.w").shape);
  const auto& pos = m.store.at("pos_embedding").data;
  EXPECT_TRUE(std::equal(pos.begin(), pos.end(), weights.at("pos_embedding").data.begin()));

  auto deeper = cfg;
  deeper.n_layers = 4;
  auto r2 = seeded_rng(5);
  EXPECT_TRUE(throws_kind([&] { make_ablation(AblationArm::fpt, deeper, r2, &weights); }, ErrorKind::ShapeError));
}

TEST(Ablation, FptAndNoFreezeIdenticalAtStepZero) {
  const auto cfg = tiny_backbone();
  auto rng = seeded_rng(1);
  const auto weights = backbone::init_random(cfg, rng);
  auto ra = seeded_rng(3), rb = seeded_rng(3);
  const auto a = make_ablation(AblationArm::fpt, cfg, ra, &weights);
  const auto b = make_ablation(AblationArm::no_freeze, cfg, rb, &weights);
  std::vector<backbone::Example<float>> ex(5);
  for (auto& e : ex) {
    e.tokens = MatrixF(11, 16);
    for (auto& v : e.tokens.flat()) v = static_cast<float>(rng.gaussian());
  }
  EXPECT_EQ(predict(a.store, a.cfg, ex), predict(b.store, b.cfg, ex));
}

TEST(Quantile, InterpolatesAndIsMonotone) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2}, 0.25), 1.25);
  auto rng = seeded_rng(4);
  std::vector<double> v(500);
  for (auto& x : v) x = rng.gaussian();
  double prev = -1e300;
  for (double q = 0.0; q <= 1.0; q += 0.01) {
    const double t = quantile(v, q);
    EXPECT_GE(t, prev);
    prev = t;
  }
}

TEST(Forecast, SinusoidBeatsBaselineAndIsDeterministic) {
  const auto d = fixtures::sinusoid(3000);
  const auto spec = fixtures::small_forecast_spec();
  const auto a = run_forecast(d, spec);
  const auto b = run_forecast(d, spec);
  const double mse = a.report.value("O=24", "MSE");
  EXPECT_LT(mse, 0.05);
  EXPECT_LT(mse, a.report.extra["baseline"]["repeat_last"]["MSE"].get<double>());
  EXPECT_EQ(a.report.to_json().dump(), b.report.to_json().dump());
  EXPECT_EQ(a.store, b.store);
  EXPECT_EQ(a.cfg.head_out, 24u);

  const auto& steps = a.history.first_epoch_steps;
  ASSERT_GE(steps.size(), 8u);
  for (double l : steps) EXPECT_TRUE(std::isfinite(l));
  const std::size_t q = steps.size() / 4;
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < q; ++i) {
    head += steps[i];
    tail += steps[steps.size() - 1 - i];
  }
  EXPECT_LT(tail, head);
}

TEST(Forecast, OutputLengthMatchesHorizon) {
  const auto d = fixtures::sinusoid(1200);
  auto spec = fixtures::small_forecast_spec(1);
  spec.task = TaskSpec::forecast(12);
  const auto r = run_forecast(d, spec);
  EXPECT_EQ(r.cfg.head_out, 12u);
  backbone::Example<float> ex;
  ex.tokens = MatrixF(11, 16, 0.1f);
  EXPECT_EQ(predict(r.store, r.cfg, std::span(&ex, 1)).front().size(), 12u);
}

TEST(Forecast, ErrorsPropagate) {
  const auto d = fixtures::sinusoid(200);
  EXPECT_TRUE(throws_kind([&] { run_forecast(d, fixtures::small_forecast_spec(1)); }, ErrorKind::InsufficientData));
  auto spec = fixtures::small_forecast_spec(1);
  spec.train.ablation = AblationArm::fpt;
  EXPECT_TRUE(throws_kind([&] { run_forecast(fixtures::sinusoid(1200), spec); }, ErrorKind::MissingWeights));
}

TEST(Imputation, RatioRowsAverageAndBaseline) {
  const auto d = fixtures::sinusoid(3000);
  auto spec = fixtures::small_forecast_spec();
  spec.task = TaskSpec::imputation({0.125, 0.25, 0.375, 0.5});
  const auto r = run_imputation(d, spec);
  ASSERT_EQ(r.report.rows.size(), 5u);
  EXPECT_EQ(r.report.rows.back().scope, "avg");
  const double m = r.report.value("ratio=0.125", "MSE");
  EXPECT_LT(m, variance(d));
  EXPECT_LT(m, r.report.extra["baseline"]["window_mean"]["ratio=0.125"]["MSE"].get<double>());
  EXPECT_EQ(r.report.extra["baseline"]["window_mean"]["ratio=0.125"]["masked_points"].get<std::size_t>() % 12, 0u);
}

TEST(Imputation, TinyRatioStillMasksOnePoint) {
  const auto d = fixtures::sinusoid(1200);
  auto spec = fixtures::small_forecast_spec(1);
  spec.task = TaskSpec::imputation({1e-4});
  const auto r = run_imputation(d, spec);
  const auto n = r.report.extra["baseline"]["window_mean"]["ratio=0.0001"]["masked_points"].get<std::size_t>();
  EXPECT_GE(n, 1u);
  EXPECT_TRUE(std::isfinite(r.report.value("ratio=0.0001", "MSE")));
}

TEST(Imputation, MaskChannelWidensTokens) {
  const auto d = fixtures::sinusoid(1200);
  auto spec = fixtures::small_forecast_spec(1);
  spec.task = TaskSpec::imputation({0.25});
  spec.task.mask_channel = true;
  const auto r = run_imputation(d, spec);
  EXPECT_EQ(r.cfg.patch_len, 32u);
}

TEST(Classification, SineVersusSquare) {
  const auto d = fixtures::sine_vs_square(200, 128, 5);
  auto spec = fixtures::small_forecast_spec(40);
  spec.task = TaskSpec::classification(2);
  spec.train.batch_size = 16;
  spec.train.early_stop_patience = 5;
  const auto r = run_classification(d, spec);
  EXPECT_GE(r.report.value("test", "accuracy"), 0.95);
  for (auto k : r.report.extra["predicted"].get<std::vector<std::size_t>>()) EXPECT_LT(k, 2u);
}

TEST(Classification, RejectsDegenerateLabels) {
  auto d = fixtures::sine_vs_square(20, 64, 5);
  auto spec = fixtures::small_forecast_spec(1);
  spec.task = TaskSpec::classification(2);
  auto single = d;
  single.labels = std::vector<int>(20, 1);
  EXPECT_TRUE(throws_kind([&] { run_classification(single, spec); }, ErrorKind::InvalidInput));
  auto unlabeled = d;
  unlabeled.labels.reset();
  EXPECT_TRUE(throws_kind([&] { run_classification(unlabeled, spec); }, ErrorKind::InvalidInput));
  auto out_of_range = d;
  (*out_of_range.labels)[3] = 2;
  EXPECT_TRUE(throws_kind([&] { run_classification(out_of_range, spec); }, ErrorKind::InvalidInput));
}

TEST(Anomaly, SpikesAreAllFlagged) {
  const auto d = fixtures::spiky_sinusoid(2000, 0.2, 20);
  auto spec = fixtures::small_forecast_spec(8);
  spec.task = TaskSpec::anomaly(0.99);
  spec.window = {96, 0, 4, false};
  const auto r = run_anomaly(d, spec);
  EXPECT_EQ(r.report.value("test", "recall"), 1.0);
  // Flagging every test point would give precision 20/400.
  const double flag_all_f1 = 2 * 0.05 / 1.05;
  EXPECT_GT(r.report.value("test", "F1"), 3 * flag_all_f1);
}

TEST(Anomaly, AllNormalTestReportsUndefinedRecall) {
  auto d = fixtures::sinusoid(1200);
  d.labels = std::vector<int>(1200, 0);
  auto spec = fixtures::small_forecast_spec(2);
  spec.task = TaskSpec::anomaly(0.99);
  spec.window = {96, 0, 8, false};
  const auto r = run_anomaly(d, spec);
  EXPECT_TRUE(std::isnan(r.report.value("test", "recall")));
  EXPECT_EQ(r.report.value("test", "F1"), 0.0);
  EXPECT_FALSE(r.report.warnings.empty());
}

TEST(Anomaly, ThresholdMonotoneInQuantile) {
  auto d = fixtures::spiky_sinusoid(1200, 0.1, 5);
  auto spec = fixtures::small_forecast_spec(2);
  spec.window = {96, 0, 8, false};
  double prev = -1;
  for (double q : {0.5, 0.9, 0.99}) {
    spec.task = TaskSpec::anomaly(q);
    const double t = run_anomaly(d, spec).report.extra["threshold"].get<double>();
    EXPECT_GE(t, prev);
    prev = t;
  }
}

TEST(FewShot, FullPercentEqualsForecastAndRowsPerPercent) {
  const auto d = fixtures::sinusoid(3000);
  const auto spec = fixtures::small_forecast_spec(3);
  const std::vector<double> one{1.0};
  const auto f = run_few_shot(d, one, spec);
  const auto r = run_forecast(d, spec);
  EXPECT_EQ(f.rows.front().values, r.report.rows.front().values);
  const std::vector<double> two{0.05, 0.10};
  const auto g = run_few_shot(fixtures::sinusoid(12000), two, fixtures::small_forecast_spec(1, 16));
  ASSERT_EQ(g.rows.size(), 2u);
  EXPECT_EQ(g.rows[0].scope, "percent=0.05");
  EXPECT_EQ(g.rows[1].scope, "percent=0.1");
}

TEST(FewShot, TenPercentWithinTwiceFullData) {
  const auto d = fixtures::sinusoid(12000, 24.0, 0.0, 0.1);
  const std::vector<double> p{0.10, 1.0};
  const auto r = run_few_shot(d, p, fixtures::small_forecast_spec(20, 8));
  EXPECT_LT(r.value("percent=0.1", "MSE"), 2.0 * r.value("percent=1", "MSE"));
}

TEST(ZeroShot, SourceEqualsTargetMatchesForecast) {
  const auto d = fixtures::sinusoid(3000);
  const auto spec = fixtures::small_forecast_spec(3);
  const auto z = run_zero_shot(d, d, spec, spec.window, ZeroShotMetric::mse);
  const auto f = run_forecast(d, spec);
  EXPECT_EQ(z.report.value("O=24", "MSE"), f.report.value("O=24", "MSE"));
  EXPECT_EQ(z.report.value("O=24", "MAE"), f.report.value("O=24", "MAE"));
  EXPECT_EQ(z.report.extra["parameter_hash_before"], z.report.extra["parameter_hash_after"]);
}

TEST(ZeroShot, PhaseShiftedTargetBeatsNaive) {
  const auto src = fixtures::sinusoid(3000);
  const auto dst = fixtures::sinusoid(3000, 24.0, 1.0, 0.0, 1, "shifted");
  const auto spec = fixtures::small_forecast_spec();
  const auto z = run_zero_shot(src, dst, spec, spec.window, ZeroShotMetric::smape);
  EXPECT_LT(z.report.value("O=24", "sMAPE"), z.report.extra["baseline"]["repeat_last"]["sMAPE"].get<double>());
}

TEST(ZeroShot, IncompatibleWindowsRejected) {
  const auto d = fixtures::sinusoid(1200);
  const auto spec = fixtures::small_forecast_spec(1);
  auto w = spec.window;
  w.lookback = 48;
  EXPECT_TRUE(throws_kind([&] { run_zero_shot(d, d, spec, w, ZeroShotMetric::smape); }, ErrorKind::InvalidInput));
}

TEST(Eval, TrainedStoreReproducesRunMetrics) {
  const auto d = fixtures::sinusoid(1200);
  const auto spec = fixtures::small_forecast_spec(2);
  const auto r = run_forecast(d, spec);
  const auto e = evaluate_forecaster(d, spec, r.store);
  EXPECT_EQ(e.value("O=24", "MSE"), r.report.value("O=24", "MSE"));
  EXPECT_EQ(e.value("O=24", "MAE"), r.report.value("O=24", "MAE"));
  auto other = spec;
  other.backbone.d_model = 16;
  other.backbone.n_heads = 2;
  EXPECT_TRUE(throws_kind([&] { evaluate_forecaster(d, other, r.store); }, ErrorKind::ShapeError));
}
