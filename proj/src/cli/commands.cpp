#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fpt/analysis/analysis.hpp"
#include "fpt/backbone/weights_io.hpp"
#include "fpt/cli/cli.hpp"

namespace fpt::cli {

namespace fs = std::filesystem;

namespace {

using nlohmann::json;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::string weights;
  bool overwrite = false;
};

// Errors raised while computing an analysis are numerical failures by
// contract; argument and file errors before that stay config errors.
struct ComputeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class F>
auto compute(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::MissingWeights) throw;
    throw ComputeError(e.what());
  }
}

void add_globals(CLI::App* sub, Globals& g, bool config_required) {
  auto* c = sub->add_option("--config", g.config, "Run config (JSON)")->check(CLI::ExistingFile);
  if (config_required) c->required();
  sub->add_option("--seed", g.seed, "Seed (overrides the config)");
  sub->add_option("--output", g.output, "Output directory (default: config output, else ./out)");
  sub->add_option("--weights", g.weights, "Weight container directory");
  sub->add_flag("--overwrite", g.overwrite, "Replace existing output files");
}

fs::path output_dir(const Globals& g, const std::optional<fs::path>& from_config = std::nullopt) {
  if (!g.output.empty()) return g.output;
  if (from_config) return *from_config;
  return "out";
}

/// Refuses to clobber existing outputs unless --overwrite, before any compute.
void claim_outputs(const fs::path& dir, std::initializer_list<std::string> names, bool overwrite) {
  for (const auto& n : names) {
    const auto p = dir / n;
    if (!fs::exists(p)) continue;
    require(overwrite, ErrorKind::InvalidInput, p.string() + " exists (pass --overwrite to replace it)");
    fs::remove_all(p);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  require(static_cast<bool>(f), ErrorKind::IoError, "cannot write " + p.string());
  f << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

RunConfig load_config(const Globals& g) {
  auto c = load_run_config(g.config);
  if (g.seed) c.run.train.seed = *g.seed;
  if (!g.weights.empty()) {
    c.weights = fs::path(g.weights);
    require(fs::exists(*c.weights), ErrorKind::IoError, "weights not found: " + g.weights);
  }
  c.run.validate();
  return c;
}

std::optional<backbone::ParameterStore> load_weights_opt(const std::optional<fs::path>& p) {
  if (!p) return std::nullopt;
  return backbone::load_weights(*p);
}

json dataset_json(const DatasetRef& d) {
  if (d.synthetic)
    return {{"synthetic", "sinusoid"}, {"name", d.name},     {"n_steps", d.n_steps}, {"period", d.period},
            {"phase", d.phase},        {"noise", d.noise},   {"seed", d.seed}};
  return {{"manifest", d.manifest.string()}, {"name", d.name}};
}

/// The resolved config, written next to every report for provenance.
json effective_config(const RunConfig& c) {
  json j = tasks::to_json(c.run);
  j["dataset"] = dataset_json(c.dataset);
  j["seed"] = c.run.train.seed;
  if (c.weights) j["weights"] = c.weights->string();
  for (const auto& [k, v] : c.sections.items()) j[k] = v;
  return j;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

void print_rows(std::ostream& out, const metrics::MetricReport& r) {
  for (const auto& row : r.rows) {
    out << row.scope;
    for (const auto& [k, v] : row.values) out << "  " << k << "=" << fmt(v);
    out << '\n';
  }
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> v;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    double x = 0;
    const auto* b = item.data();
    const auto [p, ec] = std::from_chars(b, b + item.size(), x);
    require(ec == std::errc() && p == b + item.size() && !item.empty(), ErrorKind::InvalidInput,
            "bad number '" + item + "' in " + what);
    v.push_back(x);
  }
  require(!v.empty(), ErrorKind::InvalidInput, what + " is empty");
  return v;
}

backbone::MixMode parse_mix_mode(const std::string& s) {
  if (s == "replace") return backbone::MixMode::replace;
  if (s == "interpolate") return backbone::MixMode::interpolate;
  fail(ErrorKind::InvalidInput, "mix mode must be replace or interpolate, got '" + s + "'");
}

/// Plain numeric CSV; a first line that does not parse is taken as a header.
Matrix read_matrix_csv(const fs::path& p) {
  std::ifstream in(p);
  require(in.good(), ErrorKind::IoError, "cannot read " + p.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    bool ok = true;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t"), last = cell.find_last_not_of(" \t");
      cell = first == std::string::npos ? "" : cell.substr(first, last - first + 1);
      double x = 0;
      const auto [q, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (ec != std::errc() || q != cell.data() + cell.size() || cell.empty()) {
        ok = false;
        break;
      }
      row.push_back(x);
    }
    if (!ok) {
      require(rows.empty() && line_no == 1, ErrorKind::FormatError,
              p.string() + ":" + std::to_string(line_no) + ": non-numeric cell");
      continue;
    }
    require(rows.empty() || row.size() == rows[0].size(), ErrorKind::FormatError,
            p.string() + ":" + std::to_string(line_no) + ": ragged row");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::FormatError, p.string() + " has no data rows");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

// ---- task commands ----

struct TaskOpts {
  Globals g;
  std::string percents, target, metric = "smape", arms;
  std::optional<std::size_t> target_stride;
  std::optional<double> percent;
  bool synthetic_pretrain = false;
};

void write_run(const fs::path& dir, const RunConfig& c, const metrics::MetricReport& r,
               const backbone::ParameterStore* store, std::ostream& out) {
  r.write(dir, "report");
  write_json(dir / "config.json", effective_config(c));
  if (store) backbone::save_weights(*store, dir / "weights");
  print_rows(out, r);
  out << "wrote " << (dir / "report.json").string() << '\n';
}

int cmd_train(const TaskOpts& o, std::optional<tasks::TaskKind> expect, std::ostream& out) {
  const auto c = load_config(o.g);
  if (expect)
    require(c.run.task.kind == *expect, ErrorKind::InvalidInput,
            "config task is '" + std::string(tasks::to_string(c.run.task.kind)) + "', this command runs '" +
                std::string(tasks::to_string(*expect)) + "'");
  const auto dir = output_dir(o.g, c.output);
  claim_outputs(dir, {"report.json", "report.csv", "config.json", "weights"}, o.g.overwrite);
  const auto d = c.dataset.load();
  const auto w = load_weights_opt(c.weights);
  const auto* wp = w ? &*w : nullptr;
  tasks::RunResult r;
  switch (c.run.task.kind) {
    case tasks::TaskKind::forecast: r = tasks::run_forecast(d, c.run, wp); break;
    case tasks::TaskKind::imputation: r = tasks::run_imputation(d, c.run, wp); break;
    case tasks::TaskKind::classification: r = tasks::run_classification(d, c.run, wp); break;
    case tasks::TaskKind::anomaly: r = tasks::run_anomaly(d, c.run, wp); break;
  }
  write_run(dir, c, r.report, &r.store, out);
  return kExitOk;
}

int cmd_eval(const TaskOpts& o, std::ostream& out) {
  const auto c = load_config(o.g);
  require(c.run.task.kind == tasks::TaskKind::forecast, ErrorKind::InvalidInput, "eval supports forecasting configs");
  if (!c.weights) fail(ErrorKind::MissingWeights, "eval needs --weights (the weights/ directory of a train run)");
  const auto dir = output_dir(o.g, c.output);
  claim_outputs(dir, {"report.json", "report.csv", "config.json"}, o.g.overwrite);
  const auto store = backbone::load_weights(*c.weights);
  const auto r = tasks::evaluate_forecaster(c.dataset.load(), c.run, store);
  write_run(dir, c, r, nullptr, out);
  return kExitOk;
}

int cmd_fewshot(const TaskOpts& o, std::ostream& out) {
  auto c = load_config(o.g);
  std::vector<double> percents{0.05, 0.10};
  if (!o.percents.empty())
    percents = parse_list(o.percents, "--percents");
  else if (c.sections.contains("fewshot") && c.sections["fewshot"].contains("percents"))
    percents = c.sections["fewshot"]["percents"].get<std::vector<double>>();
  for (double p : percents) require(p > 0.0 && p <= 1.0, ErrorKind::InvalidInput, "percents must be in (0, 1]");
  c.sections["fewshot"]["percents"] = percents;
  const auto dir = output_dir(o.g, c.output);
  claim_outputs(dir, {"report.json", "report.csv", "config.json"}, o.g.overwrite);
  const auto w = load_weights_opt(c.weights);
  const auto r = tasks::run_few_shot(c.dataset.load(), percents, c.run, w ? &*w : nullptr);
  write_run(dir, c, r, nullptr, out);
  return kExitOk;
}

int cmd_zeroshot(const TaskOpts& o, std::ostream& out) {
  auto c = load_config(o.g);
  const json z = c.sections.value("zeroshot", json::object());
  DatasetRef target;
  if (!o.target.empty()) {
    // a name in the source dataset's manifest
    require(!c.dataset.synthetic, ErrorKind::InvalidInput, "--target needs a manifest-backed source dataset");
    target = parse_dataset_ref(json{{"manifest", c.dataset.manifest.string()}, {"name", o.target}}, ".");
  } else {
    require(z.contains("target"), ErrorKind::InvalidInput, "zeroshot needs --target or a zeroshot.target section");
    target = parse_dataset_ref(z["target"], c.source.parent_path().empty() ? fs::path(".") : c.source.parent_path());
  }
  const std::string metric_name = o.metric != "smape" || !z.contains("metric") ? o.metric : z["metric"].get<std::string>();
  const auto metric = tasks::parse_zero_shot_metric(metric_name);
  auto tw = c.run.window;
  if (c.run.task.horizon) tw.horizon = *c.run.task.horizon;
  if (o.target_stride)
    tw.stride = *o.target_stride;
  else if (z.contains("stride"))
    tw.stride = z["stride"].get<std::size_t>();
  c.sections["zeroshot"] = {{"target", dataset_json(target)}, {"metric", metric_name}, {"stride", tw.stride}};
  const auto dir = output_dir(o.g, c.output);
  claim_outputs(dir, {"report.json", "report.csv", "config.json"}, o.g.overwrite);
  const auto w = load_weights_opt(c.weights);
  const auto r = tasks::run_zero_shot(c.dataset.load(), target.load(), c.run, tw, metric, w ? &*w : nullptr);
  write_run(dir, c, r.report, nullptr, out);
  return kExitOk;
}

/// Weights for the pretrained arms: --weights, else a donor when asked for.
std::optional<backbone::ParameterStore> pretrained_or_donor(const RunConfig& c, bool synthetic, const json& section,
                                                            std::ostream& out) {
  if (c.weights) return backbone::load_weights(*c.weights);
  if (!synthetic && !section.value("synthetic_pretrain", false)) return std::nullopt;
  const auto dc = section.contains("donor") ? parse_donor_config(section["donor"]) : tasks::DonorConfig{};
  out << "pretraining synthetic donor (" << dc.n_series << " series, " << dc.epochs << " epochs)\n";
  return tasks::pretrain_synthetic_donor(c.run, dc);
}

int cmd_ablate(const TaskOpts& o, std::ostream& out) {
  auto c = load_config(o.g);
  require(c.run.task.kind == tasks::TaskKind::forecast, ErrorKind::InvalidInput, "ablate runs a forecasting task");
  json a = c.sections.value("ablation", json::object());
  const double percent = o.percent.value_or(a.value("percent", 0.1));
  require(percent > 0.0 && percent <= 1.0, ErrorKind::InvalidInput, "--percent must be in (0, 1]");
  std::vector<tasks::AblationArm> arms(std::begin(tasks::kAllArms), std::end(tasks::kAllArms));
  std::vector<std::string> names;
  if (!o.arms.empty()) {
    std::stringstream s(o.arms);
    for (std::string n; std::getline(s, n, ',');) names.push_back(n);
  } else if (a.contains("arms")) {
    names = a["arms"].get<std::vector<std::string>>();
  }
  if (!names.empty()) {
    arms.clear();
    for (const auto& n : names) arms.push_back(tasks::parse_ablation_arm(n));
  }
  bool needs_weights = false;
  for (auto arm : arms) needs_weights = needs_weights || arm == tasks::AblationArm::fpt || arm == tasks::AblationArm::no_freeze;
  if (needs_weights && !c.weights && !o.synthetic_pretrain && !a.value("synthetic_pretrain", false))
    fail(ErrorKind::MissingWeights, "the fpt and no_freeze arms need --weights or --synthetic-pretrain");
  a["percent"] = percent;
  if (o.synthetic_pretrain) a["synthetic_pretrain"] = true;
  c.sections["ablation"] = a;
  const auto dir = output_dir(o.g, c.output);
  claim_outputs(dir, {"report.json", "report.csv", "config.json"}, o.g.overwrite);
  const auto d = c.dataset.load();
  const auto w = needs_weights ? pretrained_or_donor(c, o.synthetic_pretrain, a, out) : std::nullopt;
  const auto r = tasks::run_ablation(d, c.run, w ? &*w : nullptr, percent, arms);
  write_run(dir, c, r, nullptr, out);
  return kExitOk;
}

// ---- analyze ----

struct AnalyzeOpts {
  Globals g;
  // similarity, mix-sweep
  std::size_t windows = 8, pca = 0;
  std::string ratios = "0,0.25,0.5,0.75,1", mode = "replace";
  bool synthetic_pretrain = false;
  // pca-attn
  std::string x;
  std::size_t m = 1;
  // jacobian
  std::size_t n = 4, d = 3, trials = 50;
  double a_norm = 1.0;
  // convergence
  std::size_t conv_d = 8, conv_trials = 200;
  double sigma = 0.1;
  std::string grid = "16,64,256,1024";
  std::uint64_t problem_seed = 1;
  // sgd-rate
  std::string sigmas = "1,0.1,0.01";
  double eps = 1e-3;
  std::size_t repeats = 20;
  // maxent
  double q = 0.5, gval = 0.5;
};

struct AnalysisOut {
  json params = json::object();
  json result;
  std::string csv;
};

void write_analysis(const std::string& name, std::uint64_t seed, const AnalysisOut& a,
                    const fs::path& dir, std::ostream& out) {
  json j{{"analysis", name}, {"seed", seed}, {"params", a.params}, {"result", a.result}};
  write_json(dir / (name + ".json"), j);
  write_text(dir / (name + ".csv"), a.csv);
  out << "wrote " << (dir / (name + ".json")).string() << '\n';
}

std::string profile_line(const analysis::TokenSimilarityProfile& p) {
  std::string s;
  for (std::size_t l = 0; l < p.mean.size(); ++l) s += (l ? " " : "") + fmt(p.mean[l]);
  return s;
}

int cmd_analyze(const std::string& name, const AnalyzeOpts& o, std::ostream& out) {
  const bool needs_config = name == "similarity" || name == "mix-sweep";
  std::optional<RunConfig> c;
  if (needs_config) {
    require(!o.g.config.empty(), ErrorKind::InvalidInput, name + " needs --config");
    c = load_config(o.g);
  } else if (!o.g.config.empty()) {
    load_run_config(o.g.config);  // validated for consistency, otherwise unused
  }
  const std::uint64_t seed = c ? c->run.train.seed : o.g.seed.value_or(name == "convergence" ? 3 : 0);
  const auto dir = output_dir(o.g, c ? c->output : std::nullopt);
  claim_outputs(dir, {name + ".json", name + ".csv"}, o.g.overwrite);
  AnalysisOut a;

  if (name == "maxent") {
    a.params = {{"q", o.q}, {"g", o.gval}};
    const double l = compute([&] { return analysis::maxent_dual_solve(o.q, o.gval); });
    a.result = {{"lambda", l}};
    a.csv = "q,g,lambda\n" + fmt(o.q) + "," + fmt(o.gval) + "," + fmt(l) + "\n";
    out << "lambda*: " << std::setprecision(12) << l << '\n';
  } else if (name == "pca-attn") {
    const Matrix x = read_matrix_csv(o.x);
    a.params = {{"x", o.x}, {"m", o.m}, {"n_tokens", x.rows()}, {"dim", x.cols()}};
    const auto sol = compute([&] { return analysis::optimal_pca_attention(x, o.m); });
    a.result = analysis::to_json(sol);
    std::ostringstream csv;
    csv << std::setprecision(17) << "index,eigenvalue\n";
    for (std::size_t i = 0; i < sol.eigen.eigenvalues.size(); ++i) csv << i + 1 << ',' << sol.eigen.eigenvalues[i] << '\n';
    a.csv = csv.str();
    out << "objective: " << std::setprecision(12) << sol.objective << '\n';
  } else if (name == "jacobian") {
    a.params = {{"n", o.n}, {"d", o.d}, {"trials", o.trials}, {"a_norm", o.a_norm}};
    const auto audit = compute([&] { return analysis::jacobian_audit(o.n, o.d, o.trials, seed, o.a_norm); });
    a.result = analysis::to_json(audit);
    a.csv = analysis::to_csv(audit);
    out << "holds: " << audit.holds() << "/" << audit.checks.size() << '\n';
  } else if (name == "convergence") {
    std::vector<std::size_t> grid;
    for (double v : parse_list(o.grid, "--grid")) {
      require(v >= 1 && v == std::floor(v), ErrorKind::InvalidInput, "--grid entries must be positive integers");
      grid.push_back(static_cast<std::size_t>(v));
    }
    a.params = {{"d", o.conv_d}, {"sigma", o.sigma}, {"trials", o.conv_trials}, {"grid", grid},
                {"problem_seed", o.problem_seed}};
    const auto r = compute([&] {
      const auto p = analysis::random_convergence_problem(o.conv_d, o.problem_seed);
      return analysis::attention_mean_convergence(p.mu, o.sigma, p.wq, p.wk, p.wv, grid, o.conv_trials, seed);
    });
    a.result = analysis::to_json(r);
    a.csv = analysis::to_csv(r);
    out << "slope: " << fmt(r.slope) << '\n';
  } else if (name == "sgd-rate") {
    const auto sigmas = parse_list(o.sigmas, "--sigmas");
    a.params = {{"sigmas", sigmas}, {"eps", o.eps}, {"repeats", o.repeats}};
    const auto rows = compute([&] { return analysis::sgd_rate_sweep(sigmas, o.eps, o.repeats, seed); });
    a.result = analysis::to_json(std::span<const analysis::SgdRateRow>(rows));
    a.csv = analysis::to_csv(std::span<const analysis::SgdRateRow>(rows));
    for (const auto& r : rows) out << "sigma=" << fmt(r.sigma) << "  steps=" << fmt(r.mean_steps) << '\n';
  } else if (name == "similarity") {
    const json s = c->sections.value("similarity", json::object());
    const std::size_t windows = o.windows != 8 ? o.windows : s.value("eval_windows", o.windows);
    const std::size_t pca = o.pca != 0 ? o.pca : s.value("pca_components", o.pca);
    a.params = {{"config", effective_config(*c)}, {"eval_windows", windows}, {"pca_components", pca},
                {"trained_from", c->weights ? "weights" : "fresh run"}};
    const auto d = c->dataset.load();
    std::optional<backbone::ParameterStore> store;
    if (c->weights) store = backbone::load_weights(*c->weights);
    const auto [soft, pcap] = compute([&] {
      if (!store) store = tasks::run_forecast(d, c->run).store;
      return analysis::forecaster_similarity(*store, c->run, d, windows, pca);
    });
    a.result = {{"softmax", analysis::to_json(soft)}};
    if (pca > 0) a.result["pca"] = analysis::to_json(pcap);
    a.csv = analysis::to_csv(soft);
    out << "mean similarity per layer: " << profile_line(soft) << '\n';
  } else if (name == "mix-sweep") {
    json s = c->sections.value("mix_sweep", json::object());
    const auto ratios = s.contains("ratios") && o.ratios == AnalyzeOpts{}.ratios
                            ? s["ratios"].get<std::vector<double>>()
                            : parse_list(o.ratios, "--ratios");
    analysis::SweepOptions so;
    so.mode = parse_mix_mode(o.mode != "replace" ? o.mode : s.value("mode", o.mode));
    so.eval_windows = o.windows != 8 ? o.windows : s.value("eval_windows", o.windows);
    so.pca_components = o.pca != 0 ? o.pca : s.value("pca_components", o.pca);
    if (!c->weights && !o.synthetic_pretrain && !s.value("synthetic_pretrain", false))
      fail(ErrorKind::MissingWeights, "mix-sweep needs --weights or --synthetic-pretrain");
    a.params = {{"config", effective_config(*c)},
                {"ratios", ratios},
                {"mode", so.mode == backbone::MixMode::replace ? "replace" : "interpolate"},
                {"eval_windows", so.eval_windows},
                {"pca_components", so.pca_components}};
    const auto d = c->dataset.load();
    auto w = c->weights ? std::optional(backbone::load_weights(*c->weights)) : std::nullopt;
    const auto rows = compute([&] {
      if (!w) w = pretrained_or_donor(*c, true, s, out);
      return analysis::mixed_weights_similarity_sweep(&*w, c->run, d, ratios, seed, so);
    });
    a.result = analysis::to_json(std::span<const analysis::SweepRow>(rows));
    a.csv = analysis::to_csv(std::span<const analysis::SweepRow>(rows));
    for (const auto& r : rows)
      out << "ratio=" << fmt(r.ratio) << "  mse=" << fmt(r.test_mse) << "  similarity: " << profile_line(r.similarity)
          << '\n';
  }
  write_analysis(name, seed, a, dir, out);
  return kExitOk;
}

int help_or_usage_exit(const CLI::ParseError& e, CLI::App& app, std::ostream& out, std::ostream& err) {
  if (dynamic_cast<const CLI::CallForHelp*>(&e) || dynamic_cast<const CLI::CallForAllHelp*>(&e)) {
    app.exit(e, out, err);
    return kExitOk;
  }
  err << "error: " << e.what() << '\n';
  err << "run with --help for usage\n";
  return kExitConfig;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fpt: frozen pretrained transformer for time series"};
  app.name("fpt");
  app.require_subcommand(1);

  std::function<int()> action;
  TaskOpts to;
  struct TaskCmd {
    const char* name;
    const char* help;
  };
  const TaskCmd task_cmds[] = {
      {"train", "Train the configured task and write report + weights"},
      {"eval", "Evaluate a trained forecaster (--weights) on the test split"},
      {"impute", "Train and report an imputation task"},
      {"classify", "Train and report a classification task"},
      {"anomaly", "Train and report an anomaly detection task"},
      {"fewshot", "Forecasting on a fraction of the training data"},
      {"zeroshot", "Train on the config dataset, evaluate on another"},
      {"ablate", "Run the ablation arms on a few-shot subset"},
  };
  for (const auto& tc : task_cmds) {
    auto* sub = app.add_subcommand(tc.name, tc.help);
    add_globals(sub, to.g, true);
    const std::string n = tc.name;
    if (n == "fewshot") sub->add_option("--percents", to.percents, "Comma-separated fractions (default 0.05,0.1)");
    if (n == "zeroshot") {
      sub->add_option("--target", to.target, "Target dataset name in the same manifest");
      sub->add_option("--metric", to.metric, "smape | mape | nd | mse")->capture_default_str();
      sub->add_option("--target-stride", to.target_stride, "Window stride on the target");
    }
    if (n == "ablate") {
      sub->add_option("--percent", to.percent, "Few-shot fraction (default 0.1)");
      sub->add_option("--arms", to.arms, "Comma-separated subset of fpt,gpt0,no_freeze,no_pretrain,no_pretrain_freeze");
      sub->add_flag("--synthetic-pretrain", to.synthetic_pretrain,
                    "Pretrain a donor on a disjoint synthetic corpus when no --weights are given");
    }
    sub->callback([&action, &to, &out, n] {
      action = [&to, &out, n] {
        if (n == "train") return cmd_train(to, std::nullopt, out);
        if (n == "impute") return cmd_train(to, tasks::TaskKind::imputation, out);
        if (n == "classify") return cmd_train(to, tasks::TaskKind::classification, out);
        if (n == "anomaly") return cmd_train(to, tasks::TaskKind::anomaly, out);
        if (n == "eval") return cmd_eval(to, out);
        if (n == "fewshot") return cmd_fewshot(to, out);
        if (n == "zeroshot") return cmd_zeroshot(to, out);
        return cmd_ablate(to, out);
      };
    });
  }

  auto* analyze = app.add_subcommand("analyze", "Analysis tools");
  analyze->require_subcommand(1);
  AnalyzeOpts ao;
  struct AnalyzeCmd {
    const char* name;
    const char* help;
  };
  const AnalyzeCmd analyze_cmds[] = {
      {"similarity", "Token similarity per layer of a trained forecaster"},
      {"pca-attn", "Optimal rank-m attention matrix for a token matrix"},
      {"jacobian", "Randomized audit of the attention Jacobian bound"},
      {"convergence", "Error of attention output vs token count"},
      {"sgd-rate", "SGD steps to tolerance vs conditioning"},
      {"maxent", "Max-entropy dual solution"},
      {"mix-sweep", "Token similarity vs pretrained/random weight mix"},
  };
  for (const auto& ac : analyze_cmds) {
    auto* sub = analyze->add_subcommand(ac.name, ac.help);
    const std::string n = ac.name;
    add_globals(sub, ao.g, n == "similarity" || n == "mix-sweep");
    if (n == "similarity" || n == "mix-sweep") {
      sub->add_option("--windows", ao.windows, "Test windows to trace")->capture_default_str();
      sub->add_option("--pca", ao.pca, "Also trace with PCA attention of this many components")->capture_default_str();
    }
    if (n == "mix-sweep") {
      sub->add_option("--ratios", ao.ratios, "Comma-separated random fractions")->capture_default_str();
      sub->add_option("--mode", ao.mode, "replace | interpolate")->capture_default_str();
      sub->add_flag("--synthetic-pretrain", ao.synthetic_pretrain, "Pretrain a donor when no --weights are given");
    }
    if (n == "pca-attn") {
      sub->add_option("--x", ao.x, "Token matrix CSV (rows = tokens)")->required()->check(CLI::ExistingFile);
      sub->add_option("--m", ao.m, "Rank")->required();
    }
    if (n == "jacobian") {
      sub->add_option("--n", ao.n, "Tokens")->capture_default_str();
      sub->add_option("--d", ao.d, "Dimension")->capture_default_str();
      sub->add_option("--trials", ao.trials, "Random instances")->capture_default_str();
      sub->add_option("--a-norm", ao.a_norm, "Max spectral norm of A")->capture_default_str();
    }
    if (n == "convergence") {
      sub->add_option("--d", ao.conv_d, "Dimension")->capture_default_str();
      sub->add_option("--sigma", ao.sigma, "Token noise scale")->capture_default_str();
      sub->add_option("--trials", ao.conv_trials, "Trials per n")->capture_default_str();
      sub->add_option("--grid", ao.grid, "Comma-separated token counts")->capture_default_str();
      sub->add_option("--problem-seed", ao.problem_seed, "Seed of mu and the weights")->capture_default_str();
    }
    if (n == "sgd-rate") {
      sub->add_option("--sigmas", ao.sigmas, "Comma-separated smallest eigenvalues")->capture_default_str();
      sub->add_option("--eps", ao.eps, "Suboptimality target")->capture_default_str();
      sub->add_option("--repeats", ao.repeats, "Seeds per sigma")->capture_default_str();
    }
    if (n == "maxent") {
      sub->add_option("--q", ao.q, "q in (0, 1)")->required();
      sub->add_option("--g", ao.gval, "g in (0, 1)")->required();
    }
    sub->callback([&action, &ao, &out, n] { action = [&ao, &out, n] { return cmd_analyze(n, ao, out); }; });
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("fpt");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return help_or_usage_exit(e, app, out, err);
  }

  try {
    return action ? action() : kExitConfig;
  } catch (const ComputeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: InvalidInput: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: IoError: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace fpt::cli
