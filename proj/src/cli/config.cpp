#include <fstream>

#include "fpt/cli/cli.hpp"

namespace fpt::cli {

namespace fs = std::filesystem;

namespace {

void only_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::InvalidInput, where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::InvalidInput, "unknown key '" + key + "' in " + where);
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : base / p; }

template <class F>
auto json_guard(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, where + ": " + e.what());
  }
}

}  // namespace

data::TimeSeriesDataset DatasetRef::load() const {
  if (synthetic) return data::sinusoid_dataset(n_steps, period, phase, noise, seed, name.empty() ? "sinusoid" : name);
  return data::load_from_manifest(manifest, name);
}

DatasetRef parse_dataset_ref(const nlohmann::json& j, const fs::path& base_dir) {
  return json_guard("dataset", [&] {
    only_keys(j, {"manifest", "name", "synthetic", "n_steps", "period", "phase", "noise", "seed"}, "dataset");
    DatasetRef d;
    if (j.contains("synthetic")) {
      const auto kind = j["synthetic"].get<std::string>();
      require(kind == "sinusoid", ErrorKind::InvalidInput, "unknown synthetic dataset '" + kind + "'");
      require(!j.contains("manifest"), ErrorKind::InvalidInput, "dataset: set manifest or synthetic, not both");
      d.synthetic = true;
      d.name = j.value("name", std::string("sinusoid"));
      d.n_steps = j.value("n_steps", d.n_steps);
      d.period = j.value("period", d.period);
      d.phase = j.value("phase", d.phase);
      d.noise = j.value("noise", d.noise);
      d.seed = j.value("seed", d.seed);
      return d;
    }
    require(j.contains("manifest") && j.contains("name"), ErrorKind::InvalidInput,
            "dataset needs manifest and name (or synthetic)");
    for (auto k : {"n_steps", "period", "phase", "noise", "seed"})
      require(!j.contains(k), ErrorKind::InvalidInput, std::string("dataset: '") + k + "' applies to synthetic only");
    d.manifest = resolve(j["manifest"].get<std::string>(), base_dir);
    d.name = j["name"].get<std::string>();
    require(fs::exists(d.manifest), ErrorKind::IoError, "manifest not found: " + d.manifest.string());
    // name lookup and schema checks happen here, before any compute
    bool listed = false;
    for (const auto& e : data::load_manifest(d.manifest)) listed = listed || e.name == d.name;
    require(listed, ErrorKind::InvalidInput, "dataset '" + d.name + "' not in " + d.manifest.string());
    return d;
  });
}

tasks::DonorConfig parse_donor_config(const nlohmann::json& j) {
  return json_guard("donor", [&] {
    only_keys(j, {"n_series", "series_len", "window_stride", "epochs", "seed"}, "donor");
    tasks::DonorConfig dc;
    dc.n_series = j.value("n_series", dc.n_series);
    dc.series_len = j.value("series_len", dc.series_len);
    dc.window_stride = j.value("window_stride", dc.window_stride);
    dc.epochs = j.value("epochs", dc.epochs);
    dc.seed = j.value("seed", dc.seed);
    require(dc.n_series >= 1 && dc.series_len >= 1 && dc.window_stride >= 1 && dc.epochs >= 1,
            ErrorKind::InvalidInput, "donor sizes must be positive");
    return dc;
  });
}

namespace {

void check_sections(const nlohmann::json& s, const fs::path& base_dir) {
  if (s.contains("fewshot")) {
    only_keys(s["fewshot"], {"percents"}, "fewshot");
    for (double p : s["fewshot"].value("percents", std::vector<double>{}))
      require(p > 0.0 && p <= 1.0, ErrorKind::InvalidInput, "fewshot percents must be in (0, 1]");
  }
  if (s.contains("zeroshot")) {
    const auto& z = s["zeroshot"];
    only_keys(z, {"target", "metric", "stride"}, "zeroshot");
    if (z.contains("target")) parse_dataset_ref(z["target"], base_dir);
    if (z.contains("metric")) tasks::parse_zero_shot_metric(z["metric"].get<std::string>());
  }
  if (s.contains("ablation")) {
    const auto& a = s["ablation"];
    only_keys(a, {"percent", "arms", "synthetic_pretrain", "donor"}, "ablation");
    const double p = a.value("percent", 0.1);
    require(p > 0.0 && p <= 1.0, ErrorKind::InvalidInput, "ablation percent must be in (0, 1]");
    for (const auto& arm : a.value("arms", std::vector<std::string>{})) tasks::parse_ablation_arm(arm);
    if (a.contains("donor")) parse_donor_config(a["donor"]);
  }
  if (s.contains("mix_sweep")) {
    const auto& m = s["mix_sweep"];
    only_keys(m, {"ratios", "mode", "eval_windows", "pca_components", "synthetic_pretrain", "donor"}, "mix_sweep");
    for (double r : m.value("ratios", std::vector<double>{}))
      require(r >= 0.0 && r <= 1.0, ErrorKind::InvalidInput, "mix ratios must be in [0, 1]");
    const auto mode = m.value("mode", std::string("replace"));
    require(mode == "replace" || mode == "interpolate", ErrorKind::InvalidInput, "mix mode must be replace or interpolate");
    if (m.contains("donor")) parse_donor_config(m["donor"]);
  }
  if (s.contains("similarity")) only_keys(s["similarity"], {"eval_windows", "pca_components"}, "similarity");
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir) {
  return json_guard("config", [&] {
    only_keys(j,
              {"dataset", "task", "window", "patch_stride", "backbone", "train", "revin_eps", "weights", "output",
               "seed", "fewshot", "zeroshot", "ablation", "mix_sweep", "similarity"},
              "config");
    require(j.contains("dataset"), ErrorKind::InvalidInput, "config needs a 'dataset' section");
    RunConfig c;
    c.dataset = parse_dataset_ref(j["dataset"], base_dir);
    nlohmann::json run = nlohmann::json::object();
    for (auto k : {"task", "window", "patch_stride", "backbone", "train", "revin_eps"})
      if (j.contains(k)) run[k] = j[k];
    c.run = tasks::run_spec_from_json(run);
    if (j.contains("seed")) c.run.train.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("weights")) {
      c.weights = resolve(j["weights"].get<std::string>(), base_dir);
      require(fs::exists(*c.weights), ErrorKind::IoError, "weights not found: " + c.weights->string());
    }
    if (j.contains("output")) c.output = resolve(j["output"].get<std::string>(), base_dir);
    for (auto k : {"fewshot", "zeroshot", "ablation", "mix_sweep", "similarity"})
      if (j.contains(k)) c.sections[k] = j[k];
    check_sections(c.sections, base_dir);
    return c;
  });
}

RunConfig load_run_config(const fs::path& file) {
  std::ifstream in(file);
  require(in.good(), ErrorKind::IoError, "cannot read config " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, file.string() + ": " + e.what());
  }
  auto c = parse_run_config(j, file.parent_path().empty() ? fs::path(".") : file.parent_path());
  c.source = file;
  return c;
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NumericalFailure:
    case ErrorKind::DegenerateScale:
    case ErrorKind::RankDeficient: return kExitNumerical;
    default: return kExitConfig;
  }
}

}  // namespace fpt::cli
