#include "fpt/metrics/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "fpt/numerics/error.hpp"

namespace fpt::metrics {

ReportRow& MetricReport::add_row(std::string scope) {
  rows.push_back(ReportRow{std::move(scope), {}});
  return rows.back();
}

const ReportRow* MetricReport::find(const std::string& scope) const {
  for (const auto& r : rows)
    if (r.scope == scope) return &r;
  return nullptr;
}

double MetricReport::value(const std::string& scope, const std::string& metric) const {
  const auto* row = find(scope);
  require(row != nullptr, ErrorKind::InvalidInput, "report has no row '" + scope + "'");
  const auto it = row->values.find(metric);
  require(it != row->values.end(), ErrorKind::InvalidInput, "row '" + scope + "' has no metric '" + metric + "'");
  return it->second;
}

void MetricReport::add_average_row() {
  std::vector<const ReportRow*> base;
  for (const auto& r : rows)
    if (r.scope != "avg") base.push_back(&r);
  if (base.empty()) return;
  ReportRow avg{"avg", {}};
  for (const auto& [name, _] : base.front()->values) {
    double sum = 0.0;
    bool everywhere = true;
    for (const auto* r : base) {
      const auto it = r->values.find(name);
      if (it == r->values.end()) {
        everywhere = false;
        break;
      }
      sum += it->second;
    }
    if (everywhere) avg.values[name] = sum / static_cast<double>(base.size());
  }
  rows.push_back(std::move(avg));
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json meta = {{"task", task}, {"dataset", dataset}, {"seed", seed}, {"config_hash", config_hash}};
  if (!warnings.empty()) meta["warnings"] = warnings;
  if (!extra.empty()) meta["extra"] = extra;
  nlohmann::json jrows = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : r.values) m[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    jrows.push_back({{"scope", r.scope}, {"metrics", m}});
  }
  return {{"metadata", meta}, {"rows", jrows}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  const auto& meta = j.at("metadata");
  r.task = meta.value("task", "");
  r.dataset = meta.value("dataset", "");
  r.seed = meta.value("seed", std::uint64_t{0});
  r.config_hash = meta.value("config_hash", "");
  if (meta.contains("warnings")) r.warnings = meta["warnings"].get<std::vector<std::string>>();
  if (meta.contains("extra")) r.extra = meta["extra"];
  for (const auto& jr : j.at("rows")) {
    auto& row = r.add_row(jr.at("scope").get<std::string>());
    for (const auto& [k, v] : jr.at("metrics").items())
      row.values[k] = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  }
  return r;
}

std::string MetricReport::to_csv() const {
  std::set<std::string> columns;
  for (const auto& r : rows)
    for (const auto& [k, _] : r.values) columns.insert(k);
  std::ostringstream out;
  out << "scope";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.scope;
    for (const auto& c : columns) {
      out << ',';
      const auto it = r.values.find(c);
      if (it == r.values.end()) continue;
      if (std::isnan(it->second)) {
        out << "NaN";
      } else {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", it->second);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

void MetricReport::write(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  std::ofstream js(dir / (stem + ".json"));
  require(static_cast<bool>(js), ErrorKind::IoError, "cannot write " + (dir / (stem + ".json")).string());
  js << to_json().dump(2) << '\n';
  std::ofstream csv(dir / (stem + ".csv"));
  require(static_cast<bool>(csv), ErrorKind::IoError, "cannot write " + (dir / (stem + ".csv")).string());
  csv << to_csv();
}

std::string config_hash(const nlohmann::json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fpt::metrics
