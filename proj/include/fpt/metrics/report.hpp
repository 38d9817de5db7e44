#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fpt::metrics {

struct ReportRow {
  std::string scope;                     // e.g. "O=96", "ratio=0.25", "avg"
  std::map<std::string, double> values;  // metric name -> value (NaN allowed)
};

/// Named metric rows plus run metadata. Serialized as
/// {"metadata":{...},"rows":[{"scope":..,"metrics":{..}}]}; NaN becomes null.
struct MetricReport {
  std::string task;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
  nlohmann::json extra = nlohmann::json::object();

  ReportRow& add_row(std::string scope);
  const ReportRow* find(const std::string& scope) const;
  double value(const std::string& scope, const std::string& metric) const;

  /// Append an "avg" row holding the arithmetic mean of every metric over
  /// the existing rows (metrics missing from any row are skipped).
  void add_average_row();

  nlohmann::json to_json() const;
  std::string to_csv() const;
  static MetricReport from_json(const nlohmann::json& j);

  /// Writes <stem>.json and <stem>.csv into dir.
  void write(const std::filesystem::path& dir, const std::string& stem) const;
};

/// FNV-1a over the canonical (sorted-key, compact) dump of a JSON value.
std::string config_hash(const nlohmann::json& config);

}  // namespace fpt::metrics
