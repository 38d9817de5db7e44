#include "fpt/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fpt::data {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '"')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '"')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? comma : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string where(const std::filesystem::path& path, std::size_t row, std::size_t col) {
  return path.string() + " row " + std::to_string(row) + " col " + std::to_string(col);
}

bool looks_like_timestamp_header(const std::string& h) {
  std::string lower;
  for (char c : h) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower == "date" || lower == "time" || lower == "timestamp" || lower == "datetime" || lower == "index" ||
         lower == "t";
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(std::move(line));
  }
  // UTF-8 byte-order mark.
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
  require(!lines.empty(), ErrorKind::FormatError, path.string() + ": empty file");
  return lines;
}

}  // namespace

Frequency parse_frequency(std::string_view name) {
  if (name == "yearly") return Frequency::yearly;
  if (name == "quarterly") return Frequency::quarterly;
  if (name == "monthly") return Frequency::monthly;
  if (name == "weekly") return Frequency::weekly;
  if (name == "daily") return Frequency::daily;
  if (name == "hourly") return Frequency::hourly;
  if (name == "minutely") return Frequency::minutely;
  if (name == "unknown" || name.empty()) return Frequency::unknown;
  fail(ErrorKind::FormatError, "unknown frequency '" + std::string(name) + "'");
}

std::string_view to_string(Frequency f) noexcept {
  switch (f) {
    case Frequency::yearly: return "yearly";
    case Frequency::quarterly: return "quarterly";
    case Frequency::monthly: return "monthly";
    case Frequency::weekly: return "weekly";
    case Frequency::daily: return "daily";
    case Frequency::hourly: return "hourly";
    case Frequency::minutely: return "minutely";
    case Frequency::unknown: return "unknown";
  }
  return "unknown";
}

std::size_t default_seasonal_period(Frequency f) noexcept {
  switch (f) {
    case Frequency::quarterly: return 4;
    case Frequency::monthly: return 12;
    case Frequency::daily: return 7;
    case Frequency::hourly: return 24;
    default: return 1;
  }
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

void SplitSpec::validate() const {
  for (double f : {train_fraction, val_fraction, test_fraction})
    require(f >= 0.0 && f <= 1.0, ErrorKind::InvalidInput, "split fraction outside [0,1]");
  require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) <= 1e-9, ErrorKind::InvalidInput,
          "split fractions must sum to 1");
}

std::size_t SplitBounds::begin(Split s) const noexcept {
  switch (s) {
    case Split::train: return train_begin;
    case Split::val: return val_begin;
    case Split::test: return test_begin;
  }
  return 0;
}

std::size_t SplitBounds::end(Split s) const noexcept {
  switch (s) {
    case Split::train: return train_end;
    case Split::val: return val_end;
    case Split::test: return test_end;
  }
  return 0;
}

SplitBounds SplitBounds::from_fractions(std::size_t n_steps, const SplitSpec& spec) {
  spec.validate();
  const auto n = static_cast<double>(n_steps);
  SplitBounds b;
  b.train_end = static_cast<std::size_t>(std::floor(n * spec.train_fraction + 1e-9));
  b.val_begin = b.train_end;
  b.val_end = std::min(n_steps, b.train_end + static_cast<std::size_t>(std::floor(n * spec.val_fraction + 1e-9)));
  b.test_begin = b.val_end;
  b.test_end = n_steps;
  return b;
}

Vector TimeSeriesDataset::channel(std::size_t c) const {
  Vector out(n_steps());
  for (std::size_t t = 0; t < n_steps(); ++t) out[t] = values(t, c);
  return out;
}

Matrix TimeSeriesDataset::segment(Split s) const {
  const std::size_t b = bounds.begin(s);
  const std::size_t e = bounds.end(s);
  Matrix out(e - b, n_channels());
  for (std::size_t t = b; t < e; ++t)
    for (std::size_t c = 0; c < n_channels(); ++c) out(t - b, c) = values(t, c);
  return out;
}

void TimeSeriesDataset::validate() const {
  require(n_steps() >= 1 && n_channels() >= 1, ErrorKind::InvalidInput, name + ": dataset must be non-empty");
  require(values.all_finite(), ErrorKind::InvalidInput, name + ": non-finite values");
  require(bounds.train_begin <= bounds.train_end && bounds.train_end <= bounds.val_begin &&
              bounds.val_begin <= bounds.val_end && bounds.val_end <= bounds.test_begin &&
              bounds.test_begin <= bounds.test_end && bounds.test_end == n_steps(),
          ErrorKind::InvalidInput, name + ": inconsistent split bounds");
  require(seasonal_period >= 1, ErrorKind::InvalidInput, name + ": seasonal period must be positive");
  if (labels)
    require(labels->size() == n_steps() || labels->size() == n_channels(), ErrorKind::InvalidInput,
            name + ": label count matches neither timesteps nor series");
}

TimeSeriesDataset make_dataset(std::string name, Matrix values, Frequency frequency, SplitSpec split) {
  TimeSeriesDataset d;
  d.name = std::move(name);
  d.values = std::move(values);
  d.frequency = frequency;
  d.seasonal_period = default_seasonal_period(frequency);
  d.bounds = SplitBounds::from_fractions(d.values.rows(), split);
  for (std::size_t c = 0; c < d.values.cols(); ++c) d.channel_names.push_back("c" + std::to_string(c));
  d.validate();
  return d;
}

TimeSeriesDataset sinusoid_dataset(std::size_t n_steps, double period, double phase, double noise, std::uint64_t seed,
                                   std::string name) {
  require(period > 0.0 && noise >= 0.0, ErrorKind::InvalidInput, "sinusoid needs period > 0 and noise >= 0");
  Matrix v(n_steps, 1);
  RandomStream rng(seed);
  for (std::size_t t = 0; t < n_steps; ++t)
    v(t, 0) = std::sin(2 * M_PI * static_cast<double>(t) / period + phase) + noise * rng.gaussian();
  return make_dataset(std::move(name), std::move(v), Frequency::hourly);
}

TimeSeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  const auto lines = read_lines(path);
  const auto header = split_line(lines[0]);
  require(!header.empty(), ErrorKind::FormatError, path.string() + ": empty header");

  bool has_timestamp = schema.timestamp == TimestampColumn::present;
  if (schema.timestamp == TimestampColumn::automatic) {
    has_timestamp = looks_like_timestamp_header(header[0]);
    if (!has_timestamp && lines.size() > 1) has_timestamp = !parse_number(split_line(lines[1])[0]).has_value();
  }

  std::optional<std::size_t> label_col;
  if (schema.label_column) {
    const auto it = std::find(header.begin(), header.end(), *schema.label_column);
    require(it != header.end(), ErrorKind::FormatError,
            path.string() + ": label column '" + *schema.label_column + "' not found");
    label_col = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<std::size_t> value_cols;
  for (std::size_t c = has_timestamp ? 1 : 0; c < header.size(); ++c)
    if (!label_col || c != *label_col) value_cols.push_back(c);
  require(!value_cols.empty(), ErrorKind::FormatError, path.string() + ": no value columns");

  const std::size_t n_rows = lines.size() - 1;
  require(n_rows >= 1, ErrorKind::FormatError, path.string() + ": no data rows");
  Matrix values(n_rows, value_cols.size());
  std::vector<int> labels;
  std::string prev_text;
  std::optional<double> prev_index;

  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto cells = split_line(lines[r + 1]);
    require(cells.size() == header.size(), ErrorKind::FormatError,
            path.string() + " row " + std::to_string(r + 1) + ": expected " + std::to_string(header.size()) +
                " cells, got " + std::to_string(cells.size()));
    if (has_timestamp) {
      const std::string& ts = cells[0];
      require(!ts.empty(), ErrorKind::FormatError, where(path, r + 1, 0) + ": empty timestamp");
      if (const auto idx = parse_number(ts)) {
        require(!prev_index || *idx > *prev_index, ErrorKind::FormatError,
                where(path, r + 1, 0) + ": timestamps not strictly increasing");
        prev_index = idx;
      } else {
        require(prev_text.empty() || ts > prev_text, ErrorKind::FormatError,
                where(path, r + 1, 0) + ": timestamps not strictly increasing");
        prev_text = ts;
      }
    }
    for (std::size_t j = 0; j < value_cols.size(); ++j) {
      const auto v = parse_number(cells[value_cols[j]]);
      require(v.has_value(), ErrorKind::FormatError,
              where(path, r + 1, value_cols[j]) + ": not a finite number '" + cells[value_cols[j]] + "'");
      values(r, j) = *v;
    }
    if (label_col) {
      const auto v = parse_number(cells[*label_col]);
      require(v.has_value() && *v == std::floor(*v), ErrorKind::FormatError,
              where(path, r + 1, *label_col) + ": label must be an integer");
      labels.push_back(static_cast<int>(*v));
    }
  }

  TimeSeriesDataset d;
  d.name = path.stem().string();
  d.values = std::move(values);
  for (std::size_t c : value_cols) d.channel_names.push_back(header[c]);
  if (label_col) d.labels = std::move(labels);
  d.bounds = SplitBounds::from_fractions(n_rows, SplitSpec{});
  d.validate();
  return d;
}

TimeSeriesDataset load_series_rows_csv(const std::filesystem::path& path, const std::string& label_column) {
  const auto lines = read_lines(path);
  const auto header = split_line(lines[0]);
  const auto it = std::find(header.begin(), header.end(), label_column);
  require(it != header.end(), ErrorKind::FormatError, path.string() + ": label column '" + label_column + "' not found");
  const auto label_col = static_cast<std::size_t>(it - header.begin());
  const std::size_t n_series = lines.size() - 1;
  const std::size_t length = header.size() - 1;
  require(n_series >= 1 && length >= 1, ErrorKind::FormatError, path.string() + ": no series");

  Matrix values(length, n_series);
  std::vector<int> labels(n_series);
  for (std::size_t s = 0; s < n_series; ++s) {
    const auto cells = split_line(lines[s + 1]);
    require(cells.size() == header.size(), ErrorKind::FormatError,
            path.string() + " row " + std::to_string(s + 1) + ": wrong cell count");
    std::size_t t = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_number(cells[c]);
      require(v.has_value(), ErrorKind::FormatError, where(path, s + 1, c) + ": not a finite number");
      if (c == label_col) {
        require(*v == std::floor(*v), ErrorKind::FormatError, where(path, s + 1, c) + ": label must be an integer");
        labels[s] = static_cast<int>(*v);
      } else {
        values(t++, s) = *v;
      }
    }
  }
  TimeSeriesDataset d;
  d.name = path.stem().string();
  d.values = std::move(values);
  for (std::size_t s = 0; s < n_series; ++s) d.channel_names.push_back("s" + std::to_string(s));
  d.labels = std::move(labels);
  d.bounds = SplitBounds::from_fractions(length, SplitSpec{});
  d.validate();
  return d;
}

void write_csv(const std::filesystem::path& path, const TimeSeriesDataset& d) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write " + path.string());
  const bool per_step_labels = d.labels && d.labels->size() == d.n_steps();
  out << "t";
  for (std::size_t c = 0; c < d.n_channels(); ++c)
    out << ',' << (c < d.channel_names.size() ? d.channel_names[c] : "c" + std::to_string(c));
  if (per_step_labels) out << ",label";
  out << '\n' << std::setprecision(17);
  for (std::size_t t = 0; t < d.n_steps(); ++t) {
    out << t;
    for (std::size_t c = 0; c < d.n_channels(); ++c) out << ',' << d.values(t, c);
    if (per_step_labels) out << ',' << (*d.labels)[t];
    out << '\n';
  }
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, manifest_path.string() + ": " + e.what());
  }
  require(j.is_object(), ErrorKind::FormatError, manifest_path.string() + ": manifest must be a JSON object");
  std::vector<ManifestEntry> entries;
  for (const auto& [name, spec] : j.items()) {
    require(spec.is_object() && spec.contains("path") && spec["path"].is_string(), ErrorKind::FormatError,
            "manifest entry '" + name + "' needs a string \"path\"");
    ManifestEntry e;
    e.name = name;
    e.path = spec["path"].get<std::string>();
    if (e.path.is_relative()) e.path = manifest_path.parent_path() / e.path;
    if (spec.contains("frequency")) e.frequency = parse_frequency(spec["frequency"].get<std::string>());
    if (spec.contains("seasonal_period")) e.seasonal_period = spec["seasonal_period"].get<std::size_t>();
    if (spec.contains("split")) {
      const auto& s = spec["split"];
      require(s.is_array() && s.size() == 3, ErrorKind::FormatError, "manifest entry '" + name + "': split needs 3 values");
      e.split = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
      e.split.validate();
    }
    if (spec.contains("label_column") && !spec["label_column"].is_null())
      e.label_column = spec["label_column"].get<std::string>();
    if (spec.contains("layout")) {
      const auto layout = spec["layout"].get<std::string>();
      if (layout == "series_rows")
        e.layout = CsvLayout::series_rows;
      else
        require(layout == "timeseries", ErrorKind::FormatError, "manifest entry '" + name + "': unknown layout");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

TimeSeriesDataset load_entry(const ManifestEntry& entry) {
  TimeSeriesDataset d;
  if (entry.layout == CsvLayout::series_rows) {
    require(entry.label_column.has_value(), ErrorKind::FormatError,
            entry.name + ": series_rows layout needs label_column");
    d = load_series_rows_csv(entry.path, *entry.label_column);
  } else {
    d = load_csv(entry.path, CsvSchema{TimestampColumn::automatic, entry.label_column});
  }
  d.name = entry.name;
  d.frequency = entry.frequency;
  d.seasonal_period = entry.seasonal_period.value_or(default_seasonal_period(entry.frequency));
  d.bounds = SplitBounds::from_fractions(d.n_steps(), entry.split);
  d.validate();
  return d;
}

TimeSeriesDataset load_from_manifest(const std::filesystem::path& manifest_path, const std::string& name) {
  for (const auto& e : load_manifest(manifest_path))
    if (e.name == name) return load_entry(e);
  fail(ErrorKind::InvalidInput, "dataset '" + name + "' not in manifest " + manifest_path.string());
}

std::vector<TimeSeriesDataset> channel_split(const TimeSeriesDataset& d) {
  std::vector<TimeSeriesDataset> out;
  out.reserve(d.n_channels());
  for (std::size_t c = 0; c < d.n_channels(); ++c) {
    TimeSeriesDataset u;
    u.name = d.n_channels() == 1 ? d.name : d.name + "/" + (c < d.channel_names.size() ? d.channel_names[c] : std::to_string(c));
    u.values = Matrix(d.n_steps(), 1, d.channel(c));
    u.frequency = d.frequency;
    u.seasonal_period = d.seasonal_period;
    u.bounds = d.bounds;
    if (d.labels && d.labels->size() == d.n_steps()) u.labels = d.labels;
    if (d.labels && d.labels->size() != d.n_steps()) u.labels = std::vector<int>{(*d.labels)[c]};
    u.channel_names = {c < d.channel_names.size() ? d.channel_names[c] : "c" + std::to_string(c)};
    out.push_back(std::move(u));
  }
  return out;
}

std::size_t window_count(std::size_t segment_len, const WindowSpec& w) {
  require(w.lookback >= 1 && w.stride >= 1, ErrorKind::InvalidInput, "window lookback and stride must be positive");
  if (segment_len < w.lookback + w.horizon) return 0;
  return (segment_len - w.lookback - w.horizon) / w.stride + 1;
}

std::vector<Window> make_windows(const TimeSeriesDataset& d, const WindowSpec& w, Split split) {
  std::size_t begin = d.bounds.begin(split);
  const std::size_t end = d.bounds.end(split);
  if (w.extend_into_previous && split != Split::train) begin -= std::min(w.lookback, begin);
  const std::size_t seg_len = end - begin;
  const std::size_t count = window_count(seg_len, w);
  require(count > 0, ErrorKind::InsufficientData,
          d.name + " " + std::string(to_string(split)) + " segment of " + std::to_string(seg_len) +
              " steps is shorter than lookback+horizon = " + std::to_string(w.lookback + w.horizon));
  std::vector<Window> out;
  out.reserve(count);
  const std::size_t c = d.n_channels();
  for (std::size_t k = 0; k < count; ++k) {
    Window win;
    win.start = begin + k * w.stride;
    win.input = Matrix(w.lookback, c);
    win.target = Matrix(w.horizon, c);
    for (std::size_t t = 0; t < w.lookback; ++t)
      for (std::size_t j = 0; j < c; ++j) win.input(t, j) = d.values(win.start + t, j);
    for (std::size_t t = 0; t < w.horizon; ++t)
      for (std::size_t j = 0; j < c; ++j) win.target(t, j) = d.values(win.start + w.lookback + t, j);
    out.push_back(std::move(win));
  }
  return out;
}

TimeSeriesDataset few_shot_subset(const TimeSeriesDataset& d, double percent, SubsetPosition position) {
  require(percent > 0.0 && percent <= 1.0, ErrorKind::InvalidInput, "few-shot percent must be in (0, 1]");
  const std::size_t train_len = d.bounds.length(Split::train);
  const auto keep = std::min<std::size_t>(
      train_len, static_cast<std::size_t>(std::ceil(percent * static_cast<double>(train_len) - 1e-9)));
  TimeSeriesDataset out = d;
  if (position == SubsetPosition::suffix)
    out.bounds.train_begin = d.bounds.train_end - keep;
  else
    out.bounds.train_end = d.bounds.train_begin + keep;
  return out;
}

std::size_t ImputationMask::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.flat().begin(), mask.flat().end(), 0.0));
}

ImputationMask random_mask_count(std::size_t n_steps, std::size_t n_channels, std::size_t n_masked,
                                 RandomStream& rng) {
  const std::size_t total = n_steps * n_channels;
  require(n_masked <= total, ErrorKind::InvalidInput, "cannot mask more cells than exist");
  ImputationMask m{Matrix(n_steps, n_channels, 1.0), total ? static_cast<double>(n_masked) / static_cast<double>(total) : 0.0};
  // Partial Fisher-Yates: the first n_masked slots of a random permutation.
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  for (std::size_t i = 0; i < n_masked; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(idx[i], idx[j]);
    m.mask.flat()[idx[i]] = 0.0;
  }
  return m;
}

ImputationMask random_mask(std::size_t n_steps, std::size_t n_channels, double ratio, RandomStream& rng) {
  require(ratio > 0.0 && ratio < 1.0, ErrorKind::InvalidInput, "mask ratio must be in (0, 1)");
  const auto n = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_steps * n_channels)));
  auto m = random_mask_count(n_steps, n_channels, n, rng);
  m.ratio = ratio;
  return m;
}

}  // namespace fpt::data
