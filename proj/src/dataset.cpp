#include "crashstack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "crashstack/error.hpp"
#include "crashstack/text.hpp"

namespace crashstack {
namespace {

double SegmentYear::*const kNumericFields[] = {
    &SegmentYear::crashes,       &SegmentYear::aadt_thousands,
    &SegmentYear::length_miles,  &SegmentYear::drv_major_com,
    &SegmentYear::drv_minor_com, &SegmentYear::drv_major_ind,
    &SegmentYear::drv_minor_ind, &SegmentYear::offset_ft};

std::string issues_to_string(const std::vector<RowIssue>& issues) {
  std::ostringstream ss;
  ss << issues.size() << " invalid row(s):";
  for (const auto& issue : issues) {
    ss << "\n  line " << issue.line << ": " << issue.message;
  }
  return ss.str();
}

// Issues for a single record, excluding cross-row checks.
std::vector<std::string> record_issues(const SegmentYear& r) {
  std::vector<std::string> out;
  auto bad = [&](const std::string& msg) { out.push_back(msg); };
  if (r.segment_id.empty()) bad("empty segment_id");
  if (!(r.crashes >= 0) || r.crashes != std::floor(r.crashes)) {
    bad("crashes " + format_double(r.crashes) +
        " is not a non-negative integer");
  }
  if (!(r.aadt_thousands > 0) || !std::isfinite(r.aadt_thousands)) {
    bad("aadt_thousands " + format_double(r.aadt_thousands) +
        " must be positive");
  }
  if (!(r.length_miles >= kMinSegmentMiles) || !std::isfinite(r.length_miles)) {
    bad("length_miles " + format_double(r.length_miles) +
        " is below the 0.1-mile minimum (segments shorter than 0.1 miles "
        "are excluded)");
  }
  const std::pair<const char*, double> nonneg[] = {
      {"drv_major_com", r.drv_major_com}, {"drv_minor_com", r.drv_minor_com},
      {"drv_major_ind", r.drv_major_ind}, {"drv_minor_ind", r.drv_minor_ind},
      {"offset_ft", r.offset_ft}};
  for (const auto& [name, v] : nonneg) {
    if (!(v >= 0) || !std::isfinite(v)) {
      bad(std::string(name) + " " + format_double(v) + " must be non-negative");
    }
  }
  return out;
}

std::string key_of(const SegmentYear& r) {
  return r.segment_id + "\x1f" + std::to_string(r.year);
}

double log_or_throw(double v, const std::string& col, const std::string& seg) {
  if (!(v > 0)) {
    throw DataError("cannot log-transform " + col + " = " + format_double(v) +
                    " (segment " + seg + "): value must be positive");
  }
  return std::log(v);
}

}  // namespace

std::set<int> SegmentPanel::years() const {
  std::set<int> out;
  for (const auto& r : records) out.insert(r.year);
  return out;
}

std::string Schema::header_for(const std::string& field) const {
  auto it = columns.find(field);
  return it == columns.end() ? field : it->second;
}

std::vector<RowIssue> validate_panel(const SegmentPanel& panel) {
  std::vector<RowIssue> issues;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < panel.records.size(); ++i) {
    const auto& r = panel.records[i];
    for (auto& msg : record_issues(r)) issues.push_back({i + 2, std::move(msg)});
    if (!seen.insert(key_of(r)).second) {
      issues.push_back({i + 2, "duplicate (segment_id, year) = (" +
                                   r.segment_id + ", " +
                                   std::to_string(r.year) + ")"});
    }
  }
  return issues;
}

SegmentPanel parse_panel_csv(const std::string& text, const Schema& schema,
                             ValidationMode mode,
                             std::vector<RowIssue>* dropped) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("panel CSV is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t i = 0; i < header.size(); ++i) col_of[header[i]] = i;

  std::size_t idx[std::size(kPanelFields)];
  for (std::size_t f = 0; f < std::size(kPanelFields); ++f) {
    const std::string h = schema.header_for(kPanelFields[f]);
    auto it = col_of.find(h);
    if (it == col_of.end()) {
      throw DataError("missing column '" + h + "' (field " + kPanelFields[f] +
                      ")");
    }
    idx[f] = it->second;
  }

  SegmentPanel panel;
  std::vector<std::size_t> lines;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    SegmentYear r;
    r.segment_id = cells[idx[0]];
    auto numeric = [&](std::size_t f) {
      auto v = parse_double(cells[idx[f]]);
      if (!v) {
        throw DataError("line " + std::to_string(line_no) +
                        ": non-numeric cell '" + cells[idx[f]] +
                        "' in column " + schema.header_for(kPanelFields[f]));
      }
      return *v;
    };
    const double year = numeric(1);
    if (year != std::floor(year)) {
      throw DataError("line " + std::to_string(line_no) + ": year " +
                      cells[idx[1]] + " is not an integer");
    }
    r.year = static_cast<int>(year);
    for (std::size_t f = 0; f < std::size(kNumericFields); ++f) {
      r.*kNumericFields[f] = numeric(f + 2);
    }
    panel.records.push_back(std::move(r));
    lines.push_back(line_no);
  }

  auto issues = validate_panel(panel);
  for (auto& issue : issues) issue.line = lines[issue.line - 2];
  if (issues.empty()) return panel;
  if (mode == ValidationMode::strict) {
    throw DataError(issues_to_string(issues));
  }
  std::set<std::size_t> bad_lines;
  for (const auto& issue : issues) bad_lines.insert(issue.line);
  SegmentPanel kept;
  for (std::size_t i = 0; i < panel.records.size(); ++i) {
    if (!bad_lines.count(lines[i])) kept.records.push_back(panel.records[i]);
  }
  if (dropped) *dropped = std::move(issues);
  return kept;
}

SegmentPanel load_panel(const std::filesystem::path& path, const Schema& schema,
                        ValidationMode mode, std::vector<RowIssue>* dropped) {
  if (!std::filesystem::exists(path)) {
    throw DataError("panel file not found: " + path.string());
  }
  return parse_panel_csv(read_file(path), schema, mode, dropped);
}

std::string panel_to_csv(const SegmentPanel& panel) {
  std::string out;
  for (std::size_t f = 0; f < std::size(kPanelFields); ++f) {
    if (f) out.push_back(',');
    out += kPanelFields[f];
  }
  out.push_back('\n');
  for (const auto& r : panel.records) {
    std::vector<std::string> row{r.segment_id, std::to_string(r.year)};
    for (auto field : kNumericFields) row.push_back(format_double(r.*field));
    out += join_csv(row);
    out.push_back('\n');
  }
  return out;
}

void save_panel(const SegmentPanel& panel, const std::filesystem::path& path) {
  write_file(path, panel_to_csv(panel));
}

int FeatureMatrix::column_index(const std::string& name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  if (it == column_names.end()) throw DataError("unknown column '" + name + "'");
  return static_cast<int>(it - column_names.begin());
}

void FeatureMatrix::validate() const {
  if (static_cast<Eigen::Index>(column_names.size()) != x.cols()) {
    throw DataError("feature matrix has " + std::to_string(x.cols()) +
                    " columns but " + std::to_string(column_names.size()) +
                    " names");
  }
  if (response.size() != x.rows()) {
    throw DataError("response length " + std::to_string(response.size()) +
                    " differs from row count " + std::to_string(x.rows()));
  }
  if (!x.allFinite() || !response.allFinite()) {
    throw DataError("feature matrix contains non-finite entries");
  }
}

void require_columns(const std::vector<std::string>& expected,
                     const std::vector<std::string>& actual) {
  if (expected == actual) return;
  std::string msg = "column mismatch: model expects [";
  for (std::size_t i = 0; i < expected.size(); ++i) {
    msg += (i ? "," : "") + expected[i];
  }
  msg += "] but input has [";
  for (std::size_t i = 0; i < actual.size(); ++i) {
    msg += (i ? "," : "") + actual[i];
  }
  throw DataError(msg + "]");
}

FeatureMatrix select_rows(const FeatureMatrix& X, std::span<const int> rows) {
  FeatureMatrix out;
  out.column_names = X.column_names;
  out.transform_log = X.transform_log;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), X.n_cols());
  out.response.resize(static_cast<Eigen::Index>(rows.size()));
  const bool ids = static_cast<Eigen::Index>(X.row_ids.size()) == X.n_rows();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int r = rows[k];
    if (r < 0 || r >= X.n_rows()) throw DataError("select_rows: row out of range");
    out.x.row(static_cast<Eigen::Index>(k)) = X.x.row(r);
    out.response(static_cast<Eigen::Index>(k)) = X.response(r);
    if (ids) out.row_ids.push_back(X.row_ids[r]);
  }
  return out;
}

void SplitSpec::validate() const {
  if (train_years.empty() || validation_years.empty() || test_years.empty()) {
    throw ConfigError("split: train, validation and test year sets must be "
                      "non-empty");
  }
  auto disjoint = [](const std::set<int>& a, const std::set<int>& b) {
    return std::none_of(a.begin(), a.end(),
                        [&](int y) { return b.count(y) > 0; });
  };
  if (!disjoint(train_years, validation_years) ||
      !disjoint(train_years, test_years) ||
      !disjoint(validation_years, test_years)) {
    throw ConfigError("split: year sets must be pairwise disjoint");
  }
}

FeatureMatrix build_period_matrix(const SegmentPanel& panel,
                                  const std::set<int>& years,
                                  Aggregation aggregation,
                                  const std::set<std::string>& log_cols) {
  for (const auto& c : log_cols) {
    if (std::find_if(std::begin(kCovariateColumns), std::end(kCovariateColumns),
                     [&](const char* n) { return c == n; }) ==
        std::end(kCovariateColumns)) {
      throw ConfigError("log transform requested for unknown column '" + c +
                        "'");
    }
  }
  const auto present = panel.years();
  for (int y : years) {
    if (!present.count(y)) {
      throw DataError("year " + std::to_string(y) + " absent from panel");
    }
  }

  // Segments in first-appearance order; per segment, records by year.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::map<int, const SegmentYear*>> by_seg;
  for (const auto& r : panel.records) {
    auto [it, inserted] = by_seg.try_emplace(r.segment_id);
    if (inserted) order.push_back(r.segment_id);
    it->second[r.year] = &r;
  }

  const auto n = static_cast<Eigen::Index>(order.size());
  const auto p = static_cast<Eigen::Index>(std::size(kCovariateColumns));
  FeatureMatrix m;
  m.column_names.assign(std::begin(kCovariateColumns),
                        std::end(kCovariateColumns));
  m.x.resize(n, p);
  m.response.resize(n);
  m.transform_log = log_cols;
  m.row_ids = order;

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& seg = by_seg.at(order[i]);
    double crash_sum = 0, aadt_sum = 0;
    for (int y : years) {
      auto it = seg.find(y);
      if (it == seg.end()) {
        throw DataError("segment " + order[i] + " has no record for year " +
                        std::to_string(y));
      }
      crash_sum += it->second->crashes;
      aadt_sum += it->second->aadt_thousands;
    }
    const double k = static_cast<double>(years.size());
    // Time-invariant covariates come from the segment's earliest record.
    const SegmentYear& base = *seg.begin()->second;
    const double raw[] = {aadt_sum / k,        base.length_miles,
                          base.drv_major_com,  base.drv_minor_com,
                          base.drv_major_ind,  base.drv_minor_ind,
                          base.offset_ft};
    for (Eigen::Index j = 0; j < p; ++j) {
      const std::string col = kCovariateColumns[j];
      m.x(i, j) = log_cols.count(col) ? log_or_throw(raw[j], col, order[i])
                                      : raw[j];
    }
    m.response(i) =
        aggregation == Aggregation::sum ? crash_sum : crash_sum / k;
  }
  m.validate();
  return m;
}

PeriodMatrices build_features(const SegmentPanel& panel, const SplitSpec& split,
                              const std::set<std::string>& log_cols) {
  split.validate();
  PeriodMatrices out;
  out.train = build_period_matrix(panel, split.train_years,
                                  split.train_aggregation, log_cols);
  out.validation = build_period_matrix(panel, split.validation_years,
                                       Aggregation::mean_per_year, log_cols);
  out.test = build_period_matrix(panel, split.test_years,
                                 Aggregation::mean_per_year, log_cols);
  return out;
}

ColumnSummary summarize(const std::string& name, std::span<const double> v) {
  ColumnSummary s;
  s.name = name;
  s.n = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(s.n);
  double ss = 0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

std::vector<ColumnSummary> describe(const SegmentPanel& panel) {
  if (panel.empty()) throw DataError("describe: panel is empty");
  std::vector<ColumnSummary> out;
  std::vector<double> col(panel.size());
  for (std::size_t f = 0; f < std::size(kNumericFields); ++f) {
    for (std::size_t i = 0; i < panel.size(); ++i) {
      col[i] = panel.records[i].*kNumericFields[f];
    }
    out.push_back(summarize(kPanelFields[f + 2], col));
  }
  return out;
}

std::vector<ColumnSummary> describe_periods(const PeriodMatrices& periods) {
  auto col = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  std::vector<ColumnSummary> out;
  out.push_back(summarize("crashes_train", col(periods.train.response)));
  out.push_back(summarize("crashes_test", col(periods.test.response)));
  out.push_back(
      summarize("crashes_validation", col(periods.validation.response)));
  out.push_back(summarize("aadt_train", col(periods.train.x.col(0))));
  out.push_back(summarize("aadt_test", col(periods.test.x.col(0))));
  out.push_back(summarize("aadt_validation", col(periods.validation.x.col(0))));
  for (Eigen::Index j = 1; j < periods.train.n_cols(); ++j) {
    out.push_back(
        summarize(periods.train.column_names[j], col(periods.train.x.col(j))));
  }
  return out;
}

}  // namespace crashstack
