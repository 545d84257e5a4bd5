#ifndef CRASHSTACK_DATASET_HPP_
#define CRASHSTACK_DATASET_HPP_

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace crashstack {

// One segment in one calendar year (long format).
struct SegmentYear {
  std::string segment_id;
  int year = 0;
  double crashes = 0;
  double aadt_thousands = 0;
  double length_miles = 0;
  double drv_major_com = 0;
  double drv_minor_com = 0;
  double drv_major_ind = 0;
  double drv_minor_ind = 0;
  double offset_ft = 0;

  bool operator==(const SegmentYear&) const = default;
};

struct SegmentPanel {
  std::vector<SegmentYear> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::set<int> years() const;
};

// Canonical field names, in CSV column order.
inline constexpr const char* kPanelFields[] = {
    "segment_id",    "year",          "crashes",       "aadt_thousands",
    "length_miles",  "drv_major_com", "drv_minor_com", "drv_major_ind",
    "drv_minor_ind", "offset_ft"};

// Covariate columns produced by build_features, in matrix order.
inline constexpr const char* kCovariateColumns[] = {
    "aadt_thousands", "length_miles",  "drv_major_com", "drv_minor_com",
    "drv_major_ind",  "drv_minor_ind", "offset_ft"};

inline constexpr double kMinSegmentMiles = 0.1;

// Maps canonical field name -> CSV header. Unmapped fields use their
// canonical name.
struct Schema {
  std::map<std::string, std::string> columns;

  std::string header_for(const std::string& field) const;
};

enum class ValidationMode { strict, lenient };

struct RowIssue {
  std::size_t line = 0;  // 1-based line number in the file (header is 1)
  std::string message;
};

// Reads a long-format panel. In strict mode any invalid row aborts with a
// DataError listing every offending line; in lenient mode offending rows are
// dropped and reported through `dropped`. Structural problems (missing
// column, non-numeric cell) always throw.
SegmentPanel load_panel(const std::filesystem::path& path,
                        const Schema& schema = {},
                        ValidationMode mode = ValidationMode::strict,
                        std::vector<RowIssue>* dropped = nullptr);

SegmentPanel parse_panel_csv(const std::string& text, const Schema& schema = {},
                             ValidationMode mode = ValidationMode::strict,
                             std::vector<RowIssue>* dropped = nullptr);

// Writes canonical headers with shortest round-trip number formatting, so a
// save/load cycle reproduces every field bit-exactly.
void save_panel(const SegmentPanel& panel, const std::filesystem::path& path);
std::string panel_to_csv(const SegmentPanel& panel);

// Invariant checks shared by the loader and the generator.
std::vector<RowIssue> validate_panel(const SegmentPanel& panel);

struct FeatureMatrix {
  std::vector<std::string> column_names;
  Eigen::MatrixXd x;         // n x p, row i = segment i
  Eigen::VectorXd response;  // length n
  std::set<std::string> transform_log;
  std::vector<std::string> row_ids;

  Eigen::Index n_rows() const { return x.rows(); }
  Eigen::Index n_cols() const { return x.cols(); }
  // Throws DataError if the column is absent.
  int column_index(const std::string& name) const;
  // Throws DataError on shape mismatch or non-finite entries.
  void validate() const;
};

// Throws DataError("column mismatch ...") unless names match in order.
void require_columns(const std::vector<std::string>& expected,
                     const std::vector<std::string>& actual);

// Copy of the listed rows, in the listed order.
FeatureMatrix select_rows(const FeatureMatrix& X, std::span<const int> rows);

enum class Aggregation { mean_per_year, sum };

struct SplitSpec {
  std::set<int> train_years;
  std::set<int> validation_years;
  std::set<int> test_years;
  Aggregation train_aggregation = Aggregation::mean_per_year;

  // Throws ConfigError unless the sets are non-empty and pairwise disjoint.
  void validate() const;
};

struct PeriodMatrices {
  FeatureMatrix train;
  FeatureMatrix validation;
  FeatureMatrix test;
};

// Builds one matrix per period. Rows are segments in first-appearance order.
// The AADT column carries the period's mean AADT, the response carries the
// period's crashes (aggregated per `train_aggregation` for training, mean
// per year otherwise); every other covariate is shared across periods.
PeriodMatrices build_features(const SegmentPanel& panel, const SplitSpec& split,
                              const std::set<std::string>& log_cols);

// Single-period variant used when scoring new data.
FeatureMatrix build_period_matrix(const SegmentPanel& panel,
                                  const std::set<int>& years,
                                  Aggregation aggregation,
                                  const std::set<std::string>& log_cols);

struct ColumnSummary {
  std::string name;
  std::size_t n = 0;
  double mean = 0;
  double sd = 0;  // n - 1 denominator; 0 when n == 1
  double min = 0;
  double max = 0;
};

ColumnSummary summarize(const std::string& name, std::span<const double> v);

// Per-column summary over all panel rows (crashes, AADT and covariates).
std::vector<ColumnSummary> describe(const SegmentPanel& panel);

// Table-1 style summary of period matrices: response and AADT per period,
// shared covariates once (from the training matrix).
std::vector<ColumnSummary> describe_periods(const PeriodMatrices& periods);

}  // namespace crashstack

#endif  // CRASHSTACK_DATASET_HPP_
