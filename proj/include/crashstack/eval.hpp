#ifndef CRASHSTACK_EVAL_HPP_
#define CRASHSTACK_EVAL_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crashstack {

// Root mean squared error; throws DataError on empty or mismatched input.
double rmse(std::span<const double> pred, std::span<const double> obs);
double mae(std::span<const double> pred, std::span<const double> obs);

// (metric_x - metric_base) / metric_base * 100. Throws DataError unless
// metric_base > 0.
double pct_diff(double metric_x, double metric_base);

struct ErrorDistribution {
  std::size_t n = 0;
  double mean = 0;
  double sd = 0;  // n - 1 denominator
  double min = 0;
  double max = 0;
};

// Summary of |obs - pred|.
ErrorDistribution error_distribution(std::span<const double> pred,
                                     std::span<const double> obs);

enum class ModelRole { base, meta };
std::string to_string(ModelRole r);

struct NamedPrediction {
  std::string name;
  ModelRole role = ModelRole::base;
  std::vector<double> pred;
};

struct ModelMetrics {
  std::string name;
  ModelRole role = ModelRole::base;
  double rmse = 0;
  double mae = 0;
  double pct_diff_rmse = 0;
  double pct_diff_mae = 0;
  ErrorDistribution abs_err;
};

struct MetricsReport {
  std::string baseline;
  std::size_t n = 0;
  std::vector<ModelMetrics> rows;

  const ModelMetrics& row(const std::string& name) const;
};

// Rows keep the order of `models`. The baseline defaults to the base
// learner with the lowest RMSE (first one on ties).
MetricsReport build_report(const std::vector<NamedPrediction>& models,
                           std::span<const double> obs,
                           std::optional<std::string> baseline = std::nullopt);

// Machine-readable CSV with full-precision numbers:
// model,role,rmse,mae,pct_diff_rmse,pct_diff_mae,abs_err_mean,abs_err_sd,
// abs_err_min,abs_err_max
std::string report_csv(const MetricsReport& report);

// Aligned text table; percent differences to 2 decimals, baseline as "Base".
std::string report_table(const MetricsReport& report);

// Writes <stem>.csv (observed,predicted) and <stem>.svg (scatter with the
// 45-degree reference line). Throws Error on unwritable paths.
void scatter_export(std::span<const double> pred, std::span<const double> obs,
                    const std::filesystem::path& stem, const std::string& title);

std::string scatter_csv(std::span<const double> pred, std::span<const double> obs);

}  // namespace crashstack

#endif  // CRASHSTACK_EVAL_HPP_
