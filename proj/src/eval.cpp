#include "crashstack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "crashstack/error.hpp"
#include "crashstack/svg.hpp"
#include "crashstack/text.hpp"

namespace crashstack {
namespace {

void check_lengths(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size()) {
    throw DataError("length mismatch: " + std::to_string(pred.size()) +
                    " predictions vs " + std::to_string(obs.size()) +
                    " observations");
  }
  if (pred.empty()) throw DataError("metrics need at least one observation");
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> obs) {
  check_lengths(pred, obs);
  double ss = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - obs[i];
    ss += e * e;
  }
  return std::sqrt(ss / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> obs) {
  check_lengths(pred, obs);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - obs[i]);
  return s / static_cast<double>(pred.size());
}

double pct_diff(double metric_x, double metric_base) {
  if (!(metric_base > 0)) {
    throw DataError("pct_diff: baseline metric must be positive");
  }
  return (metric_x - metric_base) / metric_base * 100.0;
}

ErrorDistribution error_distribution(std::span<const double> pred,
                                     std::span<const double> obs) {
  check_lengths(pred, obs);
  ErrorDistribution d;
  d.n = pred.size();
  d.mean = mae(pred, obs);
  d.min = std::numeric_limits<double>::infinity();
  d.max = 0;
  double ss = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = std::abs(obs[i] - pred[i]);
    ss += (a - d.mean) * (a - d.mean);
    d.min = std::min(d.min, a);
    d.max = std::max(d.max, a);
  }
  d.sd = d.n > 1 ? std::sqrt(ss / static_cast<double>(d.n - 1)) : 0.0;
  return d;
}

std::string to_string(ModelRole r) { return r == ModelRole::base ? "base" : "meta"; }

const ModelMetrics& MetricsReport::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw DataError("report has no model named '" + name + "'");
}

MetricsReport build_report(const std::vector<NamedPrediction>& models,
                           std::span<const double> obs,
                           std::optional<std::string> baseline) {
  if (models.empty()) throw DataError("report: no models");
  MetricsReport rep;
  rep.n = obs.size();
  for (const auto& m : models) {
    ModelMetrics row;
    row.name = m.name;
    row.role = m.role;
    row.rmse = rmse(m.pred, obs);
    row.mae = mae(m.pred, obs);
    row.abs_err = error_distribution(m.pred, obs);
    rep.rows.push_back(row);
  }
  if (baseline) {
    rep.row(*baseline);
    rep.baseline = *baseline;
  } else {
    const ModelMetrics* best = nullptr;
    for (const auto& r : rep.rows) {
      if (r.role == ModelRole::base && (!best || r.rmse < best->rmse)) best = &r;
    }
    rep.baseline = best ? best->name : rep.rows.front().name;
  }
  const ModelMetrics base = rep.row(rep.baseline);
  for (auto& r : rep.rows) {
    r.pct_diff_rmse = pct_diff(r.rmse, base.rmse);
    r.pct_diff_mae = pct_diff(r.mae, base.mae);
  }
  return rep;
}

std::string report_csv(const MetricsReport& report) {
  std::string out =
      "model,role,rmse,mae,pct_diff_rmse,pct_diff_mae,abs_err_mean,abs_err_sd,"
      "abs_err_min,abs_err_max\n";
  for (const auto& r : report.rows) {
    out += join_csv({r.name, to_string(r.role), format_double(r.rmse),
                     format_double(r.mae), format_double(r.pct_diff_rmse),
                     format_double(r.pct_diff_mae), format_double(r.abs_err.mean),
                     format_double(r.abs_err.sd), format_double(r.abs_err.min),
                     format_double(r.abs_err.max)});
    out += '\n';
  }
  return out;
}

std::string report_table(const MetricsReport& report) {
  std::ostringstream out;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  out << "Out-of-sample comparison (n = " << report.n << ", baseline "
      << report.baseline << ")\n";
  out << pad("model", 22) << pad("role", 6) << pad("RMSE", 10) << pad("%RMSE", 9)
      << pad("MAE", 10) << pad("%MAE", 9) << pad("AE sd", 10) << pad("AE min", 10)
      << pad("AE max", 10) << '\n';
  for (const auto& r : report.rows) {
    const bool is_base = r.name == report.baseline;
    out << pad(r.name, 22) << pad(to_string(r.role), 6)
        << pad(format_fixed(r.rmse, 3), 10)
        << pad(is_base ? "Base" : format_fixed(r.pct_diff_rmse, 2), 9)
        << pad(format_fixed(r.mae, 3), 10)
        << pad(is_base ? "Base" : format_fixed(r.pct_diff_mae, 2), 9)
        << pad(format_fixed(r.abs_err.sd, 3), 10)
        << pad(format_fixed(r.abs_err.min, 3), 10)
        << pad(format_fixed(r.abs_err.max, 3), 10) << '\n';
  }
  return out.str();
}

std::string scatter_csv(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size()) {
    throw DataError("scatter: length mismatch");
  }
  std::string out = "observed,predicted\n";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out += format_double(obs[i]) + "," + format_double(pred[i]) + "\n";
  }
  return out;
}

void scatter_export(std::span<const double> pred, std::span<const double> obs,
                    const std::filesystem::path& stem, const std::string& title) {
  const std::string csv = scatter_csv(pred, obs);
  auto csv_path = stem;
  csv_path += ".csv";
  auto svg_path = stem;
  svg_path += ".svg";
  write_file(csv_path, csv);
  write_file(svg_path, svg::scatter(obs, pred, title));
}

}  // namespace crashstack
