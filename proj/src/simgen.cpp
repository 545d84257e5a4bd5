#include "crashstack/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "crashstack/error.hpp"
#include "crashstack/rng.hpp"

namespace crashstack {
namespace {

constexpr int kMaxRejections = 1000;

void check_envelope(const CovariateEnvelope& e, const char* name) {
  if (!(e.min <= e.mean && e.mean <= e.max) || !(e.sd >= 0)) {
    throw ConfigError(std::string("simgen: unsatisfiable envelope for ") + name +
                      " (need min <= mean <= max and sd >= 0)");
  }
}

template <typename Draw>
double truncated(const CovariateEnvelope& e, Draw draw) {
  for (int k = 0; k < kMaxRejections; ++k) {
    const double v = draw();
    if (v >= e.min && v <= e.max) return v;
  }
  return std::clamp(draw(), e.min, e.max);
}

double draw_lognormal(Rng& rng, const CovariateEnvelope& e) {
  if (e.sd == 0 || e.mean <= 0) return std::clamp(e.mean, e.min, e.max);
  const double s2 = std::log1p((e.sd * e.sd) / (e.mean * e.mean));
  std::lognormal_distribution<double> dist(std::log(e.mean) - 0.5 * s2,
                                           std::sqrt(s2));
  return truncated(e, [&] { return dist(rng.engine()); });
}

double draw_count(Rng& rng, const CovariateEnvelope& e) {
  if (e.mean <= 0) return std::clamp(0.0, e.min, e.max);
  const double var = e.sd * e.sd;
  return truncated(e, [&]() -> double {
    double rate = e.mean;
    if (var > e.mean) {
      const double size = e.mean * e.mean / (var - e.mean);
      std::gamma_distribution<double> g(size, e.mean / size);
      rate = g(rng.engine());
    }
    if (rate <= 0) return 0.0;
    std::poisson_distribution<long long> pois(rate);
    return static_cast<double>(pois(rng.engine()));
  });
}

double draw_uniform(Rng& rng, const CovariateEnvelope& e) {
  return e.min + (e.max - e.min) * rng.uniform01();
}

double draw_crashes(Rng& rng, double lambda, double alpha) {
  double rate = lambda;
  if (alpha > 0) {
    std::gamma_distribution<double> g(1.0 / alpha, alpha);
    rate *= g(rng.engine());
  }
  if (!(rate > 0)) return 0.0;
  std::poisson_distribution<long long> pois(rate);
  return static_cast<double>(pois(rng.engine()));
}

}  // namespace

Eigen::VectorXd GenConfig::default_beta() {
  Eigen::VectorXd b(8);
  b << -0.446, 1.146, 0.522, 0.102, 0.097, 0.067, 0.045, -0.019;
  return b;
}

void GenConfig::validate() const {
  if (n_segments < 1) throw ConfigError("simgen: n_segments must be >= 1");
  if (years.empty()) throw ConfigError("simgen: years must be non-empty");
  if (true_beta.size() != 8) {
    throw ConfigError("simgen: true_beta needs 8 entries (intercept, ln AADT, "
                      "ln length, 4 driveway densities, offset)");
  }
  if (!(true_alpha >= 0)) throw ConfigError("simgen: true_alpha must be >= 0");
  if (!(aadt_growth > 0)) throw ConfigError("simgen: aadt_growth must be > 0");
  check_envelope(aadt, "aadt");
  check_envelope(length, "length");
  check_envelope(drv_major_com, "drv_major_com");
  check_envelope(drv_minor_com, "drv_minor_com");
  check_envelope(drv_major_ind, "drv_major_ind");
  check_envelope(drv_minor_ind, "drv_minor_ind");
  check_envelope(offset, "offset");
  if (!(aadt.min > 0)) throw ConfigError("simgen: aadt.min must be > 0");
  if (!(length.min >= kMinSegmentMiles)) {
    throw ConfigError("simgen: length.min must be >= 0.1 miles");
  }
}

SegmentPanel generate_panel(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x73696d67656eULL));
  std::vector<int> years = cfg.years;
  std::sort(years.begin(), years.end());
  const int t0 = years.front();
  const auto& b = cfg.true_beta;

  SegmentPanel panel;
  panel.records.reserve(static_cast<std::size_t>(cfg.n_segments) * years.size());
  for (int s = 0; s < cfg.n_segments; ++s) {
    SegmentYear base;
    base.segment_id = "seg-" + std::to_string(s + 1);
    const double aadt0 = draw_lognormal(rng, cfg.aadt);
    base.length_miles = draw_lognormal(rng, cfg.length);
    base.drv_major_com = draw_count(rng, cfg.drv_major_com);
    base.drv_minor_com = draw_count(rng, cfg.drv_minor_com);
    base.drv_major_ind = draw_count(rng, cfg.drv_major_ind);
    base.drv_minor_ind = draw_count(rng, cfg.drv_minor_ind);
    base.offset_ft = draw_uniform(rng, cfg.offset);
    const double fixed = b(0) + b(2) * std::log(base.length_miles) +
                         b(3) * base.drv_major_com + b(4) * base.drv_minor_com +
                         b(5) * base.drv_major_ind + b(6) * base.drv_minor_ind +
                         b(7) * base.offset_ft;
    for (int y : years) {
      SegmentYear r = base;
      r.year = y;
      r.aadt_thousands = aadt0 * std::pow(cfg.aadt_growth, y - t0);
      const double lambda = std::exp(fixed + b(1) * std::log(r.aadt_thousands));
      r.crashes = draw_crashes(rng, lambda, cfg.true_alpha);
      panel.records.push_back(std::move(r));
    }
  }
  return panel;
}

Eigen::VectorXd true_mean(const GenConfig& cfg, const FeatureMatrix& X) {
  std::vector<std::string> expected(std::begin(kCovariateColumns),
                                    std::end(kCovariateColumns));
  require_columns(expected, X.column_names);
  for (const auto& c : X.transform_log) {
    if (c != "aadt_thousands" && c != "length_miles") {
      throw DataError("true_mean: column " + c +
                      " enters the generator untransformed");
    }
  }
  const auto& b = cfg.true_beta;
  const bool aadt_logged = X.transform_log.count("aadt_thousands") > 0;
  const bool length_logged = X.transform_log.count("length_miles") > 0;
  Eigen::VectorXd out(X.n_rows());
  for (Eigen::Index i = 0; i < X.n_rows(); ++i) {
    const double la = aadt_logged ? X.x(i, 0) : std::log(X.x(i, 0));
    const double ll = length_logged ? X.x(i, 1) : std::log(X.x(i, 1));
    out(i) = std::exp(b(0) + b(1) * la + b(2) * ll + b(3) * X.x(i, 2) +
                      b(4) * X.x(i, 3) + b(5) * X.x(i, 4) + b(6) * X.x(i, 5) +
                      b(7) * X.x(i, 6));
  }
  return out;
}

}  // namespace crashstack
