#ifndef CRASHSTACK_SIMGEN_HPP_
#define CRASHSTACK_SIMGEN_HPP_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "crashstack/dataset.hpp"

namespace crashstack {

struct CovariateEnvelope {
  double mean = 0;
  double sd = 0;
  double min = 0;
  double max = 0;
};

// Synthetic panel generator. Defaults mimic a 304-segment, 2013-2017
// five-lane arterial sample and use a log-AADT / log-length negative
// binomial model as the truth.
struct GenConfig {
  int n_segments = 304;
  std::vector<int> years{2013, 2014, 2015, 2016, 2017};
  // Coefficients on (intercept, ln AADT, ln length, major commercial,
  // minor commercial, major industrial, minor industrial, offset).
  Eigen::VectorXd true_beta = default_beta();
  double true_alpha = 0.528;
  CovariateEnvelope aadt{19.098, 8.938, 3.182, 49.766};
  CovariateEnvelope length{0.340, 0.279, 0.100, 1.809};
  CovariateEnvelope drv_major_com{0.349, 0.781, 0.0, 6.0};
  CovariateEnvelope drv_minor_com{0.865, 1.626, 0.0, 12.0};
  CovariateEnvelope drv_major_ind{0.461, 0.936, 0.0, 7.0};
  CovariateEnvelope drv_minor_ind{1.286, 1.844, 0.0, 11.0};
  CovariateEnvelope offset{14.266, 8.188, 0.0, 30.0};
  // AADT in year t is the drawn first-year value times growth^(t - t0).
  double aadt_growth = 1.014;
  std::uint64_t seed = 1;

  static Eigen::VectorXd default_beta();
  // Throws ConfigError for negative alpha, wrong beta length or an
  // unsatisfiable envelope.
  void validate() const;
};

// AADT and length are lognormal, driveway densities negative binomial
// counts, offset uniform; every draw is truncated to its envelope. Crashes
// are NB2 draws built as a gamma-mixed Poisson.
SegmentPanel generate_panel(const GenConfig& cfg);

// exp(x^T beta_true) for rows of a matrix built by build_features. AADT and
// length are log-transformed here unless the matrix already stores logs.
Eigen::VectorXd true_mean(const GenConfig& cfg, const FeatureMatrix& X);

}  // namespace crashstack

#endif  // CRASHSTACK_SIMGEN_HPP_
