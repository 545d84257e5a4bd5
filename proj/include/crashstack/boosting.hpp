#ifndef CRASHSTACK_BOOSTING_HPP_
#define CRASHSTACK_BOOSTING_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "crashstack/cart.hpp"
#include "crashstack/dataset.hpp"

namespace crashstack {

enum class BoostLoss {
  squared_error,
  // Experimental: log-link Poisson deviance with one Newton step per leaf.
  poisson,
};

std::string to_string(BoostLoss loss);
BoostLoss boost_loss_from_string(const std::string& s);

struct BoostConfig {
  int n_trees = 100;
  double shrinkage = 0.1;
  // Splits per tree (1 = stumps).
  int interaction_depth = 3;
  int min_leaf = 10;
  double subsample = 1.0;
  std::uint64_t seed = 1;
  BoostLoss loss = BoostLoss::squared_error;

  void validate() const;
  TreeConfig tree_config() const;
};

// f(x) = init + shrinkage * sum_m tree_m(x), with each stage's expansion
// coefficient folded into its leaf values. Under the Poisson loss f is the
// log mean.
struct BoostedModel {
  std::vector<std::string> column_names;
  double init = 0;
  std::vector<RegressionTree> trees;
  double shrinkage = 0.1;
  BoostLoss loss = BoostLoss::squared_error;
  std::vector<double> importance;    // percent, sums to 100
  std::vector<double> training_mse;  // after each stage, in response units
};

BoostedModel fit_gbm(const FeatureMatrix& X, const BoostConfig& cfg);

// Uses the first `n_trees` stages when given. With clamp_nonneg, outputs
// are floored at 0.
Eigen::VectorXd predict_gbm(const BoostedModel& model, const FeatureMatrix& X,
                            bool clamp_nonneg = false,
                            std::optional<int> n_trees = std::nullopt);

// Per-column share of total split gain over all trees, summing to 100.
std::vector<double> importance_gbm(const BoostedModel& model);

// (grid value, mean prediction with the column set to that value), ordered
// by grid value. Throws ConfigError on an empty grid.
std::vector<std::pair<double, double>> partial_dependence(
    const BoostedModel& model, const std::string& col,
    const std::vector<double>& grid, const FeatureMatrix& X);

// Evenly spaced grid over the observed range of a column.
std::vector<double> column_grid(const FeatureMatrix& X, const std::string& col,
                                int points);

}  // namespace crashstack

#endif  // CRASHSTACK_BOOSTING_HPP_
