#ifndef CRASHSTACK_FOREST_HPP_
#define CRASHSTACK_FOREST_HPP_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "crashstack/cart.hpp"
#include "crashstack/dataset.hpp"
#include "crashstack/parallel.hpp"

namespace crashstack {

struct ForestConfig {
  int m_try = 5;
  int n_tree = 250;
  int max_nodes = 14;  // terminal nodes per tree
  int min_leaf = 5;
  std::uint64_t seed = 1;
  // Test hook: when false every tree sees all rows once (no OOB rows).
  bool bootstrap = true;

  // Throws ConfigError; p is the number of feature columns.
  void validate(int p) const;
  TreeConfig tree_config() const;
};

struct RandomForest {
  std::vector<std::string> column_names;
  std::vector<RegressionTree> trees;
  // inbag[t][i] = times row i was drawn for tree t.
  std::vector<std::vector<std::uint16_t>> inbag;
  // Mean prediction over trees for which the row is out of bag; only
  // meaningful where oob_counts > 0.
  Eigen::VectorXd oob_predictions;
  std::vector<int> oob_counts;
  ForestConfig config;
  std::vector<double> importance;           // permutation, max = 100
  std::vector<double> impurity_importance;  // split gains, max = 100
};

// Trees are fitted independently with per-tree RNG streams derived from
// cfg.seed, so the result does not depend on `exec` or the thread count.
RandomForest fit_forest(const FeatureMatrix& X, const ForestConfig& cfg,
                        Exec exec = Exec::parallel);

Eigen::VectorXd predict_forest(const RandomForest& forest, const FeatureMatrix& X,
                               Exec exec = Exec::parallel);

// Mean squared OOB error over rows with at least one OOB tree. Throws
// NumericalError when no row is out of bag.
double oob_mse(const RandomForest& forest, const Eigen::VectorXd& y);

// 1 - MSE_OOB / Var(y), variance with the 1/n denominator over OOB rows.
double oob_r2(const RandomForest& forest, const Eigen::VectorXd& y);

// Fraction of rows left out of each tree's bootstrap sample.
std::vector<double> oob_fractions(const RandomForest& forest);

// Permutation importance: per tree, the increase in OOB MSE after
// permuting one column among that tree's OOB rows, averaged over trees,
// floored at 0 and rescaled so the largest column is 100.
std::vector<double> importance_forest(const RandomForest& forest,
                                      const FeatureMatrix& X, std::uint64_t seed,
                                      Exec exec = Exec::parallel);

// Rescales so the maximum is 100 (all zeros stay zero).
std::vector<double> normalize_max100(std::vector<double> v);

}  // namespace crashstack

#endif  // CRASHSTACK_FOREST_HPP_
