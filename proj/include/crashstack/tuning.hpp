#ifndef CRASHSTACK_TUNING_HPP_
#define CRASHSTACK_TUNING_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crashstack/boosting.hpp"
#include "crashstack/cart.hpp"
#include "crashstack/dataset.hpp"
#include "crashstack/forest.hpp"
#include "crashstack/parallel.hpp"

namespace crashstack {

enum class TuneLearner { tree, forest, gbm };
std::string to_string(TuneLearner l);
TuneLearner tune_learner_from_string(const std::string& s);

enum class CvMetric { rmse, r2 };
std::string to_string(CvMetric m);
CvMetric cv_metric_from_string(const std::string& s);

// Tunable names per learner:
//   tree:   cp, min_split, min_leaf, max_depth, max_leaves
//   forest: m_try, n_tree, max_nodes, min_leaf
//   gbm:    shrinkage, interaction_depth, n_trees, min_leaf, subsample
struct Grid {
  std::map<std::string, std::vector<double>> params;
  CvMetric metric = CvMetric::rmse;
  int folds = 10;
  int repeats = 1;
  std::uint64_t seed = 1;

  // Throws ConfigError on unknown names, empty value lists, bad fold or
  // repeat counts, or values that violate the learner's config.
  void validate(TuneLearner learner) const;
};

// Settings for parameters the grid leaves alone.
struct TuneBase {
  TreeConfig tree;
  ForestConfig forest;
  BoostConfig gbm;
};

using ParamSet = std::map<std::string, double>;

struct CvRow {
  ParamSet params;
  double rmse = 0;  // mean over folds x repeats
  double rmse_se = 0;
  double r2 = 0;
  double r2_se = 0;
  int evaluations = 0;
  bool disqualified = false;
  std::string failure;
  int rank = 0;  // 1 = winner; disqualified rows rank last
};

struct CvResult {
  TuneLearner learner = TuneLearner::gbm;
  CvMetric metric = CvMetric::rmse;
  std::vector<std::string> param_names;  // display order
  std::vector<CvRow> rows;               // grid order
  std::size_t winner = 0;
  const CvRow& best() const { return rows.at(winner); }
};

// Held-out RMSE and R^2 (1 - SSE/SST around the held-out mean) over the
// listed rows only.
struct FoldScore {
  double rmse = 0;
  double r2 = 0;
};
FoldScore score_holdout(const Eigen::VectorXd& pred, const Eigen::VectorXd& y,
                        std::span<const int> holdout);

// Full-factorial k-fold cross-validation on the training matrix. Repeat r
// uses folds from derive_seed(grid.seed, r); learner seeds depend on the
// (repeat, fold) pair only, so every combination sees the same partitions
// and random streams. Boosting combinations that differ only in n_trees
// share one fit evaluated at each truncation. A failing fit disqualifies
// its combination; NumericalError is thrown only if all are disqualified.
// Equal means are broken by fewer trees, then shallower depth, then larger
// shrinkage, then grid order.
CvResult grid_search(const FeatureMatrix& X, TuneLearner learner, const Grid& grid,
                     const TuneBase& base = {}, Exec exec = Exec::parallel);

// Table-3 style CSV: parameters, rmse, rmse_se, r2, r2_se, rank, status.
std::string cv_csv(const CvResult& result);

// For each parameter and each of its values, the best mean metric among
// combinations using that value.
std::map<std::string, std::vector<std::pair<double, double>>> marginal_curves(
    const CvResult& result);

// Configs with a combination applied on top of `base`.
TreeConfig apply_tree_params(TreeConfig cfg, const ParamSet& p);
ForestConfig apply_forest_params(ForestConfig cfg, const ParamSet& p);
BoostConfig apply_gbm_params(BoostConfig cfg, const ParamSet& p);

}  // namespace crashstack

#endif  // CRASHSTACK_TUNING_HPP_
