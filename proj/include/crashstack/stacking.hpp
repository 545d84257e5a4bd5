#ifndef CRASHSTACK_STACKING_HPP_
#define CRASHSTACK_STACKING_HPP_

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "crashstack/boosting.hpp"
#include "crashstack/cart.hpp"
#include "crashstack/dataset.hpp"
#include "crashstack/eval.hpp"
#include "crashstack/forest.hpp"
#include "crashstack/glm.hpp"
#include "crashstack/parallel.hpp"

namespace crashstack {

// Meta-feature columns in fixed order: Poisson, negative binomial, tree,
// forest, boosting.
inline constexpr const char* kMetaColumns[] = {"P1", "P2", "P3", "P4", "P5"};
inline constexpr const char* kBaseNames[] = {"poisson", "negbin", "tree", "forest",
                                             "gbm"};

// Trees inside the stack are grown with a small cp and pruned by the
// one-SE rule.
inline TreeConfig stack_tree_defaults() {
  TreeConfig c;
  c.cp = 0.001;
  return c;
}

inline ForestConfig meta_forest_defaults() {
  ForestConfig c;
  c.m_try = 2;
  c.n_tree = 1000;
  c.max_nodes = 9;
  return c;
}

struct BaseConfigs {
  GlmSpec poisson{Family::poisson};
  GlmSpec negbin{Family::negative_binomial};
  TreeConfig tree = stack_tree_defaults();
  bool tree_prune = true;
  int tree_cv_folds = 10;
  std::uint64_t tree_seed = 1;
  ForestConfig forest;
  BoostConfig gbm;
};

struct BaseLearnerSet {
  std::vector<std::string> column_names;
  std::set<std::string> transform_log;  // columns the learners saw as logs
  FittedGlm poisson;
  FittedGlm negbin;
  RegressionTree tree;
  double tree_cp = 0;  // cp kept by pruning (0 when unpruned)
  RandomForest forest;
  BoostedModel gbm;
  BaseConfigs config;
};

// Fits all five learners on the training matrix. A failure is rethrown with
// the same category and the learner name prefixed.
BaseLearnerSet train_base_learners(const FeatureMatrix& train,
                                   const BaseConfigs& cfg,
                                   Exec exec = Exec::parallel);

// n x 5 matrix of base predictions with columns P1..P5 and the period's
// observed response attached. Throws DataError when X's columns or log
// transforms differ from the training matrix.
FeatureMatrix meta_features(const BaseLearnerSet& base, const FeatureMatrix& X,
                            Exec exec = Exec::parallel);

enum class ConstraintMode { unconstrained, nonneg, simplex };
std::string to_string(ConstraintMode m);
ConstraintMode constraint_mode_from_string(const std::string& s);

struct LinearStackWeights {
  Eigen::VectorXd w;
  std::optional<double> intercept;
  ConstraintMode mode = ConstraintMode::unconstrained;
};

// Least squares on the meta columns. Unconstrained mode returns the
// minimum-norm solution; nonneg and simplex modes are solved exactly by
// enumerating active sets (at most 16 columns). With an intercept the
// problem is solved on centered data and the intercept is recovered.
// Throws DataError when rows < columns or every column is constant.
LinearStackWeights fit_linear_stack(const FeatureMatrix& meta, ConstraintMode mode,
                                    bool intercept = true);
Eigen::VectorXd predict_linear(const LinearStackWeights& w, const Eigen::MatrixXd& p);

enum class MetaKind { linear, tree, forest, gbm };
std::string to_string(MetaKind k);
MetaKind meta_kind_from_string(const std::string& s);

struct MetaConfigs {
  ConstraintMode linear_mode = ConstraintMode::nonneg;
  bool linear_intercept = true;
  TreeConfig tree = stack_tree_defaults();
  bool tree_prune = true;
  int tree_cv_folds = 10;
  std::uint64_t tree_seed = 1;
  ForestConfig forest = meta_forest_defaults();
  BoostConfig gbm;
};

using MetaModel =
    std::variant<LinearStackWeights, RegressionTree, RandomForest, BoostedModel>;

MetaModel fit_meta_learner(const FeatureMatrix& meta, MetaKind kind,
                           const MetaConfigs& cfg, Exec exec = Exec::parallel);

// Importance of each meta column: tree split gains (max 100), forest
// permutation importance (max 100), boosting gain share (sum 100), or
// absolute linear weights.
std::vector<double> meta_importance(const MetaModel& model);

struct StackedModel {
  BaseLearnerSet base;
  MetaKind kind = MetaKind::forest;
  std::vector<std::string> meta_columns;
  MetaModel meta;
  MetaConfigs meta_config;
};

Eigen::VectorXd predict_meta(const MetaModel& model, const FeatureMatrix& meta,
                             Exec exec = Exec::parallel);
// meta(meta_features(base, X)); floored at 0 with clamp_nonneg.
Eigen::VectorXd predict_stacked(const StackedModel& model, const FeatureMatrix& X,
                                bool clamp_nonneg = false,
                                Exec exec = Exec::parallel);

struct PipelineConfig {
  SplitSpec split{{2013, 2014, 2015}, {2016}, {2017}};
  std::set<std::string> log_cols{"aadt_thousands", "length_miles"};
  BaseConfigs base;
  MetaConfigs meta;
  std::vector<MetaKind> meta_kinds{MetaKind::forest};
  bool clamp_nonneg = false;
};

// Replaces every learner seed with a stream derived from `seed`.
void apply_master_seed(PipelineConfig& cfg, std::uint64_t seed);

struct PipelineResult {
  PeriodMatrices periods;
  std::vector<StackedModel> stacks;  // one per meta kind, sharing `base`
  FeatureMatrix validation_meta;
  FeatureMatrix test_meta;
  std::vector<NamedPrediction> test_predictions;  // base learners, then stacks
  MetricsReport report;                           // test period
  // P1..P5 and observed crashes on the validation period.
  std::vector<ColumnSummary> validation_summary;
};

// Train on the training years, fit meta-learners on the validation year(s),
// score the test year(s). Errors carry the failing stage in the message.
PipelineResult run_pipeline(const SegmentPanel& panel, const PipelineConfig& cfg,
                            Exec exec = Exec::parallel);

std::string stack_name(MetaKind k);

}  // namespace crashstack

#endif  // CRASHSTACK_STACKING_HPP_
