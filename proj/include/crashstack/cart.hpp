#ifndef CRASHSTACK_CART_HPP_
#define CRASHSTACK_CART_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crashstack/dataset.hpp"

namespace crashstack {

struct TreeConfig {
  int min_split = 10;
  int min_leaf = 5;
  // A split is kept only when its deviance reduction exceeds
  // cp * deviance(root).
  double cp = 0.01;
  std::optional<int> max_depth;
  // Leaf budget. When set, nodes are expanded best-first (highest gain
  // next) until the budget is reached.
  std::optional<int> max_leaves;

  void validate() const;
};

struct TreeNode {
  bool is_leaf = true;
  int split_col = -1;
  double threshold = 0;  // rows with x <= threshold go left
  int left = -1;
  int right = -1;
  double prediction = 0;  // mean training response of the node
  int n_node = 0;
  double deviance = 0;  // sum of squared deviations from `prediction`
  double gain = 0;      // deviance reduction of the split (internal nodes)
  int depth = 0;

  bool operator==(const TreeNode&) const = default;
};

// Binary regression tree stored as a flat node array; nodes[0] is the root.
struct RegressionTree {
  std::vector<std::string> column_names;
  std::vector<TreeNode> nodes;
  TreeConfig config;

  int leaf_count() const;
  int split_count() const { return static_cast<int>(nodes.size()) - leaf_count(); }
  const TreeNode& root() const { return nodes.front(); }
  // Index of the leaf that row `i` of `x` routes to.
  int leaf_index(const Eigen::MatrixXd& x, Eigen::Index i) const;
  double predict_at(const Eigen::MatrixXd& x, Eigen::Index i) const {
    return nodes[leaf_index(x, i)].prediction;
  }
  std::vector<double> leaf_values() const;
};

struct Split {
  int col = -1;
  double threshold = 0;
  double gain = 0;
};

// Sum of squared deviations from the mean.
double node_deviance(std::span<const double> y);

// Exhaustive search over allowed columns and midpoints between consecutive
// distinct values. Ties in gain go to the lower column, then the lower
// threshold. Returns nullopt when no candidate honors min_leaf or every gain
// is non-positive.
std::optional<Split> best_split(const FeatureMatrix& X, std::span<const int> rows,
                                std::span<const int> allowed_cols,
                                const TreeConfig& cfg);

RegressionTree grow_tree(const FeatureMatrix& X, const TreeConfig& cfg);

// Splits with gains within this relative distance count as ties.
inline constexpr double kGainTieTolerance = 1e-10;

namespace cart {

// Returns the columns a node may split on; called once per created node in
// creation order.
using ColumnSampler = std::function<std::vector<int>()>;

// Grows a tree on `sample` (row indices of x, repeats allowed, e.g. a
// bootstrap draw). An empty sampler allows every column.
RegressionTree grow(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    std::span<const int> sample, const TreeConfig& cfg,
                    std::vector<std::string> column_names,
                    const ColumnSampler& sampler = {});

// Per-column sum of split gains.
std::vector<double> impurity_importance(const RegressionTree& tree,
                                        std::size_t n_cols);

}  // namespace cart

Eigen::VectorXd predict_tree(const RegressionTree& tree, const FeatureMatrix& X);

// Weakest-link sequence: step k holds the complexity alpha_k at which the
// k-th subtree becomes optimal and its leaf count. alpha_0 = 0 is the full
// tree; the last step is the root leaf.
struct PruneStep {
  double alpha = 0;
  int leaves = 0;
};
std::vector<PruneStep> cost_complexity_path(const RegressionTree& tree);

// Smallest subtree minimizing deviance + alpha * leaves.
RegressionTree prune_to_alpha(const RegressionTree& tree, double alpha);

struct PruneCvRow {
  double cp = 0;  // alpha / deviance(root)
  int leaves = 0;
  double cv_error = 0;  // mean held-out squared error
  double cv_se = 0;
};

struct PruneResult {
  RegressionTree tree;
  double cp_selected = 0;
  std::vector<PruneCvRow> table;
};

// Cross-validates the cost-complexity sequence and keeps the smallest
// subtree whose CV error is within one standard error of the minimum.
// X must be the matrix the tree was grown on.
PruneResult prune_one_se(const RegressionTree& tree, const FeatureMatrix& X,
                         int folds, std::uint64_t seed);

struct TreeDeviance {
  double deviance = 0;  // 2 * [l(saturated) - l(fitted)], Gaussian working
                        // likelihood with unit variance
  double rss = 0;
};
TreeDeviance tree_deviance_lr(const RegressionTree& tree, const FeatureMatrix& X);

// rpart-style indented listing: node), split, n, deviance, yval.
std::string render_tree(const RegressionTree& tree);

}  // namespace crashstack

#endif  // CRASHSTACK_CART_HPP_
