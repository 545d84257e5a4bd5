#include "crashstack/cart.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "crashstack/error.hpp"
#include "oracles.hpp"

namespace crashstack {
namespace {

FeatureMatrix column(std::vector<double> x, std::vector<double> y) {
  FeatureMatrix m;
  m.column_names = {"x"};
  m.x = Eigen::Map<Eigen::MatrixXd>(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  m.response = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return m;
}

std::vector<int> all_rows(const FeatureMatrix& X) {
  std::vector<int> r(X.n_rows());
  std::iota(r.begin(), r.end(), 0);
  return r;
}

std::vector<int> all_cols(const FeatureMatrix& X) {
  std::vector<int> c(X.n_cols());
  std::iota(c.begin(), c.end(), 0);
  return c;
}

TreeConfig loose(int min_leaf = 1) {
  TreeConfig c;
  c.min_leaf = min_leaf;
  c.min_split = 2 * min_leaf;
  c.cp = 0;
  return c;
}

TEST(NodeDeviance, Examples) {
  EXPECT_DOUBLE_EQ(node_deviance(std::vector<double>{1, 3}), 2.0);
  EXPECT_DOUBLE_EQ(node_deviance(std::vector<double>{5, 5, 5}), 0.0);
  EXPECT_DOUBLE_EQ(node_deviance(std::vector<double>{0, 4, 8}), 32.0);
}

TEST(BestSplit, PerfectSeparator) {
  const auto X = column({1, 2, 3, 4}, {0, 0, 10, 10});
  const auto s = best_split(X, all_rows(X), all_cols(X), loose());
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->col, 0);
  EXPECT_DOUBLE_EQ(s->threshold, 2.5);
  EXPECT_DOUBLE_EQ(s->gain, 100.0);
}

TEST(BestSplit, ConstantResponseHasNoSplit) {
  const auto X = column({1, 2, 3, 4}, {3, 3, 3, 3});
  EXPECT_FALSE(best_split(X, all_rows(X), all_cols(X), loose()).has_value());
}

TEST(BestSplit, MinLeafCanForbidEverySplit) {
  const auto X = column({1, 2, 3, 4}, {0, 1, 5, 9});
  EXPECT_FALSE(best_split(X, all_rows(X), all_cols(X), loose(3)).has_value());
}

TEST(BestSplit, TiesGoToLowerColumnThenLowerThreshold) {
  FeatureMatrix X;
  X.column_names = {"a", "b"};
  X.x.resize(4, 2);
  X.x << 1, 1, 2, 2, 3, 3, 4, 4;
  X.response = Eigen::Vector4d(0, 0, 10, 10);
  auto s = best_split(X, all_rows(X), all_cols(X), loose());
  ASSERT_TRUE(s);
  EXPECT_EQ(s->col, 0);
  // y symmetric around the middle: thresholds 1.5 and 3.5 tie.
  const auto Y = column({1, 2, 3, 4}, {0, 5, 5, 10});
  s = best_split(Y, all_rows(Y), all_cols(Y), loose());
  ASSERT_TRUE(s);
  EXPECT_DOUBLE_EQ(s->threshold, 1.5);
  const auto Z = column({1, 2, 3, 4, 5}, {0, 6, 6, 6, 12});
  s = best_split(Z, all_rows(Z), all_cols(Z), loose());
  ASSERT_TRUE(s);
  EXPECT_DOUBLE_EQ(s->threshold, 1.5);
}

TEST(BestSplit, MatchesBruteForceOnSmallRandomData) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const int rows = 2 + static_cast<int>(gen() % 11);
    const int cols = 1 + static_cast<int>(gen() % 3);
    auto X = oracle::random_matrix(rows, cols, gen(), trial % 2 == 0);
    if (trial % 3 == 0) {
      for (int i = 0; i < rows; ++i) X.response(i) = static_cast<double>(gen() % 4);
    }
    const int min_leaf = 1 + static_cast<int>(gen() % 3);
    const auto got = best_split(X, all_rows(X), all_cols(X), loose(min_leaf));
    const auto want = oracle::brute_force_split(X.x, X.response, min_leaf);
    ASSERT_EQ(got.has_value(), want.has_value()) << "trial " << trial;
    if (!got) continue;
    EXPECT_EQ(got->col, want->col) << "trial " << trial;
    EXPECT_EQ(got->threshold, want->threshold) << "trial " << trial;
    EXPECT_NEAR(got->gain, want->gain, 1e-9 * std::max(1.0, want->gain));
  }
}

TEST(BestSplit, RespectsAllowedColumnsAndRowSubset) {
  const auto X = oracle::random_matrix(12, 3, 5, false);
  const std::vector<int> rows{0, 2, 4, 6, 8, 10};
  const std::vector<int> cols{2};
  const auto s = best_split(X, rows, cols, loose());
  ASSERT_TRUE(s);
  EXPECT_EQ(s->col, 2);
  const auto sub = select_rows(X, rows);
  const auto want = oracle::brute_force_split(sub.x.col(2), sub.response, 1);
  ASSERT_TRUE(want);
  EXPECT_EQ(s->threshold, want->threshold);
}

TEST(GrowTree, ConstantResponseIsOneLeaf) {
  const auto X = column({1, 2, 3, 4, 5, 6}, {7, 7, 7, 7, 7, 7});
  const auto t = grow_tree(X, loose());
  EXPECT_EQ(t.leaf_count(), 1);
  EXPECT_DOUBLE_EQ(t.root().prediction, 7);
}

TEST(GrowTree, StepFunctionGivesOneSplitAndZeroError) {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i);
    y.push_back(i < 8 ? 1.0 : 6.0);
  }
  const auto X = column(x, y);
  const auto t = grow_tree(X, loose());
  EXPECT_EQ(t.leaf_count(), 2);
  EXPECT_DOUBLE_EQ(t.root().threshold, 7.5);
  const auto p = predict_tree(t, X);
  EXPECT_DOUBLE_EQ((p - X.response).squaredNorm(), 0.0);
}

TEST(GrowTree, FullTreeBeatsAnyStump) {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto X = oracle::random_matrix(30, 3, s, false);
    const auto full = grow_tree(X, loose());
    TreeConfig stump = loose();
    stump.max_depth = 1;
    const auto one = grow_tree(X, stump);
    const double mse_full = (predict_tree(full, X) - X.response).squaredNorm();
    const double mse_one = (predict_tree(one, X) - X.response).squaredNorm();
    EXPECT_LE(mse_full, mse_one + 1e-12);
  }
}

TEST(GrowTree, StructuralInvariants) {
  const auto X = oracle::smooth_regression(300, 3);
  TreeConfig cfg;
  cfg.cp = 0.001;
  const auto t = grow_tree(X, cfg);
  ASSERT_GT(t.leaf_count(), 3);
  // Leaf means and child deviance bound.
  std::vector<std::vector<int>> routed(t.nodes.size());
  for (Eigen::Index i = 0; i < X.n_rows(); ++i) routed[t.leaf_index(X.x, i)].push_back(i);
  double gains = 0, leaf_dev = 0;
  for (std::size_t k = 0; k < t.nodes.size(); ++k) {
    const auto& n = t.nodes[k];
    if (n.is_leaf) {
      double s = 0;
      for (int i : routed[k]) s += X.response(i);
      ASSERT_EQ(static_cast<int>(routed[k].size()), n.n_node);
      EXPECT_NEAR(n.prediction, s / n.n_node, 1e-12);
      EXPECT_GE(n.n_node, cfg.min_leaf);
      leaf_dev += n.deviance;
    } else {
      gains += n.gain;
      EXPECT_GE(n.deviance + 1e-9,
                t.nodes[n.left].deviance + t.nodes[n.right].deviance);
      EXPECT_GT(n.gain, cfg.cp * t.root().deviance);
    }
  }
  EXPECT_NEAR(t.root().deviance, leaf_dev + gains, 1e-9 * t.root().deviance);
}

TEST(GrowTree, RowOrderDoesNotMatter) {
  const auto X = oracle::smooth_regression(150, 8);
  std::vector<int> perm = all_rows(X);
  std::mt19937_64 gen(1);
  std::shuffle(perm.begin(), perm.end(), gen);
  const auto Y = select_rows(X, perm);
  TreeConfig cfg;
  cfg.cp = 0.002;
  const auto a = grow_tree(X, cfg);
  const auto b = grow_tree(Y, cfg);
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (std::size_t k = 0; k < a.nodes.size(); ++k) {
    EXPECT_EQ(a.nodes[k].is_leaf, b.nodes[k].is_leaf);
    EXPECT_EQ(a.nodes[k].split_col, b.nodes[k].split_col);
    EXPECT_EQ(a.nodes[k].threshold, b.nodes[k].threshold);
    EXPECT_NEAR(a.nodes[k].prediction, b.nodes[k].prediction, 1e-12);
  }
}

TEST(GrowTree, MaxLeavesBudget) {
  const auto X = oracle::smooth_regression(300, 4);
  TreeConfig cfg = loose();
  cfg.max_leaves = 5;
  EXPECT_EQ(grow_tree(X, cfg).leaf_count(), 5);
}

TEST(PredictTree, PiecewiseConstantAndLeafValued) {
  const auto X = oracle::smooth_regression(200, 5);
  const auto t = grow_tree(X, TreeConfig{});
  const auto p = predict_tree(t, X);
  const auto leaves = t.leaf_values();
  std::set<double> distinct(p.data(), p.data() + p.size());
  EXPECT_LE(static_cast<int>(distinct.size()), t.leaf_count());
  for (double v : distinct) {
    EXPECT_NE(std::find(leaves.begin(), leaves.end(), v), leaves.end());
  }
  // Nudge every feature by less than its distance to the nearest threshold.
  std::vector<double> thresholds;
  for (const auto& n : t.nodes) {
    if (!n.is_leaf) thresholds.push_back(n.threshold);
  }
  FeatureMatrix Y = X;
  for (Eigen::Index i = 0; i < Y.n_rows(); ++i) {
    for (Eigen::Index j = 0; j < Y.n_cols(); ++j) {
      double gap = 1.0;
      for (double th : thresholds) gap = std::min(gap, std::abs(th - Y.x(i, j)));
      Y.x(i, j) += 0.4 * gap * ((i + j) % 2 ? 1 : -1);
    }
  }
  EXPECT_TRUE(predict_tree(t, Y) == p);
}

TEST(PredictTree, SingleLeafAndColumnMismatch) {
  const auto X = column({1, 2, 3}, {11, 11, 11});
  const auto t = grow_tree(X, loose());
  EXPECT_TRUE(predict_tree(t, X).isApproxToConstant(11.0));
  FeatureMatrix Y = X;
  Y.column_names = {"other"};
  EXPECT_THROW(predict_tree(t, Y), DataError);
}

TEST(TreeDeviance, SaturatedSingleLeafAndAdditivity) {
  auto X = oracle::random_matrix(10, 2, 12, false);
  const auto sat = grow_tree(X, loose());
  EXPECT_NEAR(tree_deviance_lr(sat, X).deviance, 0.0, 1e-12);

  TreeConfig root_only = loose();
  root_only.max_leaves = 1;
  const auto leaf = grow_tree(X, root_only);
  std::vector<double> y(X.response.data(), X.response.data() + X.n_rows());
  EXPECT_NEAR(tree_deviance_lr(leaf, X).deviance, node_deviance(y), 1e-10);

  const auto Z = oracle::smooth_regression(200, 2);
  const auto t = grow_tree(Z, TreeConfig{});
  double sum = 0;
  for (const auto& n : t.nodes) {
    if (n.is_leaf) sum += n.deviance;
  }
  const auto d = tree_deviance_lr(t, Z);
  EXPECT_NEAR(d.deviance, sum, 1e-9 * sum);
  EXPECT_NEAR(d.rss, sum, 1e-9 * sum);
}

TEST(Pruning, PathIsNestedAndEndsAtRoot) {
  const auto X = oracle::smooth_regression(300, 6);
  TreeConfig cfg;
  cfg.cp = 0;
  const auto t = grow_tree(X, cfg);
  const auto path = cost_complexity_path(t);
  ASSERT_GE(path.size(), 2u);
  EXPECT_EQ(path.front().alpha, 0.0);
  EXPECT_EQ(path.front().leaves, t.leaf_count());
  EXPECT_EQ(path.back().leaves, 1);
  for (std::size_t k = 1; k < path.size(); ++k) {
    EXPECT_GT(path[k].alpha, path[k - 1].alpha);
    EXPECT_LT(path[k].leaves, path[k - 1].leaves);
    EXPECT_EQ(prune_to_alpha(t, path[k].alpha).leaf_count(), path[k].leaves);
  }
}

TEST(Pruning, PrunedTreeMinimizesCostComplexity) {
  const auto X = oracle::smooth_regression(200, 7);
  TreeConfig cfg;
  cfg.cp = 0;
  const auto t = grow_tree(X, cfg);
  const auto path = cost_complexity_path(t);
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const double a = 0.5 * (path[k].alpha + path[k + 1].alpha);
    const auto chosen = prune_to_alpha(t, a);
    const double cost = tree_deviance_lr(chosen, X).rss + a * chosen.leaf_count();
    for (const auto& step : path) {
      const auto other = prune_to_alpha(t, step.alpha);
      EXPECT_LE(cost, tree_deviance_lr(other, X).rss + a * other.leaf_count() + 1e-9);
    }
  }
}

TEST(Pruning, SingleLeafUnchanged) {
  const auto X = column({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {2, 2, 2, 2, 2, 2, 2, 2, 2, 2});
  const auto t = grow_tree(X, TreeConfig{});
  const auto r = prune_one_se(t, X, 5, 1);
  EXPECT_EQ(r.tree.leaf_count(), 1);
  EXPECT_EQ(r.tree.nodes, t.nodes);
}

TEST(Pruning, PureNoiseCollapsesToRoot) {
  int roots = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    std::mt19937_64 gen(s * 77);
    std::normal_distribution<double> z(0, 1);
    FeatureMatrix X;
    X.column_names = {"a", "b", "c"};
    X.x.resize(200, 3);
    X.response.resize(200);
    for (int i = 0; i < 200; ++i) {
      for (int j = 0; j < 3; ++j) X.x(i, j) = z(gen);
      X.response(i) = z(gen);
    }
    TreeConfig cfg;
    cfg.cp = 0.001;
    const auto t = grow_tree(X, cfg);
    roots += prune_one_se(t, X, 10, s).tree.leaf_count() == 1;
  }
  EXPECT_GE(roots, 8);
}

TEST(Pruning, StepSignalKeepsTrueSplit) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  FeatureMatrix X;
  X.column_names = {"a", "b"};
  X.x.resize(200, 2);
  X.response.resize(200);
  for (int i = 0; i < 200; ++i) {
    X.x(i, 0) = u(gen);
    X.x(i, 1) = u(gen);
    X.response(i) = (X.x(i, 1) > 0.5 ? 5.0 : 0.0) + z(gen);
  }
  TreeConfig cfg;
  cfg.cp = 0.001;
  const auto r = prune_one_se(grow_tree(X, cfg), X, 10, 1);
  ASSERT_GE(r.tree.leaf_count(), 2);
  EXPECT_EQ(r.tree.root().split_col, 1);
  EXPECT_NEAR(r.tree.root().threshold, 0.5, 0.05);
  EXPECT_FALSE(r.table.empty());
}

TEST(Pruning, TooFewRowsPerFold) {
  const auto X = oracle::random_matrix(6, 2, 1, false);
  const auto t = grow_tree(X, loose());
  EXPECT_THROW(prune_one_se(t, X, 10, 1), Error);
}

TEST(TreeConfig, Validation) {
  TreeConfig c;
  c.min_leaf = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TreeConfig{};
  c.min_split = 6;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TreeConfig{};
  c.cp = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RenderTree, ListsNodesWithSplits) {
  const auto X = oracle::smooth_regression(100, 1);
  const auto t = grow_tree(X, TreeConfig{});
  const auto text = render_tree(t);
  EXPECT_NE(text.find("1) root"), std::string::npos) << text;
  EXPECT_NE(text.find("a<="), std::string::npos) << text;
}

}  // namespace
}  // namespace crashstack
