#include "crashstack/boosting.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "crashstack/error.hpp"
#include "oracles.hpp"

namespace crashstack {
namespace {

BoostConfig config(int trees, double eta, int depth, int min_leaf = 5) {
  BoostConfig c;
  c.n_trees = trees;
  c.shrinkage = eta;
  c.interaction_depth = depth;
  c.min_leaf = min_leaf;
  return c;
}

FeatureMatrix additive(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> z(0, 0.3);
  FeatureMatrix X;
  X.column_names = {"x1", "x2"};
  X.x.resize(n, 2);
  X.response.resize(n);
  for (int i = 0; i < n; ++i) {
    X.x(i, 0) = u(gen);
    X.x(i, 1) = u(gen);
    X.response(i) = 3 * std::sin(2 * M_PI * X.x(i, 0)) + 2 * X.x(i, 1) * X.x(i, 1) + z(gen);
  }
  return X;
}

TEST(Gbm, TelescopingIdentityForEveryTruncation) {
  const auto X = oracle::smooth_regression(200, 1);
  const auto m = fit_gbm(X, config(40, 0.1, 3));
  ASSERT_EQ(m.trees.size(), 40u);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(X.n_rows());
  for (int k = 0; k <= 40; ++k) {
    if (k > 0) {
      for (Eigen::Index i = 0; i < X.n_rows(); ++i) {
        acc(i) += oracle::route(m.trees[k - 1], X.x, i);
      }
    }
    const Eigen::VectorXd want = (m.init + m.shrinkage * acc.array()).matrix();
    const auto got = predict_gbm(m, X, false, k);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-10) << "k = " << k;
  }
  EXPECT_TRUE(predict_gbm(m, X) == predict_gbm(m, X, false, 40));
}

TEST(Gbm, TrainingMseNonIncreasing) {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto X = oracle::random_matrix(80, 3, s, s % 2 == 0);
    for (double eta : {0.1, 0.5, 1.0}) {
      const auto m = fit_gbm(X, config(50, eta, 1 + static_cast<int>(s % 4), 2));
      for (std::size_t k = 1; k < m.training_mse.size(); ++k) {
        EXPECT_LE(m.training_mse[k], m.training_mse[k - 1] * (1 + 1e-12));
      }
    }
  }
}

TEST(Gbm, SingleFullStageEqualsTreeOnResiduals) {
  const auto X = oracle::smooth_regression(60, 2);
  const int n = static_cast<int>(X.n_rows());
  const auto m = fit_gbm(X, config(1, 1.0, n, 1));
  FeatureMatrix R = X;
  const double ybar = X.response.mean();
  R.response = (X.response.array() - ybar).matrix();
  TreeConfig tc;
  tc.min_leaf = 1;
  tc.min_split = 2;
  tc.cp = 0;
  const auto tree = grow_tree(R, tc);
  const Eigen::VectorXd want = (predict_tree(tree, R).array() + ybar).matrix();
  EXPECT_LT((predict_gbm(m, X) - want).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gbm, ConstantResponse) {
  auto X = oracle::smooth_regression(50, 3);
  X.response.setConstant(4.0);
  const auto m = fit_gbm(X, config(5, 0.1, 3));
  EXPECT_EQ(m.init, 4.0);
  for (const auto& t : m.trees) {
    EXPECT_EQ(t.leaf_count(), 1);
    EXPECT_EQ(t.root().prediction, 0.0);
  }
}

TEST(Gbm, HandArithmetic) {
  BoostedModel m;
  m.column_names = {"x"};
  m.init = 10;
  m.shrinkage = 0.1;
  for (double v : {5.0, -3.0}) {
    RegressionTree t;
    t.column_names = {"x"};
    TreeNode leaf;
    leaf.prediction = v;
    t.nodes.push_back(leaf);
    m.trees.push_back(t);
  }
  FeatureMatrix X;
  X.column_names = {"x"};
  X.x = Eigen::MatrixXd::Zero(1, 1);
  X.response = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(predict_gbm(m, X)(0), 10.2, 1e-12);
  EXPECT_EQ(predict_gbm(m, X, false, 0)(0), 10.0);
  m.init = -0.4;
  m.trees.clear();
  EXPECT_EQ(predict_gbm(m, X)(0), -0.4);
  EXPECT_EQ(predict_gbm(m, X, true)(0), 0.0);
  X.column_names = {"y"};
  EXPECT_THROW(predict_gbm(m, X), DataError);
}

TEST(Gbm, ShrinkageBoundsEachStage) {
  const auto X = oracle::smooth_regression(150, 4);
  const double eta = 0.3;
  const auto m = fit_gbm(X, config(20, eta, 3));
  for (int k = 1; k <= 20; ++k) {
    const auto step = predict_gbm(m, X, false, k) - predict_gbm(m, X, false, k - 1);
    double max_leaf = 0;
    for (double v : m.trees[k - 1].leaf_values()) max_leaf = std::max(max_leaf, std::abs(v));
    EXPECT_LE(step.cwiseAbs().maxCoeff(), eta * max_leaf + 1e-12);
  }
}

TEST(Gbm, InterpolatesDistinctRows) {
  const auto X = oracle::random_matrix(40, 3, 5, false);
  const auto m = fit_gbm(X, config(30, 1.0, 40, 1));
  EXPECT_LT(m.training_mse.back(), 1e-20);
}

TEST(Gbm, StumpsGiveAnAdditiveModel) {
  const auto X = additive(300, 6);
  const auto m = fit_gbm(X, config(100, 0.1, 1));
  FeatureMatrix grid;
  grid.column_names = X.column_names;
  grid.response = Eigen::VectorXd::Zero(2);
  grid.x.resize(2, 2);
  const double b = 0.2, b2 = 0.8;
  double first = 0;
  for (int k = 0; k < 11; ++k) {
    const double a = k / 10.0;
    grid.x << a, b, a, b2;
    const auto p = predict_gbm(m, grid);
    const double diff = p(0) - p(1);
    if (k == 0) first = diff;
    EXPECT_NEAR(diff, first, 1e-9);
  }
}

TEST(Gbm, ImportanceSumsToHundredAndTracksSignal) {
  for (std::uint64_t s = 1; s <= 4; ++s) {
    std::mt19937_64 gen(s);
    std::uniform_real_distribution<double> u(0, 1);
    FeatureMatrix X;
    X.column_names = {"x1", "x2", "unused"};
    X.x.resize(200, 3);
    X.response.resize(200);
    for (int i = 0; i < 200; ++i) {
      X.x(i, 0) = u(gen);
      X.x(i, 1) = u(gen);
      X.x(i, 2) = 2.0;
      X.response(i) = 10 * X.x(i, 0) + 0.1 * X.x(i, 1);
    }
    const auto m = fit_gbm(X, config(50, 0.1, 3));
    EXPECT_NEAR(std::accumulate(m.importance.begin(), m.importance.end(), 0.0), 100.0, 1e-9);
    EXPECT_GT(m.importance[0], m.importance[1]);
    EXPECT_EQ(m.importance[2], 0.0);
    EXPECT_EQ(importance_gbm(m), m.importance);
  }
  FeatureMatrix one;
  one.column_names = {"only"};
  one.x = Eigen::VectorXd::LinSpaced(50, 0, 1);
  one.response = one.x.col(0) * 3;
  const auto m = fit_gbm(one, config(10, 0.1, 2));
  EXPECT_DOUBLE_EQ(m.importance[0], 100.0);
}

TEST(Gbm, PartialDependence) {
  const auto X = additive(2000, 7);
  const auto m = fit_gbm(X, config(300, 0.1, 3, 10));
  const auto grid = column_grid(X, "x1", 21);
  ASSERT_EQ(grid.size(), 21u);
  const auto pd = partial_dependence(m, "x1", grid, X);
  ASSERT_EQ(pd.size(), 21u);
  double pd_mean = 0, g_mean = 0;
  for (const auto& [v, f] : pd) {
    pd_mean += f;
    g_mean += 3 * std::sin(2 * M_PI * v);
  }
  pd_mean /= 21;
  g_mean /= 21;
  double worst = 0;
  for (std::size_t k = 1; k < pd.size(); ++k) {
    EXPECT_GT(pd[k].first, pd[k - 1].first);
  }
  for (const auto& [v, f] : pd) {
    worst = std::max(worst, std::abs((f - pd_mean) - (3 * std::sin(2 * M_PI * v) - g_mean)));
  }
  EXPECT_LT(worst, 0.6);

  // Direct definition at one grid value.
  FeatureMatrix Y = X;
  Y.x.col(0).setConstant(grid[5]);
  EXPECT_NEAR(pd[5].second, predict_gbm(m, Y).mean(), 1e-10);
  EXPECT_THROW(partial_dependence(m, "x1", {}, X), ConfigError);
}

TEST(Gbm, PartialDependenceOfConstantModelAndSingleColumnModel) {
  auto X = additive(100, 8);
  X.response.setConstant(2.0);
  const auto flat = fit_gbm(X, config(5, 0.1, 2));
  for (const auto& [v, f] : partial_dependence(flat, "x2", {0.1, 0.5, 0.9}, X)) {
    EXPECT_DOUBLE_EQ(f, 2.0);
  }
  X = additive(200, 9);
  X.response = X.x.col(0).array() * 5;  // depends on x1 only
  const auto m = fit_gbm(X, config(30, 0.2, 2));
  const auto pd = partial_dependence(m, "x1", {0.25, 0.75}, X);
  FeatureMatrix pt = X;
  pt.x.resize(1, 2);
  pt.response = Eigen::VectorXd::Zero(1);
  pt.x << 0.25, 0.123;
  EXPECT_NEAR(pd[0].second, predict_gbm(m, pt)(0), 1e-10);
}

TEST(Gbm, SubsampleIsSeededAndDeterministic) {
  const auto X = oracle::smooth_regression(120, 10);
  auto c = config(20, 0.1, 3);
  c.subsample = 0.5;
  const auto a = fit_gbm(X, c);
  const auto b = fit_gbm(X, c);
  EXPECT_EQ(a.training_mse, b.training_mse);
  c.seed = 99;
  EXPECT_NE(fit_gbm(X, c).training_mse, a.training_mse);
}

TEST(Gbm, PoissonLossIsExperimentalButWorks) {
  auto X = oracle::smooth_regression(200, 11);
  X.response = X.response.array().round().max(0.0);
  auto c = config(50, 0.1, 3);
  c.loss = BoostLoss::poisson;
  const auto m = fit_gbm(X, c);
  EXPECT_EQ(m.loss, BoostLoss::poisson);
  EXPECT_TRUE((predict_gbm(m, X).array() > 0).all());
  EXPECT_LT(m.training_mse.back(), m.training_mse.front());
}

TEST(Gbm, ConfigValidation) {
  auto c = config(0, 0.1, 3);
  EXPECT_THROW(c.validate(), ConfigError);
  c = config(10, 0.0, 3);
  EXPECT_THROW(c.validate(), ConfigError);
  c = config(10, 1.5, 3);
  EXPECT_THROW(c.validate(), ConfigError);
  c = config(10, 0.1, 0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = config(10, 0.1, 3);
  c.subsample = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(c.tree_config().max_leaves, 4);
  EXPECT_THROW(boost_loss_from_string("huber"), ConfigError);
}

}  // namespace
}  // namespace crashstack
