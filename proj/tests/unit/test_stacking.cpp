#include "crashstack/stacking.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "crashstack/error.hpp"
#include "crashstack/serialize.hpp"
#include "crashstack/simgen.hpp"
#include "oracles.hpp"

namespace crashstack {
namespace {

FeatureMatrix meta_matrix(const Eigen::MatrixXd& p, const Eigen::VectorXd& y) {
  FeatureMatrix m;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    m.column_names.push_back("P" + std::to_string(j + 1));
  }
  m.x = p;
  m.response = y;
  return m;
}

// Cheap learner settings so pipeline tests stay fast.
PipelineConfig fast_pipeline(std::uint64_t seed = 1) {
  PipelineConfig cfg;
  cfg.base.forest.n_tree = 40;
  cfg.base.gbm.n_trees = 40;
  cfg.meta.forest.n_tree = 60;
  cfg.meta.gbm.n_trees = 30;
  apply_master_seed(cfg, seed);
  return cfg;
}

SegmentPanel panel(std::uint64_t seed, int segments = 304) {
  GenConfig g;
  g.seed = seed;
  g.n_segments = segments;
  return generate_panel(g);
}

TEST(LinearStack, TrivialWeights) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0, 10);
  Eigen::VectorXd y(30);
  for (auto& v : y) v = u(gen);
  auto w = fit_linear_stack(meta_matrix(y, y), ConstraintMode::unconstrained);
  EXPECT_NEAR(w.w(0), 1.0, 1e-12);
  EXPECT_NEAR(*w.intercept, 0.0, 1e-10);
  w = fit_linear_stack(meta_matrix(2 * y, y), ConstraintMode::nonneg, false);
  EXPECT_NEAR(w.w(0), 0.5, 1e-12);
  EXPECT_FALSE(w.intercept.has_value());
}

TEST(LinearStack, UnconstrainedMatchesNormalEquations) {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    std::mt19937_64 gen(s);
    std::normal_distribution<double> z(0, 1);
    Eigen::MatrixXd p(50, 2);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) {
      p(i, 0) = 5 + 2 * z(gen);
      p(i, 1) = 5 + 2 * z(gen) + 0.5 * p(i, 0);
      y(i) = 1 + 0.7 * p(i, 0) + 0.2 * p(i, 1) + z(gen);
    }
    const auto w = fit_linear_stack(meta_matrix(p, y), ConstraintMode::unconstrained);
    Eigen::MatrixXd a(50, 3);
    a << Eigen::VectorXd::Ones(50), p;
    const auto want = oracle::normal_equations(a, y);
    EXPECT_NEAR(*w.intercept, want(0), 1e-8);
    EXPECT_NEAR(w.w(0), want(1), 1e-8);
    EXPECT_NEAR(w.w(1), want(2), 1e-8);
    // Residuals orthogonal to every column.
    const Eigen::VectorXd r = y - predict_linear(w, p);
    EXPECT_NEAR(r.sum(), 0.0, 1e-8);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(r.dot(p.col(j)), 0.0, 1e-8);
    // Without intercept.
    const auto w0 = fit_linear_stack(meta_matrix(p, y), ConstraintMode::unconstrained, false);
    const auto want0 = oracle::normal_equations(p, y);
    EXPECT_NEAR(w0.w(0), want0(0), 1e-8);
    EXPECT_NEAR(w0.w(1), want0(1), 1e-8);
  }
}

TEST(LinearStack, NonnegMatchesGridOracle) {
  int active = 0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    std::mt19937_64 gen(100 + s);
    std::normal_distribution<double> z(0, 1);
    Eigen::VectorXd p1(50), p2(50), y(50);
    const double b2 = (s % 2 == 0) ? -0.4 : 0.6;  // half the cases bind at 0
    for (int i = 0; i < 50; ++i) {
      p1(i) = 8 + 3 * z(gen);
      p2(i) = 8 + 3 * z(gen);
      y(i) = 2 + 0.9 * p1(i) + b2 * p2(i) + z(gen);
    }
    Eigen::MatrixXd p(50, 2);
    p << p1, p2;
    const auto w = fit_linear_stack(meta_matrix(p, y), ConstraintMode::nonneg);
    const auto want = oracle::nnls_grid_2(p1, p2, y);
    EXPECT_NEAR(w.w(0), want.w1, 1e-3) << "seed " << s;
    EXPECT_NEAR(w.w(1), want.w2, 1e-3) << "seed " << s;
    EXPECT_GE(w.w.minCoeff(), 0.0);
    active += w.w(1) == 0.0;
  }
  EXPECT_GE(active, 5);
}

TEST(LinearStack, SimplexWeightsSumToOne) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> z(0, 1);
  Eigen::MatrixXd p(80, 5);
  Eigen::VectorXd y(80);
  for (int i = 0; i < 80; ++i) {
    y(i) = 10 + 3 * z(gen);
    for (int j = 0; j < 5; ++j) p(i, j) = y(i) + (j + 1) * z(gen);
  }
  for (bool icpt : {true, false}) {
    const auto w = fit_linear_stack(meta_matrix(p, y), ConstraintMode::simplex, icpt);
    EXPECT_NEAR(w.w.sum(), 1.0, 1e-12);
    EXPECT_GE(w.w.minCoeff(), 0.0);
    EXPECT_EQ(w.mode, ConstraintMode::simplex);
  }
  // Identical columns: any simplex weights give the common prediction.
  Eigen::MatrixXd same(80, 3);
  same << y, y, y;
  LinearStackWeights sw;
  sw.w = Eigen::Vector3d(0.2, 0.3, 0.5);
  sw.mode = ConstraintMode::simplex;
  EXPECT_LT((predict_linear(sw, same) - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinearStack, DominatesEveryColumnInSample) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> z(0, 1);
  Eigen::MatrixXd p(100, 5);
  Eigen::VectorXd y(100);
  for (int i = 0; i < 100; ++i) {
    y(i) = 10 + 3 * z(gen);
    for (int j = 0; j < 5; ++j) p(i, j) = 0.8 * y(i) + 2 + (j + 1) * 0.7 * z(gen);
  }
  for (auto mode : {ConstraintMode::unconstrained, ConstraintMode::nonneg,
                    ConstraintMode::simplex}) {
    const auto w = fit_linear_stack(meta_matrix(p, y), mode);
    const double mse = (predict_linear(w, p) - y).squaredNorm();
    for (int j = 0; j < 5; ++j) {
      EXPECT_LE(mse, (p.col(j) - y).squaredNorm() + 1e-9) << to_string(mode);
    }
  }
}

TEST(LinearStack, CollinearColumnsGiveMinimumNormSolution) {
  Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(20, 1, 20);
  Eigen::MatrixXd p(20, 2);
  p << g, g;
  const auto w = fit_linear_stack(meta_matrix(p, g), ConstraintMode::unconstrained, false);
  EXPECT_NEAR(w.w(0), 0.5, 1e-10);
  EXPECT_NEAR(w.w(1), 0.5, 1e-10);
}

TEST(LinearStack, Errors) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(10, 2, 3.0);
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0, 9);
  EXPECT_THROW(fit_linear_stack(meta_matrix(p, y), ConstraintMode::nonneg), DataError);
  EXPECT_THROW(fit_linear_stack(meta_matrix(Eigen::MatrixXd::Random(2, 5), y.head(2)),
                                ConstraintMode::nonneg),
               DataError);
  EXPECT_THROW(constraint_mode_from_string("positive"), ConfigError);
  EXPECT_THROW(meta_kind_from_string("svm"), ConfigError);
  EXPECT_EQ(meta_kind_from_string("forest"), MetaKind::forest);
  EXPECT_EQ(stack_name(MetaKind::gbm), "stack_gbm");
}

TEST(BaseLearners, ConstantResponse) {
  auto periods = build_features(panel(3, 60), PipelineConfig{}.split,
                                {"aadt_thousands", "length_miles"});
  auto train = periods.train;
  train.response.setConstant(4.0);
  const auto b = train_base_learners(train, fast_pipeline().base);
  EXPECT_NEAR(b.poisson.beta(0), std::log(4.0), 1e-8);
  const auto m = meta_features(b, train);
  for (int j = 0; j < 5; ++j) {
    EXPECT_LT((m.x.col(j).array() - 4.0).abs().maxCoeff(), 1e-6) << "P" << j + 1;
  }
}

TEST(BaseLearners, MetaFeaturesOnTrainingMatrix) {
  const auto periods = build_features(panel(4, 200), PipelineConfig{}.split,
                                      {"aadt_thousands", "length_miles"});
  const auto b = train_base_learners(periods.train, fast_pipeline().base);
  const auto m = meta_features(b, periods.train);
  EXPECT_EQ(m.column_names, (std::vector<std::string>{"P1", "P2", "P3", "P4", "P5"}));
  EXPECT_TRUE(m.response == periods.train.response);
  EXPECT_TRUE(m.x.col(0) == predict_mean(b.poisson, periods.train));
  EXPECT_TRUE(m.x.col(1) == predict_mean(b.negbin, periods.train));
  EXPECT_TRUE(m.x.col(2) == predict_tree(b.tree, periods.train));
  EXPECT_TRUE(m.x.col(3) == predict_forest(b.forest, periods.train));
  EXPECT_TRUE(m.x.col(4) == predict_gbm(b.gbm, periods.train));
  const auto leaves = b.tree.leaf_values();
  for (Eigen::Index i = 0; i < m.n_rows(); ++i) {
    EXPECT_NE(std::find(leaves.begin(), leaves.end(), m.x(i, 2)), leaves.end());
  }
  // Column and transform checks.
  FeatureMatrix other = periods.validation;
  other.transform_log = {"aadt_thousands"};
  EXPECT_THROW(meta_features(b, other), DataError);
  other = periods.validation;
  std::swap(other.column_names[0], other.column_names[1]);
  EXPECT_THROW(meta_features(b, other), DataError);
}

TEST(BaseLearners, DeterministicAndCalibrated) {
  const auto periods = build_features(panel(5, 1000), PipelineConfig{}.split,
                                      {"aadt_thousands", "length_miles"});
  const auto cfg = fast_pipeline().base;
  const auto a = train_base_learners(periods.train, cfg);
  const auto b = train_base_learners(periods.train, cfg, Exec::serial);
  EXPECT_EQ(dump_json(to_json(a.forest)), dump_json(to_json(b.forest)));
  EXPECT_EQ(dump_json(to_json(a.gbm)), dump_json(to_json(b.gbm)));
  EXPECT_EQ(dump_json(to_json(a.tree)), dump_json(to_json(b.tree)));
  const auto m = meta_features(a, periods.validation);
  const double obs = periods.validation.response.mean();
  for (int j = 0; j < 5; ++j) {
    EXPECT_NEAR(m.x.col(j).mean(), obs, 0.15 * obs) << "P" << j + 1;
  }
}

TEST(MetaLearner, PlantedColumnDominatesAndConstantColumnGetsZero) {
  for (std::uint64_t s = 1; s <= 3; ++s) {
    std::mt19937_64 gen(s);
    std::normal_distribution<double> z(0, 1);
    Eigen::MatrixXd p(300, 5);
    Eigen::VectorXd y(300);
    for (int i = 0; i < 300; ++i) {
      y(i) = 10 + 4 * z(gen);
      p(i, 0) = 10 + 4 * z(gen);
      p(i, 1) = 10 + 4 * z(gen);
      p(i, 2) = 7.5;
      p(i, 3) = y(i);
      p(i, 4) = 10 + 4 * z(gen);
    }
    const auto meta = meta_matrix(p, y);
    MetaConfigs cfg;
    cfg.forest.n_tree = 100;
    cfg.forest.seed = s;
    cfg.gbm.seed = s;
    for (auto kind : {MetaKind::tree, MetaKind::forest, MetaKind::gbm}) {
      const auto model = fit_meta_learner(meta, kind, cfg);
      const auto imp = meta_importance(model);
      ASSERT_EQ(imp.size(), 5u);
      EXPECT_EQ(imp[2], 0.0) << to_string(kind);
      EXPECT_EQ(std::max_element(imp.begin(), imp.end()) - imp.begin(), 3)
          << to_string(kind);
    }
  }
}

TEST(MetaLearner, DefaultMetaForestSettingsAccepted) {
  const auto c = meta_forest_defaults();
  EXPECT_EQ(c.m_try, 2);
  EXPECT_EQ(c.max_nodes, 9);
  EXPECT_EQ(c.n_tree, 1000);
  EXPECT_NO_THROW(c.validate(5));
}

TEST(StackedModel, SelectorWeightsReproduceBasePredictions) {
  const auto p = panel(6, 150);
  const auto r = run_pipeline(p, fast_pipeline());
  StackedModel s;
  s.base = r.stacks.front().base;
  s.kind = MetaKind::linear;
  s.meta_columns = {"P1", "P2", "P3", "P4", "P5"};
  const auto base = meta_features(s.base, r.periods.test);
  for (int k = 0; k < 5; ++k) {
    LinearStackWeights w;
    w.w = Eigen::VectorXd::Unit(5, k);
    s.meta = w;
    EXPECT_TRUE(predict_stacked(s, r.periods.test) == base.x.col(k)) << k;
  }
}

TEST(StackedModel, ClampAndComposition) {
  const auto r = run_pipeline(panel(7, 150), fast_pipeline());
  const auto& s = r.stacks.front();
  const auto meta = meta_features(s.base, r.periods.test);
  EXPECT_TRUE(predict_stacked(s, r.periods.test) == predict_meta(s.meta, meta));
  StackedModel shifted = s;
  LinearStackWeights w;
  w.w = Eigen::VectorXd::Zero(5);
  w.intercept = -1.0;
  shifted.kind = MetaKind::linear;
  shifted.meta = w;
  EXPECT_TRUE(predict_stacked(shifted, r.periods.test, true).isZero());
  EXPECT_TRUE(predict_stacked(shifted, r.periods.test).isApproxToConstant(-1.0));
}

TEST(Pipeline, ReportStructure) {
  auto cfg = fast_pipeline();
  const auto r = run_pipeline(panel(8), cfg);
  ASSERT_EQ(r.report.rows.size(), 6u);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(r.report.rows[k].name, kBaseNames[k]);
    EXPECT_EQ(r.report.rows[k].role, ModelRole::base);
  }
  EXPECT_EQ(r.report.rows[5].name, "stack_forest");
  EXPECT_EQ(r.report.rows[5].role, ModelRole::meta);
  EXPECT_EQ(r.report.n, 304u);
  EXPECT_EQ(r.validation_summary.size(), 6u);
  EXPECT_EQ(r.validation_meta.n_rows(), 304);

  cfg.meta_kinds = {MetaKind::tree, MetaKind::forest, MetaKind::gbm, MetaKind::linear};
  const auto all = run_pipeline(panel(8), cfg);
  EXPECT_EQ(all.report.rows.size(), 9u);
  EXPECT_EQ(all.stacks.size(), 4u);
}

TEST(Pipeline, RerunIsIdentical) {
  const auto p = panel(9, 120);
  const auto a = run_pipeline(p, fast_pipeline(3));
  const auto b = run_pipeline(p, fast_pipeline(3), Exec::serial);
  EXPECT_EQ(report_csv(a.report), report_csv(b.report));
  EXPECT_EQ(dump_json(to_json(a.stacks[0])), dump_json(to_json(b.stacks[0])));
}

TEST(Pipeline, TestResponsesNeverReachFittedModels) {
  auto p = panel(10, 150);
  auto cfg = fast_pipeline();
  cfg.meta_kinds = {MetaKind::linear, MetaKind::tree, MetaKind::forest, MetaKind::gbm};
  const auto a = run_pipeline(p, cfg);
  std::mt19937_64 gen(1);
  for (auto& r : p.records) {
    if (r.year == 2017) r.crashes = static_cast<double>(gen() % 40);
  }
  const auto b = run_pipeline(p, cfg);
  for (std::size_t k = 0; k < a.stacks.size(); ++k) {
    EXPECT_EQ(dump_json(to_json(a.stacks[k])), dump_json(to_json(b.stacks[k])));
  }
  EXPECT_NE(report_csv(a.report), report_csv(b.report));
}

TEST(Pipeline, ValidationResponsesReachOnlyTheMeta) {
  auto p = panel(11, 150);
  const auto cfg = fast_pipeline();
  const auto a = run_pipeline(p, cfg);
  for (auto& r : p.records) {
    if (r.year == 2016) r.crashes += 3;
  }
  const auto b = run_pipeline(p, cfg);
  const auto& ba = a.stacks[0].base;
  const auto& bb = b.stacks[0].base;
  EXPECT_EQ(dump_json(to_json(ba.poisson)), dump_json(to_json(bb.poisson)));
  EXPECT_EQ(dump_json(to_json(ba.forest)), dump_json(to_json(bb.forest)));
  EXPECT_NE(dump_json(to_json(a.stacks[0])), dump_json(to_json(b.stacks[0])));
}

TEST(Pipeline, StageLabelledErrors) {
  auto cfg = fast_pipeline();
  cfg.split.test_years = {2020};
  try {
    run_pipeline(panel(12, 40), cfg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("features:", 0), 0u) << e.what();
  }
  cfg = fast_pipeline();
  cfg.meta_kinds.clear();
  EXPECT_THROW(run_pipeline(panel(12, 40), cfg), ConfigError);
}

}  // namespace
}  // namespace crashstack
