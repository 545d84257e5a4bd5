#include "crashstack/stacking.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "crashstack/error.hpp"
#include "crashstack/rng.hpp"

namespace crashstack {
namespace {

template <typename F>
auto labeled(const std::string& label, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(label + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(label + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(label + ": " + e.what());
  } catch (const Error& e) {
    throw Error(label + ": " + e.what());
  }
}

std::vector<std::string> meta_column_names() {
  return {std::begin(kMetaColumns), std::end(kMetaColumns)};
}

RegressionTree fit_pruned_tree(const FeatureMatrix& X, const TreeConfig& cfg,
                               bool prune, int folds, std::uint64_t seed,
                               double* cp_out) {
  RegressionTree grown = grow_tree(X, cfg);
  if (!prune) {
    if (cp_out) *cp_out = 0;
    return grown;
  }
  PruneResult r = prune_one_se(grown, X, folds, seed);
  if (cp_out) *cp_out = r.cp_selected;
  return std::move(r.tree);
}

// Exact constrained least squares for a handful of columns: every support
// is tried, smaller supports first, and the feasible candidate with the
// lowest residual sum of squares wins.
Eigen::VectorXd active_set_ls(const Eigen::MatrixXd& A, const Eigen::VectorXd& y,
                              bool simplex) {
  const int L = static_cast<int>(A.cols());
  if (L > 16) throw ConfigError("linear stack: at most 16 meta columns supported");
  std::vector<unsigned> masks;
  for (unsigned m = 1; m < (1u << L); ++m) masks.push_back(m);
  std::stable_sort(masks.begin(), masks.end(), [](unsigned a, unsigned b) {
    return std::popcount(a) < std::popcount(b);
  });

  Eigen::VectorXd best = Eigen::VectorXd::Zero(L);
  // The all-zero vector is feasible only without the sum constraint.
  bool have_best = !simplex;
  double best_rss = y.squaredNorm();
  for (unsigned mask : masks) {
    std::vector<int> cols;
    for (int j = 0; j < L; ++j) {
      if (mask & (1u << j)) cols.push_back(j);
    }
    const int s = static_cast<int>(cols.size());
    Eigen::MatrixXd As(A.rows(), s);
    for (int k = 0; k < s; ++k) As.col(k) = A.col(cols[k]);

    Eigen::VectorXd ws;
    if (!simplex) {
      ws = As.completeOrthogonalDecomposition().solve(y);
    } else {
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
      kkt.topLeftCorner(s, s) = As.transpose() * As;
      kkt.block(0, s, s, 1).setOnes();
      kkt.block(s, 0, 1, s).setOnes();
      Eigen::VectorXd rhs(s + 1);
      rhs.head(s) = As.transpose() * y;
      rhs(s) = 1.0;
      const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
      ws = sol.head(s);
      if (std::abs(ws.sum() - 1.0) > 1e-9) continue;
    }
    const double scale = std::max(1.0, ws.cwiseAbs().maxCoeff());
    if (!ws.allFinite() || ws.minCoeff() < -1e-10 * scale) continue;
    ws = ws.cwiseMax(0.0);
    if (simplex) ws /= ws.sum();
    const double rss = (y - As * ws).squaredNorm();
    if (!have_best || rss < best_rss - 1e-12 * std::max(1.0, best_rss)) {
      have_best = true;
      best_rss = rss;
      best.setZero();
      for (int k = 0; k < s; ++k) best(cols[k]) = ws(k);
    }
  }
  return best;
}

}  // namespace

BaseLearnerSet train_base_learners(const FeatureMatrix& train,
                                   const BaseConfigs& cfg, Exec exec) {
  train.validate();
  BaseLearnerSet b;
  b.column_names = train.column_names;
  b.transform_log = train.transform_log;
  b.config = cfg;
  b.poisson = labeled("poisson", [&] {
    GlmSpec s = cfg.poisson;
    s.family = Family::poisson;
    return fit_glm(train, s);
  });
  b.negbin = labeled("negbin", [&] {
    GlmSpec s = cfg.negbin;
    s.family = Family::negative_binomial;
    return fit_glm(train, s);
  });
  b.tree = labeled("tree", [&] {
    return fit_pruned_tree(train, cfg.tree, cfg.tree_prune, cfg.tree_cv_folds,
                           cfg.tree_seed, &b.tree_cp);
  });
  b.forest = labeled("forest", [&] { return fit_forest(train, cfg.forest, exec); });
  b.gbm = labeled("gbm", [&] { return fit_gbm(train, cfg.gbm); });
  return b;
}

FeatureMatrix meta_features(const BaseLearnerSet& base, const FeatureMatrix& X,
                            Exec exec) {
  require_columns(base.column_names, X.column_names);
  if (X.transform_log != base.transform_log) {
    throw DataError("meta features: log-transformed columns differ from training");
  }
  FeatureMatrix m;
  m.column_names = meta_column_names();
  m.row_ids = X.row_ids;
  m.response = X.response;
  m.x.resize(X.n_rows(), 5);
  m.x.col(0) = predict_mean(base.poisson, X);
  m.x.col(1) = predict_mean(base.negbin, X);
  m.x.col(2) = predict_tree(base.tree, X);
  m.x.col(3) = predict_forest(base.forest, X, exec);
  m.x.col(4) = predict_gbm(base.gbm, X);
  if (!m.x.allFinite()) {
    throw NumericalError("meta features: non-finite base prediction");
  }
  return m;
}

std::string to_string(ConstraintMode m) {
  switch (m) {
    case ConstraintMode::unconstrained: return "unconstrained";
    case ConstraintMode::nonneg: return "nonneg";
    case ConstraintMode::simplex: return "simplex";
  }
  return "?";
}

ConstraintMode constraint_mode_from_string(const std::string& s) {
  if (s == "unconstrained") return ConstraintMode::unconstrained;
  if (s == "nonneg") return ConstraintMode::nonneg;
  if (s == "simplex") return ConstraintMode::simplex;
  throw ConfigError("unknown constraint mode '" + s +
                    "' (expected unconstrained, nonneg or simplex)");
}

LinearStackWeights fit_linear_stack(const FeatureMatrix& meta, ConstraintMode mode,
                                    bool intercept) {
  meta.validate();
  const Eigen::MatrixXd& A = meta.x;
  if (A.rows() < A.cols()) {
    throw DataError("linear stack: need at least as many rows as meta columns");
  }
  bool all_constant = true;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    if (A.col(j).maxCoeff() > A.col(j).minCoeff()) all_constant = false;
  }
  if (all_constant) throw DataError("linear stack: all meta features are constant");

  Eigen::MatrixXd Ac = A;
  Eigen::VectorXd yc = meta.response;
  Eigen::RowVectorXd xbar = Eigen::RowVectorXd::Zero(A.cols());
  double ybar = 0;
  if (intercept) {
    xbar = A.colwise().mean();
    ybar = yc.mean();
    Ac.rowwise() -= xbar;
    yc.array() -= ybar;
  }
  LinearStackWeights out;
  out.mode = mode;
  if (mode == ConstraintMode::unconstrained) {
    out.w = Ac.completeOrthogonalDecomposition().solve(yc);
  } else {
    out.w = active_set_ls(Ac, yc, mode == ConstraintMode::simplex);
  }
  if (intercept) out.intercept = ybar - xbar.dot(out.w);
  return out;
}

Eigen::VectorXd predict_linear(const LinearStackWeights& w, const Eigen::MatrixXd& p) {
  if (p.cols() != w.w.size()) {
    throw DataError("linear stack: column mismatch (" + std::to_string(p.cols()) +
                    " columns, " + std::to_string(w.w.size()) + " weights)");
  }
  Eigen::VectorXd out = p * w.w;
  if (w.intercept) out.array() += *w.intercept;
  return out;
}

std::string to_string(MetaKind k) {
  switch (k) {
    case MetaKind::linear: return "linear";
    case MetaKind::tree: return "tree";
    case MetaKind::forest: return "forest";
    case MetaKind::gbm: return "gbm";
  }
  return "?";
}

MetaKind meta_kind_from_string(const std::string& s) {
  if (s == "linear") return MetaKind::linear;
  if (s == "tree") return MetaKind::tree;
  if (s == "forest") return MetaKind::forest;
  if (s == "gbm") return MetaKind::gbm;
  throw ConfigError("unknown meta learner '" + s +
                    "' (expected linear, tree, forest or gbm)");
}

std::string stack_name(MetaKind k) { return "stack_" + to_string(k); }

MetaModel fit_meta_learner(const FeatureMatrix& meta, MetaKind kind,
                           const MetaConfigs& cfg, Exec exec) {
  return labeled("meta " + to_string(kind), [&]() -> MetaModel {
    switch (kind) {
      case MetaKind::linear:
        return fit_linear_stack(meta, cfg.linear_mode, cfg.linear_intercept);
      case MetaKind::tree:
        return fit_pruned_tree(meta, cfg.tree, cfg.tree_prune, cfg.tree_cv_folds,
                               cfg.tree_seed, nullptr);
      case MetaKind::forest:
        return fit_forest(meta, cfg.forest, exec);
      case MetaKind::gbm:
        return fit_gbm(meta, cfg.gbm);
    }
    throw ConfigError("unknown meta learner");
  });
}

std::vector<double> meta_importance(const MetaModel& model) {
  struct Visitor {
    std::vector<double> operator()(const LinearStackWeights& w) const {
      std::vector<double> out(w.w.size());
      for (Eigen::Index j = 0; j < w.w.size(); ++j) out[j] = std::abs(w.w(j));
      return out;
    }
    std::vector<double> operator()(const RegressionTree& t) const {
      return normalize_max100(cart::impurity_importance(t, t.column_names.size()));
    }
    std::vector<double> operator()(const RandomForest& f) const { return f.importance; }
    std::vector<double> operator()(const BoostedModel& g) const { return g.importance; }
  };
  return std::visit(Visitor{}, model);
}

Eigen::VectorXd predict_meta(const MetaModel& model, const FeatureMatrix& meta,
                             Exec exec) {
  struct Visitor {
    const FeatureMatrix& m;
    Exec exec;
    Eigen::VectorXd operator()(const LinearStackWeights& w) const {
      return predict_linear(w, m.x);
    }
    Eigen::VectorXd operator()(const RegressionTree& t) const {
      return predict_tree(t, m);
    }
    Eigen::VectorXd operator()(const RandomForest& f) const {
      return predict_forest(f, m, exec);
    }
    Eigen::VectorXd operator()(const BoostedModel& g) const {
      return predict_gbm(g, m);
    }
  };
  return std::visit(Visitor{meta, exec}, model);
}

Eigen::VectorXd predict_stacked(const StackedModel& model, const FeatureMatrix& X,
                                bool clamp_nonneg, Exec exec) {
  FeatureMatrix meta = meta_features(model.base, X, exec);
  require_columns(model.meta_columns, meta.column_names);
  Eigen::VectorXd out = predict_meta(model.meta, meta, exec);
  if (clamp_nonneg) out = out.cwiseMax(0.0);
  return out;
}

void apply_master_seed(PipelineConfig& cfg, std::uint64_t seed) {
  cfg.base.tree_seed = derive_seed(seed, 1);
  cfg.base.forest.seed = derive_seed(seed, 2);
  cfg.base.gbm.seed = derive_seed(seed, 3);
  cfg.meta.tree_seed = derive_seed(seed, 4);
  cfg.meta.forest.seed = derive_seed(seed, 5);
  cfg.meta.gbm.seed = derive_seed(seed, 6);
}

PipelineResult run_pipeline(const SegmentPanel& panel, const PipelineConfig& cfg,
                            Exec exec) {
  if (cfg.meta_kinds.empty()) throw ConfigError("pipeline: no meta learner selected");
  PipelineResult r;
  r.periods = labeled("features", [&] {
    cfg.split.validate();
    return build_features(panel, cfg.split, cfg.log_cols);
  });
  const BaseLearnerSet base = labeled(
      "training", [&] { return train_base_learners(r.periods.train, cfg.base, exec); });
  r.validation_meta = labeled("validation", [&] {
    return meta_features(base, r.periods.validation, exec);
  });
  for (MetaKind kind : cfg.meta_kinds) {
    StackedModel s;
    s.base = base;
    s.kind = kind;
    s.meta_columns = meta_column_names();
    s.meta_config = cfg.meta;
    s.meta = labeled("validation",
                     [&] { return fit_meta_learner(r.validation_meta, kind, cfg.meta, exec); });
    r.stacks.push_back(std::move(s));
  }

  labeled("test", [&] {
    r.test_meta = meta_features(base, r.periods.test, exec);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd p = r.test_meta.x.col(k);
      if (cfg.clamp_nonneg) p = p.cwiseMax(0.0);
      r.test_predictions.push_back(
          {kBaseNames[k], ModelRole::base, std::vector<double>(p.begin(), p.end())});
    }
    for (const auto& s : r.stacks) {
      Eigen::VectorXd p = predict_meta(s.meta, r.test_meta, exec);
      if (cfg.clamp_nonneg) p = p.cwiseMax(0.0);
      r.test_predictions.push_back({stack_name(s.kind), ModelRole::meta,
                                    std::vector<double>(p.begin(), p.end())});
    }
    const auto& obs = r.periods.test.response;
    r.report = build_report(r.test_predictions,
                            std::span<const double>(obs.data(), obs.size()));
    return 0;
  });

  const auto& vm = r.validation_meta;
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd c = vm.x.col(k);
    r.validation_summary.push_back(
        summarize(kMetaColumns[k], std::span<const double>(c.data(), c.size())));
  }
  r.validation_summary.push_back(summarize(
      "observed", std::span<const double>(vm.response.data(), vm.response.size())));
  return r;
}

}  // namespace crashstack
