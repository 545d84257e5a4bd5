#include "crashstack/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crashstack/error.hpp"
#include "crashstack/rng.hpp"

namespace crashstack {
namespace {

using Eigen::Index;
using Eigen::VectorXd;

double raw_score(const BoostedModel& m, const Eigen::MatrixXd& x, Index i,
                 std::size_t stages) {
  double s = 0;
  for (std::size_t t = 0; t < stages; ++t) s += m.trees[t].predict_at(x, i);
  return m.init + m.shrinkage * s;
}

double to_response(const BoostedModel& m, double score) {
  return m.loss == BoostLoss::poisson ? std::exp(score) : score;
}

}  // namespace

std::string to_string(BoostLoss loss) {
  return loss == BoostLoss::poisson ? "poisson" : "squared_error";
}

BoostLoss boost_loss_from_string(const std::string& s) {
  if (s == "squared_error") return BoostLoss::squared_error;
  if (s == "poisson") return BoostLoss::poisson;
  throw ConfigError("unknown boosting loss '" + s + "'");
}

void BoostConfig::validate() const {
  if (n_trees < 1) throw ConfigError("gbm: n_trees must be >= 1");
  if (!(shrinkage > 0 && shrinkage <= 1)) {
    throw ConfigError("gbm: shrinkage must lie in (0, 1]");
  }
  if (interaction_depth < 1) {
    throw ConfigError("gbm: interaction_depth must be >= 1");
  }
  if (min_leaf < 1) throw ConfigError("gbm: min_leaf must be >= 1");
  if (!(subsample > 0 && subsample <= 1)) {
    throw ConfigError("gbm: subsample must lie in (0, 1]");
  }
}

TreeConfig BoostConfig::tree_config() const {
  TreeConfig c;
  c.min_leaf = min_leaf;
  c.min_split = 2 * min_leaf;
  c.cp = 0;
  c.max_leaves = interaction_depth + 1;
  return c;
}

BoostedModel fit_gbm(const FeatureMatrix& X, const BoostConfig& cfg) {
  X.validate();
  cfg.validate();
  const Index n = X.n_rows();
  if (n == 0) throw DataError("gbm: empty feature matrix");
  const VectorXd& y = X.response;

  BoostedModel m;
  m.column_names = X.column_names;
  m.shrinkage = cfg.shrinkage;
  m.loss = cfg.loss;
  const double ybar = y.mean();
  if (cfg.loss == BoostLoss::poisson) {
    if ((y.array() < 0).any()) {
      throw DataError("gbm: poisson loss needs a non-negative response");
    }
    if (!(ybar > 0)) throw DataError("gbm: poisson loss needs a positive mean");
    m.init = std::log(ybar);
  } else {
    m.init = ybar;
  }

  const TreeConfig tree_cfg = cfg.tree_config();
  VectorXd f = VectorXd::Constant(n, m.init);
  VectorXd work(n);
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  const auto take = std::max<Index>(
      1, static_cast<Index>(std::floor(cfg.subsample * static_cast<double>(n))));
  Rng rng(derive_seed(cfg.seed, 0x67626dULL));
  std::vector<double> gains(X.n_cols(), 0.0);

  for (int stage = 0; stage < cfg.n_trees; ++stage) {
    std::vector<int> sample = all;
    if (take < n) {
      rng.shuffle(sample);
      sample.resize(take);
      std::sort(sample.begin(), sample.end());
    }
    RegressionTree tree;
    if (cfg.loss == BoostLoss::squared_error) {
      work = y - f;
      tree = cart::grow(X.x, work, sample, tree_cfg, X.column_names);
    } else {
      // Structure from the gradient y - mu; leaf value is the Newton step
      // log(sum y / sum mu) over the leaf's sampled rows.
      const VectorXd mu = f.array().exp();
      work = y - mu;
      tree = cart::grow(X.x, work, sample, tree_cfg, X.column_names);
      std::vector<double> sy(tree.nodes.size(), 0.0), smu(tree.nodes.size(), 0.0);
      for (int i : sample) {
        const int leaf = tree.leaf_index(X.x, i);
        sy[leaf] += y(i);
        smu[leaf] += mu(i);
      }
      for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
        if (!tree.nodes[k].is_leaf) continue;
        const double step = std::log(std::max(sy[k], 1e-3) / std::max(smu[k], 1e-12));
        tree.nodes[k].prediction = std::clamp(step, -5.0, 5.0) / cfg.shrinkage;
      }
    }
    for (Index i = 0; i < n; ++i) f(i) += cfg.shrinkage * tree.predict_at(X.x, i);
    const auto g = cart::impurity_importance(tree, X.n_cols());
    for (std::size_t j = 0; j < g.size(); ++j) gains[j] += g[j];
    m.trees.push_back(std::move(tree));

    double sse = 0;
    for (Index i = 0; i < n; ++i) {
      const double e = y(i) - to_response(m, f(i));
      sse += e * e;
    }
    m.training_mse.push_back(sse / static_cast<double>(n));
  }
  m.importance = importance_gbm(m);
  return m;
}

Eigen::VectorXd predict_gbm(const BoostedModel& model, const FeatureMatrix& X,
                            bool clamp_nonneg, std::optional<int> n_trees) {
  require_columns(model.column_names, X.column_names);
  const std::size_t stages =
      n_trees ? std::min<std::size_t>(*n_trees, model.trees.size())
              : model.trees.size();
  VectorXd out(X.n_rows());
  for (Index i = 0; i < X.n_rows(); ++i) {
    out(i) = to_response(model, raw_score(model, X.x, i, stages));
    if (clamp_nonneg && out(i) < 0) out(i) = 0;
  }
  return out;
}

std::vector<double> importance_gbm(const BoostedModel& model) {
  std::vector<double> gains(model.column_names.size(), 0.0);
  for (const auto& t : model.trees) {
    const auto g = cart::impurity_importance(t, gains.size());
    for (std::size_t j = 0; j < g.size(); ++j) gains[j] += g[j];
  }
  const double total = std::accumulate(gains.begin(), gains.end(), 0.0);
  if (total > 0) {
    for (double& g : gains) g = 100.0 * g / total;
  }
  return gains;
}

std::vector<std::pair<double, double>> partial_dependence(
    const BoostedModel& model, const std::string& col,
    const std::vector<double>& grid, const FeatureMatrix& X) {
  if (grid.empty()) throw ConfigError("partial_dependence: empty grid");
  require_columns(model.column_names, X.column_names);
  const int j = X.column_index(col);
  std::vector<double> values = grid;
  std::sort(values.begin(), values.end());
  Eigen::MatrixXd x = X.x;
  std::vector<std::pair<double, double>> out;
  for (double v : values) {
    x.col(j).setConstant(v);
    double sum = 0;
    for (Index i = 0; i < x.rows(); ++i) {
      sum += to_response(model, raw_score(model, x, i, model.trees.size()));
    }
    out.emplace_back(v, sum / static_cast<double>(x.rows()));
  }
  return out;
}

std::vector<double> column_grid(const FeatureMatrix& X, const std::string& col,
                                int points) {
  const int j = X.column_index(col);
  if (points < 1 || X.n_rows() == 0) return {};
  const double lo = X.x.col(j).minCoeff();
  const double hi = X.x.col(j).maxCoeff();
  std::vector<double> g(points);
  for (int k = 0; k < points; ++k) {
    g[k] = points == 1 ? lo : lo + (hi - lo) * k / (points - 1);
  }
  return g;
}

}  // namespace crashstack
