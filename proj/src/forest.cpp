#include "crashstack/forest.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "crashstack/error.hpp"
#include "crashstack/rng.hpp"

namespace crashstack {
namespace {

using Eigen::Index;
using Eigen::VectorXd;

// Routes row i, reading `col` as `value` instead of the stored entry.
double predict_with_override(const RegressionTree& tree, const Eigen::MatrixXd& x,
                             Index i, int col, double value) {
  int k = 0;
  while (!tree.nodes[k].is_leaf) {
    const auto& n = tree.nodes[k];
    const double v = n.split_col == col ? value : x(i, n.split_col);
    k = v <= n.threshold ? n.left : n.right;
  }
  return tree.nodes[k].prediction;
}

std::vector<int> oob_rows(const RandomForest& f, std::size_t t) {
  std::vector<int> rows;
  const auto& bag = f.inbag[t];
  for (std::size_t i = 0; i < bag.size(); ++i) {
    if (bag[i] == 0) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

}  // namespace

void ForestConfig::validate(int p) const {
  if (m_try < 1 || m_try > p) {
    throw ConfigError("forest: m_try = " + std::to_string(m_try) +
                      " must lie in [1, " + std::to_string(p) + "]");
  }
  if (n_tree < 1) throw ConfigError("forest: n_tree must be >= 1");
  if (max_nodes < 1) throw ConfigError("forest: max_nodes must be >= 1");
  if (min_leaf < 1) throw ConfigError("forest: min_leaf must be >= 1");
}

TreeConfig ForestConfig::tree_config() const {
  TreeConfig c;
  c.min_leaf = min_leaf;
  c.min_split = 2 * min_leaf;
  c.cp = 0;
  c.max_leaves = max_nodes;
  return c;
}

std::vector<double> normalize_max100(std::vector<double> v) {
  const double m = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  if (m > 0) {
    for (double& x : v) x = 100.0 * x / m;
  }
  return v;
}

RandomForest fit_forest(const FeatureMatrix& X, const ForestConfig& cfg, Exec exec) {
  X.validate();
  const int n = static_cast<int>(X.n_rows());
  const int p = static_cast<int>(X.n_cols());
  if (n == 0) throw DataError("forest: empty feature matrix");
  cfg.validate(p);
  const TreeConfig tree_cfg = cfg.tree_config();

  RandomForest f;
  f.column_names = X.column_names;
  f.config = cfg;
  f.trees.resize(cfg.n_tree);
  f.inbag.assign(cfg.n_tree, std::vector<std::uint16_t>(n, 0));

  parallel_for(exec, cfg.n_tree, [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, t));
    std::vector<int> sample(n);
    if (cfg.bootstrap) {
      for (int& s : sample) s = static_cast<int>(rng.uniform_index(n));
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    for (int s : sample) ++f.inbag[t][s];
    std::vector<int> cols(p);
    auto sampler = [&]() {
      std::iota(cols.begin(), cols.end(), 0);
      for (int j = 0; j < cfg.m_try; ++j) {
        const int k = j + static_cast<int>(rng.uniform_index(p - j));
        std::swap(cols[j], cols[k]);
      }
      return std::vector<int>(cols.begin(), cols.begin() + cfg.m_try);
    };
    f.trees[t] = cart::grow(X.x, X.response, sample, tree_cfg, X.column_names,
                            sampler);
  });

  // Per-tree OOB predictions, then a reduction in tree order.
  std::vector<std::vector<double>> per_tree(cfg.n_tree);
  parallel_for(exec, cfg.n_tree, [&](std::size_t t) {
    per_tree[t].assign(n, 0.0);
    for (int i : oob_rows(f, t)) per_tree[t][i] = f.trees[t].predict_at(X.x, i);
  });
  VectorXd sum = VectorXd::Zero(n);
  f.oob_counts.assign(n, 0);
  for (int t = 0; t < cfg.n_tree; ++t) {
    for (int i = 0; i < n; ++i) {
      if (f.inbag[t][i] == 0) {
        sum(i) += per_tree[t][i];
        ++f.oob_counts[i];
      }
    }
  }
  f.oob_predictions = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (f.oob_counts[i] > 0) f.oob_predictions(i) = sum(i) / f.oob_counts[i];
  }

  std::vector<double> gains(p, 0.0);
  for (const auto& tree : f.trees) {
    const auto g = cart::impurity_importance(tree, p);
    for (int j = 0; j < p; ++j) gains[j] += g[j];
  }
  f.impurity_importance = normalize_max100(std::move(gains));
  f.importance = importance_forest(f, X, cfg.seed, exec);
  return f;
}

Eigen::VectorXd predict_forest(const RandomForest& forest, const FeatureMatrix& X,
                               Exec exec) {
  require_columns(forest.column_names, X.column_names);
  VectorXd out(X.n_rows());
  const double k = static_cast<double>(forest.trees.size());
  parallel_for(exec, static_cast<std::size_t>(X.n_rows()), [&](std::size_t i) {
    double s = 0;
    for (const auto& t : forest.trees) s += t.predict_at(X.x, static_cast<Index>(i));
    out(i) = s / k;
  });
  return out;
}

double oob_mse(const RandomForest& forest, const Eigen::VectorXd& y) {
  if (y.size() != forest.oob_predictions.size()) {
    throw DataError("oob_mse: response length differs from training rows");
  }
  double ss = 0;
  int m = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (forest.oob_counts[i] == 0) continue;
    const double e = y(i) - forest.oob_predictions(i);
    ss += e * e;
    ++m;
  }
  if (m == 0) throw NumericalError("oob_mse: no out-of-bag rows");
  return ss / m;
}

double oob_r2(const RandomForest& forest, const Eigen::VectorXd& y) {
  const double mse = oob_mse(forest, y);
  double sum = 0;
  int m = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (forest.oob_counts[i] > 0) {
      sum += y(i);
      ++m;
    }
  }
  const double mean = sum / m;
  double var = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (forest.oob_counts[i] > 0) var += (y(i) - mean) * (y(i) - mean);
  }
  var /= m;
  if (!(var > 0)) throw NumericalError("oob_r2: response has zero variance");
  return 1.0 - mse / var;
}

std::vector<double> oob_fractions(const RandomForest& forest) {
  std::vector<double> out;
  for (const auto& bag : forest.inbag) {
    const auto oob = std::count(bag.begin(), bag.end(), std::uint16_t{0});
    out.push_back(static_cast<double>(oob) / static_cast<double>(bag.size()));
  }
  return out;
}

std::vector<double> importance_forest(const RandomForest& forest,
                                      const FeatureMatrix& X, std::uint64_t seed,
                                      Exec exec) {
  require_columns(forest.column_names, X.column_names);
  const auto n_tree = forest.trees.size();
  if (!forest.inbag.empty() &&
      forest.inbag.front().size() != static_cast<std::size_t>(X.n_rows())) {
    throw DataError("importance: matrix rows differ from the training rows");
  }
  const int p = static_cast<int>(X.n_cols());
  // increase[t][j]; trees without OOB rows are marked unused.
  std::vector<std::vector<double>> increase(n_tree, std::vector<double>(p, 0.0));
  std::vector<char> used(n_tree, 0);
  parallel_for(exec, n_tree, [&](std::size_t t) {
    const auto rows = oob_rows(forest, t);
    if (rows.empty()) return;
    used[t] = 1;
    const auto& tree = forest.trees[t];
    double base = 0;
    for (int i : rows) {
      const double e = X.response(i) - tree.predict_at(X.x, i);
      base += e * e;
    }
    base /= static_cast<double>(rows.size());
    for (int j = 0; j < p; ++j) {
      std::vector<int> perm = rows;
      Rng rng(derive_seed(seed, t, static_cast<std::uint64_t>(j) + 1));
      rng.shuffle(perm);
      double permuted = 0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const double pred =
            predict_with_override(tree, X.x, rows[r], j, X.x(perm[r], j));
        const double e = X.response(rows[r]) - pred;
        permuted += e * e;
      }
      permuted /= static_cast<double>(rows.size());
      increase[t][j] = permuted - base;
    }
  });
  std::vector<double> mean(p, 0.0);
  int trees_used = 0;
  for (std::size_t t = 0; t < n_tree; ++t) {
    if (!used[t]) continue;
    ++trees_used;
    for (int j = 0; j < p; ++j) mean[j] += increase[t][j];
  }
  for (double& v : mean) {
    v = trees_used ? std::max(0.0, v / trees_used) : 0.0;
  }
  return normalize_max100(std::move(mean));
}

}  // namespace crashstack
