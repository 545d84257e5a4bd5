#include "crashstack/cart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <queue>
#include <sstream>

#include "crashstack/error.hpp"
#include "crashstack/folds.hpp"
#include "crashstack/text.hpp"

namespace crashstack {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Row lists of one node, one per column, each sorted by that column.
using SortedLists = std::vector<std::vector<int>>;

SortedLists presort(const MatrixXd& x, std::span<const int> rows) {
  SortedLists lists(x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    auto& l = lists[c];
    l.assign(rows.begin(), rows.end());
    std::sort(l.begin(), l.end(), [&](int a, int b) {
      const double xa = x(a, c), xb = x(b, c);
      return xa < xb || (xa == xb && a < b);
    });
  }
  return lists;
}

bool better_gain(double gain, double best) {
  return gain > best + kGainTieTolerance * std::max(std::abs(best), 1e-300);
}

std::optional<Split> scan_split(const MatrixXd& x, const VectorXd& y,
                                const SortedLists& lists,
                                std::span<const int> allowed, int min_leaf) {
  const auto& any = lists.front();
  const auto m = static_cast<int>(any.size());
  double total = 0;
  for (int r : any) total += y(r);

  std::optional<Split> best;
  for (int c : allowed) {
    const auto& l = lists[c];
    double sum_left = 0;
    for (int i = 0; i + 1 < m; ++i) {
      sum_left += y(l[i]);
      const double xv = x(l[i], c);
      const double xn = x(l[i + 1], c);
      if (xv == xn) continue;
      const int n_left = i + 1;
      const int n_right = m - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const double diff = sum_left / n_left - (total - sum_left) / n_right;
      const double gain =
          static_cast<double>(n_left) * n_right / m * diff * diff;
      if (!(gain > 0)) continue;
      if (!best || better_gain(gain, best->gain)) {
        double thr = 0.5 * (xv + xn);
        if (!(thr < xn)) thr = xv;
        best = Split{c, thr, gain};
      }
    }
  }
  return best;
}

struct NodeStats {
  double mean = 0;
  double deviance = 0;
  bool constant = true;
};

NodeStats stats_of(const VectorXd& y, const std::vector<int>& rows) {
  NodeStats s;
  double sum = 0;
  for (int r : rows) sum += y(r);
  s.mean = sum / static_cast<double>(rows.size());
  const double first = y(rows.front());
  for (int r : rows) {
    const double d = y(r) - s.mean;
    s.deviance += d * d;
    if (y(r) != first) s.constant = false;
  }
  if (s.constant) s.deviance = 0;
  return s;
}

struct Pending {
  int node = 0;
  SortedLists lists;
  Split split;
};

struct PendingOrder {
  bool operator()(const Pending* a, const Pending* b) const {
    if (a->split.gain != b->split.gain) return a->split.gain < b->split.gain;
    return a->node > b->node;
  }
};

void collect_gains(const RegressionTree& tree, std::vector<double>& out) {
  for (const auto& n : tree.nodes) {
    if (!n.is_leaf) out[n.split_col] += n.gain;
  }
}

// Rebuilds a tree keeping only nodes reachable when `collapsed` internal
// nodes are treated as leaves.
RegressionTree rebuild(const RegressionTree& tree,
                       const std::vector<char>& collapsed) {
  RegressionTree out;
  out.column_names = tree.column_names;
  out.config = tree.config;
  // Depth-first copy in pre-order, left child first.
  struct Frame {
    int src;
    int parent;
    bool is_left;
  };
  std::vector<Frame> todo{{0, -1, false}};
  while (!todo.empty()) {
    const Frame f = todo.back();
    todo.pop_back();
    TreeNode n = tree.nodes[f.src];
    const int id = static_cast<int>(out.nodes.size());
    if (f.parent >= 0) {
      (f.is_left ? out.nodes[f.parent].left : out.nodes[f.parent].right) = id;
    }
    const bool keep_children = !n.is_leaf && !collapsed[f.src];
    const int l = n.left, r = n.right;
    if (!keep_children) {
      n.is_leaf = true;
      n.split_col = -1;
      n.threshold = 0;
      n.gain = 0;
    }
    n.left = n.right = -1;
    out.nodes.push_back(n);
    if (keep_children) {
      todo.push_back({r, id, false});
      todo.push_back({l, id, true});
    }
  }
  return out;
}

struct SubtreeRisk {
  double risk = 0;
  int leaves = 0;
};

SubtreeRisk subtree_risk(const RegressionTree& t, const std::vector<char>& collapsed,
                         int node, std::vector<SubtreeRisk>& memo) {
  const auto& n = t.nodes[node];
  SubtreeRisk r;
  if (n.is_leaf || collapsed[node]) {
    r = {n.deviance, 1};
  } else {
    const auto a = subtree_risk(t, collapsed, n.left, memo);
    const auto b = subtree_risk(t, collapsed, n.right, memo);
    r = {a.risk + b.risk, a.leaves + b.leaves};
  }
  memo[node] = r;
  return r;
}

}  // namespace

void TreeConfig::validate() const {
  if (min_leaf < 1) throw ConfigError("tree: min_leaf must be >= 1");
  if (min_split < 2 * min_leaf) {
    throw ConfigError("tree: min_split must be >= 2 * min_leaf");
  }
  if (!(cp >= 0)) throw ConfigError("tree: cp must be >= 0");
  if (max_depth && *max_depth < 0) {
    throw ConfigError("tree: max_depth must be >= 0");
  }
  if (max_leaves && *max_leaves < 1) {
    throw ConfigError("tree: max_leaves must be >= 1");
  }
}

int RegressionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(),
                                        [](const TreeNode& n) { return n.is_leaf; }));
}

int RegressionTree::leaf_index(const Eigen::MatrixXd& x, Eigen::Index i) const {
  int k = 0;
  while (!nodes[k].is_leaf) {
    const auto& n = nodes[k];
    k = x(i, n.split_col) <= n.threshold ? n.left : n.right;
  }
  return k;
}

std::vector<double> RegressionTree::leaf_values() const {
  std::vector<double> out;
  for (const auto& n : nodes) {
    if (n.is_leaf) out.push_back(n.prediction);
  }
  return out;
}

double node_deviance(std::span<const double> y) {
  if (y.empty()) return 0;
  const double mean =
      std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double d = 0;
  for (double v : y) d += (v - mean) * (v - mean);
  return d;
}

std::optional<Split> best_split(const FeatureMatrix& X, std::span<const int> rows,
                                std::span<const int> allowed_cols,
                                const TreeConfig& cfg) {
  if (rows.empty()) return std::nullopt;
  if (stats_of(X.response, std::vector<int>(rows.begin(), rows.end())).constant) {
    return std::nullopt;
  }
  std::vector<int> allowed(allowed_cols.begin(), allowed_cols.end());
  std::sort(allowed.begin(), allowed.end());
  const auto lists = presort(X.x, rows);
  return scan_split(X.x, X.response, lists, allowed, cfg.min_leaf);
}

namespace cart {

RegressionTree grow(const MatrixXd& x, const VectorXd& y,
                    std::span<const int> sample, const TreeConfig& cfg,
                    std::vector<std::string> column_names,
                    const ColumnSampler& sampler) {
  cfg.validate();
  if (sample.empty()) throw DataError("tree: cannot grow on zero rows");
  RegressionTree tree;
  tree.column_names = std::move(column_names);
  tree.config = cfg;

  std::vector<int> all_cols(x.cols());
  std::iota(all_cols.begin(), all_cols.end(), 0);

  std::vector<std::unique_ptr<Pending>> owned;
  std::priority_queue<Pending*, std::vector<Pending*>, PendingOrder> queue;
  double root_deviance = 0;

  // Creates a node and, when it is splittable, queues its best split.
  auto make_node = [&](SortedLists lists, int depth) {
    const auto& rows = lists.front();
    const NodeStats s = stats_of(y, rows);
    TreeNode node;
    node.prediction = s.mean;
    node.deviance = s.deviance;
    node.n_node = static_cast<int>(rows.size());
    node.depth = depth;
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);
    if (id == 0) root_deviance = s.deviance;

    const bool depth_ok = !cfg.max_depth || depth < *cfg.max_depth;
    if (s.constant || !depth_ok || node.n_node < cfg.min_split) return;
    const std::vector<int> allowed = [&] {
      if (!sampler) return all_cols;
      auto cols = sampler();
      std::sort(cols.begin(), cols.end());
      return cols;
    }();
    auto split = scan_split(x, y, lists, allowed, cfg.min_leaf);
    if (!split) return;
    if (!(split->gain > cfg.cp * root_deviance)) return;
    if (!(split->gain > 1e-12 * s.deviance)) return;
    owned.push_back(std::make_unique<Pending>(Pending{id, std::move(lists), *split}));
    queue.push(owned.back().get());
  };

  make_node(presort(x, sample), 0);
  int leaves = 1;
  while (!queue.empty()) {
    if (cfg.max_leaves && leaves >= *cfg.max_leaves) break;
    Pending* p = queue.top();
    queue.pop();
    const Split s = p->split;
    SortedLists left(x.cols()), right(x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
      for (int r : p->lists[c]) {
        (x(r, s.col) <= s.threshold ? left[c] : right[c]).push_back(r);
      }
    }
    p->lists.clear();
    p->lists.shrink_to_fit();
    const int depth = tree.nodes[p->node].depth + 1;
    const int parent = p->node;
    tree.nodes[parent].is_leaf = false;
    tree.nodes[parent].split_col = s.col;
    tree.nodes[parent].threshold = s.threshold;
    tree.nodes[parent].gain = s.gain;
    tree.nodes[parent].left = static_cast<int>(tree.nodes.size());
    make_node(std::move(left), depth);
    tree.nodes[parent].right = static_cast<int>(tree.nodes.size());
    make_node(std::move(right), depth);
    ++leaves;
  }
  return tree;
}

std::vector<double> impurity_importance(const RegressionTree& tree,
                                        std::size_t n_cols) {
  std::vector<double> out(n_cols, 0.0);
  collect_gains(tree, out);
  return out;
}

}  // namespace cart

RegressionTree grow_tree(const FeatureMatrix& X, const TreeConfig& cfg) {
  X.validate();
  if (X.n_rows() == 0) throw DataError("tree: empty feature matrix");
  std::vector<int> rows(X.n_rows());
  std::iota(rows.begin(), rows.end(), 0);
  return cart::grow(X.x, X.response, rows, cfg, X.column_names);
}

Eigen::VectorXd predict_tree(const RegressionTree& tree, const FeatureMatrix& X) {
  require_columns(tree.column_names, X.column_names);
  VectorXd out(X.n_rows());
  for (Index i = 0; i < X.n_rows(); ++i) out(i) = tree.predict_at(X.x, i);
  return out;
}

std::vector<PruneStep> cost_complexity_path(const RegressionTree& tree) {
  const int n_nodes = static_cast<int>(tree.nodes.size());
  std::vector<char> collapsed(n_nodes, 0);
  std::vector<SubtreeRisk> memo(n_nodes);
  std::vector<PruneStep> path{{0.0, tree.leaf_count()}};
  const double scale = std::max(tree.root().deviance, 1e-300);
  while (true) {
    subtree_risk(tree, collapsed, 0, memo);
    // Walk reachable internal nodes and find the weakest link.
    double weakest = std::numeric_limits<double>::infinity();
    std::vector<int> reachable_internal;
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const int k = stack.back();
      stack.pop_back();
      const auto& n = tree.nodes[k];
      if (n.is_leaf || collapsed[k]) continue;
      reachable_internal.push_back(k);
      const double g = (n.deviance - memo[k].risk) / (memo[k].leaves - 1);
      weakest = std::min(weakest, g);
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
    if (reachable_internal.empty()) break;
    weakest = std::max(weakest, 0.0);
    for (int k : reachable_internal) {
      const auto& n = tree.nodes[k];
      const double g = (n.deviance - memo[k].risk) / (memo[k].leaves - 1);
      if (g <= weakest + 1e-12 * scale) collapsed[k] = 1;
    }
    subtree_risk(tree, collapsed, 0, memo);
    path.push_back({weakest, memo[0].leaves});
  }
  return path;
}

RegressionTree prune_to_alpha(const RegressionTree& tree, double alpha) {
  const int n_nodes = static_cast<int>(tree.nodes.size());
  std::vector<char> collapsed(n_nodes, 0);
  const double tol = 1e-12 * std::max(tree.root().deviance, 1e-300);
  // Post-order: children are visited before their parent.
  std::vector<double> cost(n_nodes, 0.0);
  std::vector<int> order;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    order.push_back(k);
    if (!tree.nodes[k].is_leaf) {
      stack.push_back(tree.nodes[k].left);
      stack.push_back(tree.nodes[k].right);
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& n = tree.nodes[*it];
    const double as_leaf = n.deviance + alpha;
    if (n.is_leaf) {
      cost[*it] = as_leaf;
      continue;
    }
    const double as_subtree = cost[n.left] + cost[n.right];
    if (as_leaf <= as_subtree + tol) {
      collapsed[*it] = 1;
      cost[*it] = as_leaf;
    } else {
      cost[*it] = as_subtree;
    }
  }
  return rebuild(tree, collapsed);
}

PruneResult prune_one_se(const RegressionTree& tree, const FeatureMatrix& X,
                         int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("prune: folds must be >= 2");
  require_columns(tree.column_names, X.column_names);
  const auto path = cost_complexity_path(tree);
  const double root_dev = tree.root().deviance;
  PruneResult result;
  if (path.size() == 1) {
    result.tree = tree;
    result.table.push_back({0.0, tree.leaf_count(), 0.0, 0.0});
    return result;
  }
  const int n = static_cast<int>(X.n_rows());
  if (n < 2 * folds) {
    throw DataError("prune: insufficient rows per fold (" + std::to_string(n) +
                    " rows for " + std::to_string(folds) + " folds)");
  }

  const std::size_t steps = path.size();
  std::vector<double> probe(steps);
  for (std::size_t k = 0; k + 1 < steps; ++k) {
    probe[k] = std::sqrt(path[k].alpha * path[k + 1].alpha);
  }
  probe[steps - 1] = std::numeric_limits<double>::infinity();

  const auto fold_sets = kfold_split(n, folds, seed);
  std::vector<std::vector<double>> sq_err(steps, std::vector<double>(n, 0.0));
  for (int f = 0; f < folds; ++f) {
    const auto train = fold_complement(fold_sets, n, f);
    const auto fold_tree =
        cart::grow(X.x, X.response, train, tree.config, X.column_names);
    for (std::size_t k = 0; k < steps; ++k) {
      const auto pruned = prune_to_alpha(fold_tree, probe[k]);
      for (int i : fold_sets[f]) {
        const double e = X.response(i) - pruned.predict_at(X.x, i);
        sq_err[k][i] = e * e;
      }
    }
  }

  std::vector<double> cv(steps), se(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto& e = sq_err[k];
    const double mean = std::accumulate(e.begin(), e.end(), 0.0) / n;
    double ss = 0;
    for (double v : e) ss += (v - mean) * (v - mean);
    cv[k] = mean;
    se[k] = std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
    result.table.push_back(
        {root_dev > 0 ? path[k].alpha / root_dev : 0.0, path[k].leaves, cv[k], se[k]});
  }
  const auto k_min = static_cast<std::size_t>(
      std::min_element(cv.begin(), cv.end()) - cv.begin());
  const double threshold = cv[k_min] + se[k_min];
  std::size_t chosen = k_min;
  for (std::size_t k = steps; k-- > 0;) {
    if (cv[k] <= threshold) {
      chosen = k;
      break;
    }
  }
  result.tree = prune_to_alpha(tree, path[chosen].alpha);
  result.cp_selected = root_dev > 0 ? path[chosen].alpha / root_dev : 0.0;
  return result;
}

TreeDeviance tree_deviance_lr(const RegressionTree& tree, const FeatureMatrix& X) {
  const VectorXd mu = predict_tree(tree, X);
  const double n = static_cast<double>(X.n_rows());
  const double log_norm = 0.5 * n * std::log(2.0 * std::numbers::pi);
  const double rss = (X.response - mu).squaredNorm();
  const double l_saturated = -log_norm;
  const double l_fitted = -0.5 * rss - log_norm;
  return {2.0 * (l_saturated - l_fitted), rss};
}

std::string render_tree(const RegressionTree& tree) {
  std::ostringstream out;
  out << "n= " << tree.root().n_node << "\n\n"
      << "node), split, n, deviance, yval\n"
      << "      * denotes terminal node\n\n";
  struct Item {
    int node;
    long long label;
    std::string split;
  };
  std::vector<Item> stack{{0, 1, "root"}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[it.node];
    out << std::string(2 * n.depth, ' ') << it.label << ") " << it.split << ' '
        << n.n_node << ' ' << format_fixed(n.deviance, 3) << ' '
        << format_fixed(n.prediction, 3) << (n.is_leaf ? " *" : "") << '\n';
    if (!n.is_leaf) {
      const std::string& col = tree.column_names[n.split_col];
      const std::string thr = format_fixed(n.threshold, 4);
      stack.push_back({n.right, 2 * it.label + 1, col + ">" + thr});
      stack.push_back({n.left, 2 * it.label, col + "<=" + thr});
    }
  }
  return out.str();
}

}  // namespace crashstack
