#include "crashstack/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crashstack/error.hpp"
#include "crashstack/folds.hpp"
#include "crashstack/rng.hpp"
#include "crashstack/text.hpp"

namespace crashstack {
namespace {

const std::vector<std::string>& allowed_params(TuneLearner l) {
  static const std::vector<std::string> tree{"cp", "min_split", "min_leaf",
                                             "max_depth", "max_leaves"};
  static const std::vector<std::string> forest{"m_try", "n_tree", "max_nodes",
                                               "min_leaf"};
  static const std::vector<std::string> gbm{"shrinkage", "interaction_depth",
                                            "n_trees", "min_leaf", "subsample"};
  switch (l) {
    case TuneLearner::tree: return tree;
    case TuneLearner::forest: return forest;
    case TuneLearner::gbm: return gbm;
  }
  return tree;
}

int as_int(const std::string& name, double v) {
  if (!std::isfinite(v) || v != std::floor(v) || std::abs(v) > 1e9) {
    throw ConfigError("tuning: " + name + " must be an integer, got " +
                      format_double(v));
  }
  return static_cast<int>(v);
}

std::vector<std::string> display_order(TuneLearner l, const Grid& g) {
  std::vector<std::string> out;
  for (const auto& n : allowed_params(l)) {
    if (g.params.count(n)) out.push_back(n);
  }
  return out;
}

// Odometer over the display order; the last parameter varies fastest.
std::vector<ParamSet> combinations(const Grid& g, const std::vector<std::string>& names) {
  std::vector<ParamSet> out;
  std::vector<std::size_t> idx(names.size(), 0);
  while (true) {
    ParamSet p;
    for (std::size_t k = 0; k < names.size(); ++k) {
      p[names[k]] = g.params.at(names[k])[idx[k]];
    }
    out.push_back(std::move(p));
    std::size_t k = names.size();
    while (k > 0) {
      --k;
      if (++idx[k] < g.params.at(names[k]).size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
    if (names.empty()) return out;
  }
}

double param_or(const ParamSet& p, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = p.find(n);
    if (it != p.end()) return it->second;
  }
  return 0;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) /
         std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

std::string to_string(TuneLearner l) {
  switch (l) {
    case TuneLearner::tree: return "tree";
    case TuneLearner::forest: return "forest";
    case TuneLearner::gbm: return "gbm";
  }
  return "?";
}

TuneLearner tune_learner_from_string(const std::string& s) {
  if (s == "tree") return TuneLearner::tree;
  if (s == "forest") return TuneLearner::forest;
  if (s == "gbm") return TuneLearner::gbm;
  throw ConfigError("unknown tunable learner '" + s + "' (expected tree, forest or gbm)");
}

std::string to_string(CvMetric m) { return m == CvMetric::rmse ? "rmse" : "r2"; }

CvMetric cv_metric_from_string(const std::string& s) {
  if (s == "rmse") return CvMetric::rmse;
  if (s == "r2") return CvMetric::r2;
  throw ConfigError("unknown metric '" + s + "' (expected rmse or r2)");
}

TreeConfig apply_tree_params(TreeConfig cfg, const ParamSet& p) {
  for (const auto& [name, v] : p) {
    if (name == "cp") cfg.cp = v;
    else if (name == "min_split") cfg.min_split = as_int(name, v);
    else if (name == "min_leaf") cfg.min_leaf = as_int(name, v);
    else if (name == "max_depth") cfg.max_depth = as_int(name, v);
    else if (name == "max_leaves") cfg.max_leaves = as_int(name, v);
    else throw ConfigError("tuning: tree has no parameter '" + name + "'");
  }
  return cfg;
}

ForestConfig apply_forest_params(ForestConfig cfg, const ParamSet& p) {
  for (const auto& [name, v] : p) {
    if (name == "m_try") cfg.m_try = as_int(name, v);
    else if (name == "n_tree") cfg.n_tree = as_int(name, v);
    else if (name == "max_nodes") cfg.max_nodes = as_int(name, v);
    else if (name == "min_leaf") cfg.min_leaf = as_int(name, v);
    else throw ConfigError("tuning: forest has no parameter '" + name + "'");
  }
  return cfg;
}

BoostConfig apply_gbm_params(BoostConfig cfg, const ParamSet& p) {
  for (const auto& [name, v] : p) {
    if (name == "shrinkage") cfg.shrinkage = v;
    else if (name == "interaction_depth") cfg.interaction_depth = as_int(name, v);
    else if (name == "n_trees") cfg.n_trees = as_int(name, v);
    else if (name == "min_leaf") cfg.min_leaf = as_int(name, v);
    else if (name == "subsample") cfg.subsample = v;
    else throw ConfigError("tuning: gbm has no parameter '" + name + "'");
  }
  return cfg;
}

void Grid::validate(TuneLearner learner) const {
  if (folds < 2) throw ConfigError("tuning: folds must be >= 2");
  if (repeats < 1) throw ConfigError("tuning: repeats must be >= 1");
  const auto& ok = allowed_params(learner);
  for (const auto& [name, values] : params) {
    if (std::find(ok.begin(), ok.end(), name) == ok.end()) {
      throw ConfigError("tuning: " + to_string(learner) + " has no parameter '" +
                        name + "'");
    }
    if (values.empty()) throw ConfigError("tuning: no values for " + name);
  }
}

FoldScore score_holdout(const Eigen::VectorXd& pred, const Eigen::VectorXd& y,
                        std::span<const int> holdout) {
  if (holdout.empty()) throw DataError("score_holdout: empty hold-out set");
  double ybar = 0;
  for (int i : holdout) ybar += y(i);
  ybar /= static_cast<double>(holdout.size());
  double sse = 0, sst = 0;
  for (int i : holdout) {
    sse += (pred(i) - y(i)) * (pred(i) - y(i));
    sst += (y(i) - ybar) * (y(i) - ybar);
  }
  FoldScore s;
  s.rmse = std::sqrt(sse / static_cast<double>(holdout.size()));
  s.r2 = sst > 0 ? 1.0 - sse / sst : 0.0;
  return s;
}

CvResult grid_search(const FeatureMatrix& X, TuneLearner learner, const Grid& grid,
                     const TuneBase& base, Exec exec) {
  X.validate();
  grid.validate(learner);
  const int n = static_cast<int>(X.n_rows());
  const int p = static_cast<int>(X.n_cols());

  CvResult res;
  res.learner = learner;
  res.metric = grid.metric;
  res.param_names = display_order(learner, grid);
  const auto combos = combinations(grid, res.param_names);
  for (const auto& c : combos) {
    switch (learner) {
      case TuneLearner::tree: apply_tree_params(base.tree, c).validate(); break;
      case TuneLearner::forest: apply_forest_params(base.forest, c).validate(p); break;
      case TuneLearner::gbm: apply_gbm_params(base.gbm, c).validate(); break;
    }
  }

  // Boosting combinations that differ only in n_trees share a fit.
  std::vector<std::vector<std::size_t>> groups;
  if (learner == TuneLearner::gbm) {
    std::map<ParamSet, std::size_t> key_to_group;
    for (std::size_t i = 0; i < combos.size(); ++i) {
      ParamSet key = combos[i];
      key.erase("n_trees");
      auto [it, inserted] = key_to_group.emplace(key, groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < combos.size(); ++i) groups.push_back({i});
  }

  std::vector<std::vector<std::vector<int>>> parts;
  for (int r = 0; r < grid.repeats; ++r) {
    parts.push_back(kfold_split(n, grid.folds, derive_seed(grid.seed, r)));
  }
  const std::size_t evals = static_cast<std::size_t>(grid.repeats) * grid.folds;
  std::vector<std::vector<FoldScore>> scores(combos.size(),
                                             std::vector<FoldScore>(evals));
  std::vector<std::vector<std::string>> failures(
      combos.size(), std::vector<std::string>(evals));

  parallel_for(exec, groups.size() * evals, [&](std::size_t t) {
    const auto& group = groups[t / evals];
    const std::size_t e = t % evals;
    const int r = static_cast<int>(e) / grid.folds;
    const int f = static_cast<int>(e) % grid.folds;
    const auto& hold = parts[r][f];
    const FeatureMatrix tr = select_rows(X, fold_complement(parts[r], n, f));
    const FeatureMatrix ho = select_rows(X, hold);
    std::vector<int> all(hold.size());
    std::iota(all.begin(), all.end(), 0);
    const std::uint64_t seed = derive_seed(grid.seed, r + 1, f + 1);
    try {
      switch (learner) {
        case TuneLearner::tree: {
          const auto tree = grow_tree(tr, apply_tree_params(base.tree, combos[group[0]]));
          scores[group[0]][e] = score_holdout(predict_tree(tree, ho), ho.response, all);
          break;
        }
        case TuneLearner::forest: {
          ForestConfig cfg = apply_forest_params(base.forest, combos[group[0]]);
          cfg.seed = seed;
          const auto forest = fit_forest(tr, cfg, Exec::serial);
          scores[group[0]][e] =
              score_holdout(predict_forest(forest, ho, Exec::serial), ho.response, all);
          break;
        }
        case TuneLearner::gbm: {
          BoostConfig cfg = apply_gbm_params(base.gbm, combos[group[0]]);
          for (std::size_t ci : group) {
            cfg.n_trees =
                std::max(cfg.n_trees, apply_gbm_params(base.gbm, combos[ci]).n_trees);
          }
          cfg.seed = seed;
          const auto model = fit_gbm(tr, cfg);
          for (std::size_t ci : group) {
            const int m = apply_gbm_params(base.gbm, combos[ci]).n_trees;
            scores[ci][e] =
                score_holdout(predict_gbm(model, ho, false, m), ho.response, all);
          }
          break;
        }
      }
    } catch (const std::exception& ex) {
      for (std::size_t ci : group) failures[ci][e] = ex.what();
    }
  });

  for (std::size_t i = 0; i < combos.size(); ++i) {
    CvRow row;
    row.params = combos[i];
    std::vector<double> rm, r2;
    for (std::size_t e = 0; e < evals; ++e) {
      if (!failures[i][e].empty()) {
        if (!row.disqualified) row.failure = failures[i][e];
        row.disqualified = true;
        continue;
      }
      rm.push_back(scores[i][e].rmse);
      r2.push_back(scores[i][e].r2);
    }
    row.evaluations = static_cast<int>(rm.size());
    if (!row.disqualified) {
      row.rmse = mean_of(rm);
      row.rmse_se = se_of(rm, row.rmse);
      row.r2 = mean_of(r2);
      row.r2_se = se_of(r2, row.r2);
    }
    res.rows.push_back(std::move(row));
  }

  std::vector<std::size_t> order(res.rows.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    const CvRow& x = res.rows[a];
    const CvRow& y = res.rows[b];
    if (x.disqualified != y.disqualified) return !x.disqualified;
    if (x.disqualified) return a < b;
    const double mx = grid.metric == CvMetric::rmse ? x.rmse : -x.r2;
    const double my = grid.metric == CvMetric::rmse ? y.rmse : -y.r2;
    if (mx != my) return mx < my;
    const double tx = param_or(x.params, {"n_trees", "n_tree"});
    const double ty = param_or(y.params, {"n_trees", "n_tree"});
    if (tx != ty) return tx < ty;
    const double dx = param_or(x.params, {"interaction_depth", "max_nodes", "max_depth",
                                          "max_leaves"});
    const double dy = param_or(y.params, {"interaction_depth", "max_nodes", "max_depth",
                                          "max_leaves"});
    if (dx != dy) return dx < dy;
    const double sx = param_or(x.params, {"shrinkage"});
    const double sy = param_or(y.params, {"shrinkage"});
    if (sx != sy) return sx > sy;
    return a < b;
  };
  std::sort(order.begin(), order.end(), better);
  for (std::size_t k = 0; k < order.size(); ++k) {
    res.rows[order[k]].rank = static_cast<int>(k) + 1;
  }
  res.winner = order.front();
  if (res.rows[res.winner].disqualified) {
    throw NumericalError("grid search: every combination failed; first error: " +
                         res.rows[res.winner].failure);
  }
  return res;
}

std::string cv_csv(const CvResult& result) {
  std::vector<std::string> header = result.param_names;
  for (const char* c : {"rmse", "rmse_se", "r2", "r2_se", "rank", "status"}) {
    header.push_back(c);
  }
  std::string out = join_csv(header) + "\n";
  for (const auto& row : result.rows) {
    std::vector<std::string> f;
    for (const auto& n : result.param_names) f.push_back(format_double(row.params.at(n)));
    if (row.disqualified) {
      f.insert(f.end(), {"", "", "", "", std::to_string(row.rank),
                         "failed: " + row.failure});
    } else {
      f.insert(f.end(), {format_double(row.rmse), format_double(row.rmse_se),
                         format_double(row.r2), format_double(row.r2_se),
                         std::to_string(row.rank), "ok"});
    }
    out += join_csv(f) + "\n";
  }
  return out;
}

std::map<std::string, std::vector<std::pair<double, double>>> marginal_curves(
    const CvResult& result) {
  std::map<std::string, std::vector<std::pair<double, double>>> out;
  const bool lower = result.metric == CvMetric::rmse;
  for (const auto& name : result.param_names) {
    std::map<double, double> best;
    for (const auto& row : result.rows) {
      if (row.disqualified) continue;
      const double v = row.params.at(name);
      const double m = lower ? row.rmse : row.r2;
      auto it = best.find(v);
      if (it == best.end()) {
        best.emplace(v, m);
      } else if (lower ? m < it->second : m > it->second) {
        it->second = m;
      }
    }
    out[name].assign(best.begin(), best.end());
  }
  return out;
}

}  // namespace crashstack
