#include "crashstack/serialize.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <type_traits>

#include "crashstack/error.hpp"
#include "crashstack/text.hpp"

namespace crashstack {
namespace {

constexpr int kBundleVersion = 1;

Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

Json vec(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

double get_num(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw DataError("model JSON: expected a number");
  return j.get<double>();
}

const Json& at(const Json& j, const char* key) {
  if (!j.is_object()) throw DataError("model JSON: expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("model JSON: missing key '") + key + "'");
  return *it;
}

Eigen::VectorXd get_vec(const Json& a) {
  if (!a.is_array()) throw DataError("model JSON: expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_num(a[i]);
  return v;
}

std::vector<double> get_dvec(const Json& a) {
  if (!a.is_array()) throw DataError("model JSON: expected an array");
  std::vector<double> v;
  for (const auto& x : a) v.push_back(get_num(x));
  return v;
}

template <typename F>
auto model_guard(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw DataError(std::string(what) + " JSON: " + e.what());
  }
}

// Partial config reader: unknown keys and ill-typed values are ConfigErrors.
class Reader {
 public:
  Reader(const Json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw ConfigError(what_ + ": expected a JSON object");
  }

  template <typename T>
  void opt(const char* key, T& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    out = value<T>(*it, key);
  }

  template <typename T>
  void opt(const char* key, std::optional<T>& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
    } else {
      out = value<T>(*it, key);
    }
  }

  const Json* sub(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return what_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) {
        throw ConfigError(what_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  template <typename T>
  T value(const Json& v, const char* key) const {
    const std::string where = what_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) {
        throw ConfigError(where + ": expected a non-negative integer");
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
    }
    try {
      return v.get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(where + ": wrong type");
    }
  }

  const Json& j_;
  std::string what_;
  std::set<std::string> used_;
};

Json node_json(const RegressionTree& t, int id) {
  const TreeNode& n = t.nodes.at(static_cast<std::size_t>(id));
  Json j = {{"id", id},
            {"n", n.n_node},
            {"prediction", num(n.prediction)},
            {"deviance", num(n.deviance)},
            {"depth", n.depth}};
  if (!n.is_leaf) {
    j["split_col"] = n.split_col;
    if (n.split_col >= 0 && n.split_col < static_cast<int>(t.column_names.size())) {
      j["column"] = t.column_names[n.split_col];
    }
    j["threshold"] = num(n.threshold);
    j["gain"] = num(n.gain);
    j["left"] = node_json(t, n.left);
    j["right"] = node_json(t, n.right);
  }
  return j;
}

void read_node(const Json& j, std::vector<TreeNode>& nodes, std::vector<bool>& seen) {
  const int id = at(j, "id").get<int>();
  if (id < 0 || id >= static_cast<int>(nodes.size()) || seen[id]) {
    throw DataError("tree JSON: bad node id " + std::to_string(id));
  }
  seen[id] = true;
  TreeNode& n = nodes[id];
  n.n_node = at(j, "n").get<int>();
  n.prediction = get_num(at(j, "prediction"));
  n.deviance = get_num(at(j, "deviance"));
  n.depth = at(j, "depth").get<int>();
  if (j.contains("left")) {
    n.is_leaf = false;
    n.split_col = at(j, "split_col").get<int>();
    n.threshold = get_num(at(j, "threshold"));
    n.gain = get_num(at(j, "gain"));
    n.left = at(at(j, "left"), "id").get<int>();
    n.right = at(at(j, "right"), "id").get<int>();
    read_node(j["left"], nodes, seen);
    read_node(j["right"], nodes, seen);
  }
}

int count_nodes(const Json& j) {
  int c = 1;
  if (j.contains("left")) c += count_nodes(j["left"]) + count_nodes(j["right"]);
  return c;
}

Json envelope_json(const CovariateEnvelope& e) {
  return {{"mean", e.mean}, {"sd", e.sd}, {"min", e.min}, {"max", e.max}};
}

CovariateEnvelope envelope_from_json(const Json& j, CovariateEnvelope e,
                                     const std::string& what) {
  Reader r(j, what);
  r.opt("mean", e.mean);
  r.opt("sd", e.sd);
  r.opt("min", e.min);
  r.opt("max", e.max);
  r.finish();
  return e;
}

std::string aggregation_name(Aggregation a) {
  return a == Aggregation::sum ? "sum" : "mean_per_year";
}

}  // namespace

// ---------------------------------------------------------------- models

Json to_json(const FittedGlm& m) {
  return {{"family", to_string(m.family)},
          {"column_names", m.column_names},
          {"beta", vec(m.beta)},
          {"alpha", m.alpha ? num(*m.alpha) : Json(nullptr)},
          {"loglik", num(m.loglik)},
          {"se", vec(m.se)},
          {"aic", num(m.aic)},
          {"bic", num(m.bic)},
          {"n", m.n},
          {"converged", m.converged},
          {"iterations", m.iterations},
          {"grad_norm", num(m.grad_norm)},
          {"note", m.note}};
}

FittedGlm glm_from_json(const Json& j) {
  return model_guard("glm", [&] {
    FittedGlm m;
    try {
      m.family = family_from_string(at(j, "family").get<std::string>());
    } catch (const ConfigError& e) {
      throw DataError(std::string("glm JSON: ") + e.what());
    }
    m.column_names = at(j, "column_names").get<std::vector<std::string>>();
    m.beta = get_vec(at(j, "beta"));
    if (m.beta.size() != static_cast<Eigen::Index>(m.column_names.size()) + 1) {
      throw DataError("glm JSON: beta length does not match column names");
    }
    if (!at(j, "alpha").is_null()) m.alpha = get_num(j["alpha"]);
    m.loglik = get_num(at(j, "loglik"));
    m.se = get_vec(at(j, "se"));
    m.aic = get_num(at(j, "aic"));
    m.bic = get_num(at(j, "bic"));
    m.n = at(j, "n").get<int>();
    m.converged = at(j, "converged").get<bool>();
    m.iterations = at(j, "iterations").get<int>();
    m.grad_norm = get_num(at(j, "grad_norm"));
    m.note = at(j, "note").get<std::string>();
    return m;
  });
}

Json to_json(const RegressionTree& t) {
  Json j = {{"column_names", t.column_names}, {"config", to_json(t.config)}};
  j["root"] = t.nodes.empty() ? Json(nullptr) : node_json(t, 0);
  return j;
}

RegressionTree tree_from_json(const Json& j) {
  return model_guard("tree", [&] {
    RegressionTree t;
    t.column_names = at(j, "column_names").get<std::vector<std::string>>();
    try {
      t.config = tree_config_from_json(at(j, "config"));
    } catch (const ConfigError& e) {
      throw DataError(std::string("tree JSON: ") + e.what());
    }
    const Json& root = at(j, "root");
    if (root.is_null()) return t;
    const int count = count_nodes(root);
    t.nodes.assign(count, TreeNode{});
    std::vector<bool> seen(count, false);
    read_node(root, t.nodes, seen);
    if (at(root, "id").get<int>() != 0) throw DataError("tree JSON: root id must be 0");
    for (const auto& n : t.nodes) {
      if (!n.is_leaf && (n.split_col < 0 ||
                         n.split_col >= static_cast<int>(t.column_names.size()))) {
        throw DataError("tree JSON: split column out of range");
      }
    }
    return t;
  });
}

Json to_json(const RandomForest& f) {
  Json trees = Json::array();
  for (const auto& t : f.trees) trees.push_back(to_json(t));
  return {{"column_names", f.column_names},
          {"config", to_json(f.config)},
          {"trees", trees},
          {"inbag", f.inbag},
          {"oob_predictions", vec(f.oob_predictions)},
          {"oob_counts", f.oob_counts},
          {"importance", vec(f.importance)},
          {"impurity_importance", vec(f.impurity_importance)}};
}

RandomForest forest_from_json(const Json& j) {
  return model_guard("forest", [&] {
    RandomForest f;
    f.column_names = at(j, "column_names").get<std::vector<std::string>>();
    try {
      f.config = forest_config_from_json(at(j, "config"));
    } catch (const ConfigError& e) {
      throw DataError(std::string("forest JSON: ") + e.what());
    }
    for (const auto& t : at(j, "trees")) f.trees.push_back(tree_from_json(t));
    f.inbag = at(j, "inbag").get<std::vector<std::vector<std::uint16_t>>>();
    f.oob_predictions = get_vec(at(j, "oob_predictions"));
    f.oob_counts = at(j, "oob_counts").get<std::vector<int>>();
    f.importance = get_dvec(at(j, "importance"));
    f.impurity_importance = get_dvec(at(j, "impurity_importance"));
    if (f.trees.empty()) throw DataError("forest JSON: no trees");
    return f;
  });
}

Json to_json(const BoostedModel& m) {
  Json trees = Json::array();
  for (const auto& t : m.trees) trees.push_back(to_json(t));
  return {{"column_names", m.column_names}, {"init", num(m.init)},
          {"shrinkage", num(m.shrinkage)},  {"loss", to_string(m.loss)},
          {"trees", trees},                 {"importance", vec(m.importance)},
          {"training_mse", vec(m.training_mse)}};
}

BoostedModel gbm_from_json(const Json& j) {
  return model_guard("gbm", [&] {
    BoostedModel m;
    m.column_names = at(j, "column_names").get<std::vector<std::string>>();
    m.init = get_num(at(j, "init"));
    m.shrinkage = get_num(at(j, "shrinkage"));
    try {
      m.loss = boost_loss_from_string(at(j, "loss").get<std::string>());
    } catch (const ConfigError& e) {
      throw DataError(std::string("gbm JSON: ") + e.what());
    }
    for (const auto& t : at(j, "trees")) m.trees.push_back(tree_from_json(t));
    m.importance = get_dvec(at(j, "importance"));
    m.training_mse = get_dvec(at(j, "training_mse"));
    return m;
  });
}

Json to_json(const LinearStackWeights& w) {
  return {{"w", vec(w.w)},
          {"intercept", w.intercept ? num(*w.intercept) : Json(nullptr)},
          {"mode", to_string(w.mode)}};
}

LinearStackWeights linear_from_json(const Json& j) {
  return model_guard("linear stack", [&] {
    LinearStackWeights w;
    w.w = get_vec(at(j, "w"));
    if (!at(j, "intercept").is_null()) w.intercept = get_num(j["intercept"]);
    try {
      w.mode = constraint_mode_from_string(at(j, "mode").get<std::string>());
    } catch (const ConfigError& e) {
      throw DataError(std::string("linear stack JSON: ") + e.what());
    }
    return w;
  });
}

Json to_json(const StackedModel& s) {
  Json meta = std::visit([](const auto& m) { return to_json(m); }, s.meta);
  Json base = {{"poisson", to_json(s.base.poisson)}, {"negbin", to_json(s.base.negbin)},
               {"tree", to_json(s.base.tree)},       {"tree_cp", num(s.base.tree_cp)},
               {"forest", to_json(s.base.forest)},   {"gbm", to_json(s.base.gbm)}};
  return {{"format", "crashstack-stack"},
          {"version", kBundleVersion},
          {"feature_columns", s.base.column_names},
          {"feature_log_cols", s.base.transform_log},
          {"meta_columns", s.meta_columns},
          {"meta_kind", to_string(s.kind)},
          {"base", base},
          {"meta", meta},
          {"base_config", to_json(s.base.config)},
          {"meta_config", to_json(s.meta_config)}};
}

StackedModel stacked_from_json(const Json& j) {
  return model_guard("bundle", [&] {
    if (!j.is_object() || j.value("format", "") != "crashstack-stack") {
      throw DataError("bundle JSON: not a stacked model bundle");
    }
    if (at(j, "version").get<int>() != kBundleVersion) {
      throw DataError("bundle JSON: unsupported version");
    }
    StackedModel s;
    s.base.column_names = at(j, "feature_columns").get<std::vector<std::string>>();
    s.base.transform_log = at(j, "feature_log_cols").get<std::set<std::string>>();
    s.meta_columns = at(j, "meta_columns").get<std::vector<std::string>>();
    const Json& b = at(j, "base");
    s.base.poisson = glm_from_json(at(b, "poisson"));
    s.base.negbin = glm_from_json(at(b, "negbin"));
    s.base.tree = tree_from_json(at(b, "tree"));
    s.base.tree_cp = get_num(at(b, "tree_cp"));
    s.base.forest = forest_from_json(at(b, "forest"));
    s.base.gbm = gbm_from_json(at(b, "gbm"));
    try {
      s.kind = meta_kind_from_string(at(j, "meta_kind").get<std::string>());
      s.base.config = base_configs_from_json(at(j, "base_config"));
      s.meta_config = meta_configs_from_json(at(j, "meta_config"));
    } catch (const ConfigError& e) {
      throw DataError(std::string("bundle JSON: ") + e.what());
    }
    const Json& m = at(j, "meta");
    switch (s.kind) {
      case MetaKind::linear: s.meta = linear_from_json(m); break;
      case MetaKind::tree: s.meta = tree_from_json(m); break;
      case MetaKind::forest: s.meta = forest_from_json(m); break;
      case MetaKind::gbm: s.meta = gbm_from_json(m); break;
    }
    return s;
  });
}

// ---------------------------------------------------------------- configs

Json to_json(const GlmSpec& c) {
  return {{"family", to_string(c.family)}, {"max_iter", c.max_iter}, {"tol", c.tol}};
}

Json to_json(const TreeConfig& c) {
  return {{"min_split", c.min_split},
          {"min_leaf", c.min_leaf},
          {"cp", c.cp},
          {"max_depth", c.max_depth ? Json(*c.max_depth) : Json(nullptr)},
          {"max_leaves", c.max_leaves ? Json(*c.max_leaves) : Json(nullptr)}};
}

Json to_json(const ForestConfig& c) {
  return {{"m_try", c.m_try},         {"n_tree", c.n_tree}, {"max_nodes", c.max_nodes},
          {"min_leaf", c.min_leaf},   {"seed", c.seed},     {"bootstrap", c.bootstrap}};
}

Json to_json(const BoostConfig& c) {
  return {{"n_trees", c.n_trees},
          {"shrinkage", c.shrinkage},
          {"interaction_depth", c.interaction_depth},
          {"min_leaf", c.min_leaf},
          {"subsample", c.subsample},
          {"seed", c.seed},
          {"loss", to_string(c.loss)}};
}

Json to_json(const BaseConfigs& c) {
  return {{"poisson", to_json(c.poisson)},   {"negbin", to_json(c.negbin)},
          {"tree", to_json(c.tree)},         {"tree_prune", c.tree_prune},
          {"tree_cv_folds", c.tree_cv_folds}, {"tree_seed", c.tree_seed},
          {"forest", to_json(c.forest)},     {"gbm", to_json(c.gbm)}};
}

Json to_json(const MetaConfigs& c) {
  return {{"linear_mode", to_string(c.linear_mode)},
          {"linear_intercept", c.linear_intercept},
          {"tree", to_json(c.tree)},
          {"tree_prune", c.tree_prune},
          {"tree_cv_folds", c.tree_cv_folds},
          {"tree_seed", c.tree_seed},
          {"forest", to_json(c.forest)},
          {"gbm", to_json(c.gbm)}};
}

Json to_json(const SplitSpec& c) {
  return {{"train_years", c.train_years},
          {"validation_years", c.validation_years},
          {"test_years", c.test_years},
          {"train_aggregation", aggregation_name(c.train_aggregation)}};
}

Json to_json(const PipelineConfig& c) {
  Json kinds = Json::array();
  for (auto k : c.meta_kinds) kinds.push_back(to_string(k));
  return {{"split", to_json(c.split)}, {"log_cols", c.log_cols},
          {"base", to_json(c.base)},   {"meta", to_json(c.meta)},
          {"meta_kinds", kinds},       {"clamp_nonneg", c.clamp_nonneg}};
}

Json to_json(const GenConfig& c) {
  return {{"n_segments", c.n_segments},
          {"years", c.years},
          {"true_beta", vec(c.true_beta)},
          {"true_alpha", c.true_alpha},
          {"aadt", envelope_json(c.aadt)},
          {"length", envelope_json(c.length)},
          {"drv_major_com", envelope_json(c.drv_major_com)},
          {"drv_minor_com", envelope_json(c.drv_minor_com)},
          {"drv_major_ind", envelope_json(c.drv_major_ind)},
          {"drv_minor_ind", envelope_json(c.drv_minor_ind)},
          {"offset", envelope_json(c.offset)},
          {"aadt_growth", c.aadt_growth},
          {"seed", c.seed}};
}

Json to_json(const Grid& g) {
  return {{"params", g.params},
          {"metric", to_string(g.metric)},
          {"folds", g.folds},
          {"repeats", g.repeats},
          {"seed", g.seed}};
}

GlmSpec glm_spec_from_json(const Json& j, GlmSpec c) {
  Reader r(j, "glm");
  std::string family = to_string(c.family);
  r.opt("family", family);
  c.family = family_from_string(family);
  r.opt("max_iter", c.max_iter);
  r.opt("tol", c.tol);
  r.finish();
  return c;
}

TreeConfig tree_config_from_json(const Json& j, TreeConfig c) {
  Reader r(j, "tree");
  r.opt("min_split", c.min_split);
  r.opt("min_leaf", c.min_leaf);
  r.opt("cp", c.cp);
  r.opt("max_depth", c.max_depth);
  r.opt("max_leaves", c.max_leaves);
  r.finish();
  return c;
}

ForestConfig forest_config_from_json(const Json& j, ForestConfig c) {
  Reader r(j, "forest");
  r.opt("m_try", c.m_try);
  r.opt("n_tree", c.n_tree);
  r.opt("max_nodes", c.max_nodes);
  r.opt("min_leaf", c.min_leaf);
  r.opt("seed", c.seed);
  r.opt("bootstrap", c.bootstrap);
  r.finish();
  return c;
}

BoostConfig boost_config_from_json(const Json& j, BoostConfig c) {
  Reader r(j, "gbm");
  r.opt("n_trees", c.n_trees);
  r.opt("shrinkage", c.shrinkage);
  r.opt("interaction_depth", c.interaction_depth);
  r.opt("min_leaf", c.min_leaf);
  r.opt("subsample", c.subsample);
  r.opt("seed", c.seed);
  std::string loss = to_string(c.loss);
  r.opt("loss", loss);
  c.loss = boost_loss_from_string(loss);
  r.finish();
  return c;
}

BaseConfigs base_configs_from_json(const Json& j, BaseConfigs c) {
  Reader r(j, "base");
  if (const Json* s = r.sub("poisson")) c.poisson = glm_spec_from_json(*s, c.poisson);
  if (const Json* s = r.sub("negbin")) c.negbin = glm_spec_from_json(*s, c.negbin);
  if (const Json* s = r.sub("tree")) c.tree = tree_config_from_json(*s, c.tree);
  r.opt("tree_prune", c.tree_prune);
  r.opt("tree_cv_folds", c.tree_cv_folds);
  r.opt("tree_seed", c.tree_seed);
  if (const Json* s = r.sub("forest")) c.forest = forest_config_from_json(*s, c.forest);
  if (const Json* s = r.sub("gbm")) c.gbm = boost_config_from_json(*s, c.gbm);
  r.finish();
  return c;
}

MetaConfigs meta_configs_from_json(const Json& j, MetaConfigs c) {
  Reader r(j, "meta");
  std::string mode = to_string(c.linear_mode);
  r.opt("linear_mode", mode);
  c.linear_mode = constraint_mode_from_string(mode);
  r.opt("linear_intercept", c.linear_intercept);
  if (const Json* s = r.sub("tree")) c.tree = tree_config_from_json(*s, c.tree);
  r.opt("tree_prune", c.tree_prune);
  r.opt("tree_cv_folds", c.tree_cv_folds);
  r.opt("tree_seed", c.tree_seed);
  if (const Json* s = r.sub("forest")) c.forest = forest_config_from_json(*s, c.forest);
  if (const Json* s = r.sub("gbm")) c.gbm = boost_config_from_json(*s, c.gbm);
  r.finish();
  return c;
}

SplitSpec split_from_json(const Json& j, SplitSpec c) {
  Reader r(j, "split");
  r.opt("train_years", c.train_years);
  r.opt("validation_years", c.validation_years);
  r.opt("test_years", c.test_years);
  std::string agg = aggregation_name(c.train_aggregation);
  r.opt("train_aggregation", agg);
  if (agg == "sum") {
    c.train_aggregation = Aggregation::sum;
  } else if (agg == "mean_per_year") {
    c.train_aggregation = Aggregation::mean_per_year;
  } else {
    throw ConfigError("split.train_aggregation: expected mean_per_year or sum");
  }
  r.finish();
  return c;
}

PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig c) {
  Reader r(j, "pipeline");
  if (const Json* s = r.sub("split")) c.split = split_from_json(*s, c.split);
  r.opt("log_cols", c.log_cols);
  if (const Json* s = r.sub("base")) c.base = base_configs_from_json(*s, c.base);
  if (const Json* s = r.sub("meta")) c.meta = meta_configs_from_json(*s, c.meta);
  std::vector<std::string> kinds;
  for (auto k : c.meta_kinds) kinds.push_back(to_string(k));
  r.opt("meta_kinds", kinds);
  c.meta_kinds.clear();
  for (const auto& k : kinds) c.meta_kinds.push_back(meta_kind_from_string(k));
  r.opt("clamp_nonneg", c.clamp_nonneg);
  r.finish();
  return c;
}

GenConfig gen_config_from_json(const Json& j, GenConfig c) {
  Reader r(j, "simulate");
  r.opt("n_segments", c.n_segments);
  r.opt("years", c.years);
  std::vector<double> beta(c.true_beta.data(), c.true_beta.data() + c.true_beta.size());
  r.opt("true_beta", beta);
  c.true_beta = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                                  static_cast<Eigen::Index>(beta.size()));
  r.opt("true_alpha", c.true_alpha);
  struct Env {
    const char* key;
    CovariateEnvelope* e;
  };
  for (Env env : {Env{"aadt", &c.aadt}, Env{"length", &c.length},
                  Env{"drv_major_com", &c.drv_major_com},
                  Env{"drv_minor_com", &c.drv_minor_com},
                  Env{"drv_major_ind", &c.drv_major_ind},
                  Env{"drv_minor_ind", &c.drv_minor_ind}, Env{"offset", &c.offset}}) {
    if (const Json* s = r.sub(env.key)) {
      *env.e = envelope_from_json(*s, *env.e, r.path(env.key));
    }
  }
  r.opt("aadt_growth", c.aadt_growth);
  r.opt("seed", c.seed);
  r.finish();
  return c;
}

Grid grid_from_json(const Json& j, Grid g) {
  Reader r(j, "grid");
  r.opt("params", g.params);
  std::string metric = to_string(g.metric);
  r.opt("metric", metric);
  g.metric = cv_metric_from_string(metric);
  r.opt("folds", g.folds);
  r.opt("repeats", g.repeats);
  r.opt("seed", g.seed);
  r.finish();
  return g;
}

Json truth_json(const GenConfig& c) {
  return {{"beta", vec(c.true_beta)},
          {"beta_terms",
           {"intercept", "ln_aadt_thousands", "ln_length_miles", "drv_major_com",
            "drv_minor_com", "drv_major_ind", "drv_minor_ind", "offset_ft"}},
          {"alpha", c.true_alpha},
          {"seed", c.seed},
          {"config", to_json(c)}};
}

// ---------------------------------------------------------------- files

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
}

Json load_json(const std::filesystem::path& path) {
  try {
    return parse_json(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_json(const std::filesystem::path& path, const Json& j) {
  write_file(path, dump_json(j));
}

}  // namespace crashstack
