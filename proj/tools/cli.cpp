#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>

#include "crashstack/boosting.hpp"
#include "crashstack/cart.hpp"
#include "crashstack/dataset.hpp"
#include "crashstack/error.hpp"
#include "crashstack/eval.hpp"
#include "crashstack/forest.hpp"
#include "crashstack/glm.hpp"
#include "crashstack/parallel.hpp"
#include "crashstack/serialize.hpp"
#include "crashstack/simgen.hpp"
#include "crashstack/stacking.hpp"
#include "crashstack/svg.hpp"
#include "crashstack/text.hpp"
#include "crashstack/tuning.hpp"

namespace crashstack::cli {
namespace {

namespace fs = std::filesystem;

const char* const kFitLearners[] = {"poisson", "negbin", "tree", "forest", "gbm"};
constexpr int kPdPoints = 20;

struct Flags {
  std::string config;
  std::string seed;
  std::string input;
  std::string output_dir;
  std::string threads;
  std::string learner;
  std::string meta;
  std::string mode;
  std::string model;
  std::string period;
};

struct RunConfig {
  std::string command;
  std::optional<std::uint64_t> seed;
  std::string input;
  Schema schema;
  ValidationMode validation = ValidationMode::strict;
  fs::path output_root = "crashstack-out";
  int threads = 0;
  GenConfig simulate;
  PipelineConfig pipeline;
  std::string fit_learner = "poisson";
  MarginalEffect marginal = MarginalEffect::average;
  TuneLearner tune_learner = TuneLearner::gbm;
  std::optional<Grid> grid;
  std::string model;
  std::string period = "test";
};

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

int parse_threads(const std::string& s, const std::string& what) {
  const auto v = parse_u64(s, what);
  if (v > 4096) throw ConfigError(what + ": thread count out of range");
  return static_cast<int>(v);
}

std::string marginal_name(MarginalEffect m) {
  return m == MarginalEffect::average ? "average" : "at_means";
}

Grid default_grid(TuneLearner l) {
  Grid g;
  switch (l) {
    case TuneLearner::tree:
      g.params = {{"cp", {0.001, 0.005, 0.01, 0.02, 0.05}}, {"min_leaf", {5, 10}}};
      break;
    case TuneLearner::forest:
      g.params = {{"m_try", {2, 3, 5, 7}},
                  {"n_tree", {100, 250, 500}},
                  {"max_nodes", {6, 10, 14, 20}}};
      break;
    case TuneLearner::gbm:
      g.params = {{"shrinkage", {0.1, 0.5, 1.0}},
                  {"interaction_depth", {1, 3, 7, 10}},
                  {"n_trees", {100, 300, 500, 1000}}};
      break;
  }
  return g;
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(what + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T json_get(const Json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(what + ": wrong type");
  }
}

void apply_config_file(RunConfig& rc, const Json& j) {
  check_keys(j,
             {"seed", "input", "schema", "validation", "output_dir", "simulate",
              "pipeline", "fit", "tune", "evaluate"},
             "config");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) {
      throw ConfigError("config.seed: expected a non-negative integer");
    }
    rc.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("input")) rc.input = json_get<std::string>(j["input"], "config.input");
  if (j.contains("schema")) {
    rc.schema.columns =
        json_get<std::map<std::string, std::string>>(j["schema"], "config.schema");
    for (const auto& [field, header] : rc.schema.columns) {
      bool known = false;
      for (const char* f : kPanelFields) known = known || field == f;
      if (!known) throw ConfigError("config.schema: unknown field '" + field + "'");
    }
  }
  if (j.contains("validation")) {
    const auto v = json_get<std::string>(j["validation"], "config.validation");
    if (v == "strict") {
      rc.validation = ValidationMode::strict;
    } else if (v == "lenient") {
      rc.validation = ValidationMode::lenient;
    } else {
      throw ConfigError("config.validation: expected strict or lenient");
    }
  }
  if (j.contains("output_dir")) {
    rc.output_root = json_get<std::string>(j["output_dir"], "config.output_dir");
  }
  if (j.contains("simulate")) rc.simulate = gen_config_from_json(j["simulate"], rc.simulate);
  if (j.contains("pipeline")) {
    rc.pipeline = pipeline_config_from_json(j["pipeline"], rc.pipeline);
  }
  if (j.contains("fit")) {
    const Json& f = j["fit"];
    check_keys(f, {"learner", "marginal_effect"}, "config.fit");
    if (f.contains("learner")) rc.fit_learner = json_get<std::string>(f["learner"], "config.fit.learner");
    if (f.contains("marginal_effect")) {
      const auto m = json_get<std::string>(f["marginal_effect"], "config.fit.marginal_effect");
      if (m == "average") {
        rc.marginal = MarginalEffect::average;
      } else if (m == "at_means") {
        rc.marginal = MarginalEffect::at_means;
      } else {
        throw ConfigError("config.fit.marginal_effect: expected average or at_means");
      }
    }
  }
  if (j.contains("tune")) {
    const Json& t = j["tune"];
    check_keys(t, {"learner", "grid"}, "config.tune");
    if (t.contains("learner")) {
      rc.tune_learner =
          tune_learner_from_string(json_get<std::string>(t["learner"], "config.tune.learner"));
    }
    if (t.contains("grid")) rc.grid = grid_from_json(t["grid"], Grid{});
  }
  if (j.contains("evaluate")) {
    const Json& e = j["evaluate"];
    check_keys(e, {"model", "period"}, "config.evaluate");
    if (e.contains("model")) rc.model = json_get<std::string>(e["model"], "config.evaluate.model");
    if (e.contains("period")) rc.period = json_get<std::string>(e["period"], "config.evaluate.period");
  }
}

std::vector<MetaKind> parse_meta_list(const std::string& s) {
  if (s == "all") return {MetaKind::tree, MetaKind::forest, MetaKind::gbm};
  std::vector<MetaKind> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(meta_kind_from_string(item));
  if (out.empty()) throw ConfigError("--meta: empty list");
  return out;
}

RunConfig resolve(const std::string& command, const Flags& f) {
  RunConfig rc;
  rc.command = command;
  if (!f.config.empty()) apply_config_file(rc, load_json(f.config));

  if (const char* env = std::getenv("CRASHSTACK_OUTPUT_DIR"); env && *env) {
    rc.output_root = env;
  }
  if (const char* env = std::getenv("CRASHSTACK_THREADS"); env && *env) {
    rc.threads = parse_threads(env, "CRASHSTACK_THREADS");
  }

  if (!f.seed.empty()) rc.seed = parse_u64(f.seed, "--seed");
  if (!f.input.empty()) rc.input = f.input;
  if (!f.output_dir.empty()) rc.output_root = f.output_dir;
  if (!f.threads.empty()) rc.threads = parse_threads(f.threads, "--threads");
  if (!f.learner.empty()) {
    if (command == "tune") {
      rc.tune_learner = tune_learner_from_string(f.learner);
    } else {
      rc.fit_learner = f.learner;
    }
  }
  if (!f.meta.empty()) rc.pipeline.meta_kinds = parse_meta_list(f.meta);
  if (!f.mode.empty()) rc.pipeline.meta.linear_mode = constraint_mode_from_string(f.mode);
  if (!f.model.empty()) rc.model = f.model;
  if (!f.period.empty()) rc.period = f.period;

  if (!rc.seed) {
    throw ConfigError("a seed is required (--seed or \"seed\" in the config file)");
  }
  rc.simulate.seed = *rc.seed;
  apply_master_seed(rc.pipeline, *rc.seed);
  if (rc.grid) rc.grid->seed = *rc.seed;

  if (command == "fit") {
    bool known = false;
    for (const char* l : kFitLearners) known = known || rc.fit_learner == l;
    if (!known) {
      throw ConfigError("unknown learner '" + rc.fit_learner +
                        "' (expected poisson, negbin, tree, forest or gbm)");
    }
  }
  if (command == "evaluate" && rc.period != "train" && rc.period != "validation" &&
      rc.period != "test") {
    throw ConfigError("--period must be train, validation or test");
  }
  if ((command == "fit" || command == "tune" || command == "stack" ||
       command == "evaluate") &&
      rc.input.empty()) {
    throw ConfigError(command + " needs an input panel (--input or \"input\")");
  }
  if ((command == "evaluate" || command == "report") && rc.model.empty()) {
    throw ConfigError(command + " needs a model file (--model)");
  }
  return rc;
}

// Everything that influences results. Output location and thread count are
// left out, so they never change the run directory name.
Json resolved_json(const RunConfig& rc) {
  Json j = {{"command", rc.command}, {"seed", *rc.seed}};
  if (rc.command == "simulate") {
    j["simulate"] = to_json(rc.simulate);
    return j;
  }
  if (!rc.input.empty()) {
    j["input"] = rc.input;
    j["schema"] = rc.schema.columns;
    j["validation"] = rc.validation == ValidationMode::strict ? "strict" : "lenient";
  }
  j["pipeline"] = to_json(rc.pipeline);
  if (rc.command == "fit") {
    j["fit"] = {{"learner", rc.fit_learner}, {"marginal_effect", marginal_name(rc.marginal)}};
  }
  if (rc.command == "tune") {
    Grid g = rc.grid.value_or(default_grid(rc.tune_learner));
    g.seed = *rc.seed;
    j["tune"] = {{"learner", to_string(rc.tune_learner)}, {"grid", to_json(g)}};
  }
  if (rc.command == "evaluate" || rc.command == "report") {
    j["evaluate"] = {{"model", rc.model}, {"period", rc.period}};
  }
  return j;
}

std::string hash_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str().substr(0, 12);
}

fs::path prepare_run_dir(const RunConfig& rc, const Json& resolved, std::ostream& out) {
  const fs::path dir = rc.output_root / (rc.command + "-" + hash_hex(resolved.dump()));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  save_json(dir / "config.resolved.json", resolved);
  out << "output: " << dir.string() << "\n";
  return dir;
}

SegmentPanel read_panel(const RunConfig& rc, std::ostream& err) {
  std::vector<RowIssue> dropped;
  SegmentPanel p = load_panel(rc.input, rc.schema, rc.validation, &dropped);
  for (const auto& d : dropped) {
    err << "warning: dropped line " << d.line << ": " << d.message << "\n";
  }
  return p;
}

std::string summary_csv(const std::vector<ColumnSummary>& rows) {
  std::string out = "variable,n,mean,sd,min,max\n";
  for (const auto& c : rows) {
    out += join_csv({c.name, std::to_string(c.n), format_double(c.mean),
                     format_double(c.sd), format_double(c.min), format_double(c.max)}) +
           "\n";
  }
  return out;
}

std::vector<std::string> term_names(const std::vector<std::string>& cols,
                                    const std::set<std::string>& logs) {
  std::vector<std::string> out{"intercept"};
  for (const auto& c : cols) out.push_back(logs.count(c) ? "ln(" + c + ")" : c);
  return out;
}

std::string glm_table(const FittedGlm& m, const std::set<std::string>& logs,
                      const Eigen::VectorXd* me, const std::string& me_label) {
  std::ostringstream out;
  out << (m.family == Family::poisson ? "Poisson" : "Negative binomial (NB2)")
      << " regression, n = " << m.n << ", "
      << (m.converged ? "converged" : "NOT converged") << " in " << m.iterations
      << " iterations\n";
  if (!m.note.empty()) out << "note: " << m.note << "\n";
  const auto terms = term_names(m.column_names, logs);
  const auto t = m.t_stats();
  out << std::left << std::setw(24) << "term" << std::right << std::setw(12)
      << "estimate" << std::setw(12) << "std.err" << std::setw(10) << "t-stat";
  if (me) out << std::setw(14) << me_label;
  out << "\n";
  for (Eigen::Index k = 0; k < m.beta.size(); ++k) {
    out << std::left << std::setw(24) << terms[k] << std::right << std::setw(12)
        << format_fixed(m.beta(k), 4) << std::setw(12)
        << (k < m.se.size() ? format_fixed(m.se(k), 4) : "") << std::setw(10)
        << (k < t.size() ? format_fixed(t(k), 2) : "");
    if (me && k > 0) out << std::setw(14) << format_fixed((*me)(k - 1), 4);
    out << "\n";
  }
  if (m.alpha) {
    const auto k = m.beta.size();
    out << std::left << std::setw(24) << "alpha (over-dispersion)" << std::right
        << std::setw(12) << format_fixed(*m.alpha, 4) << std::setw(12)
        << (k < m.se.size() ? format_fixed(m.se(k), 4) : "") << "\n";
  }
  out << "log-likelihood " << format_fixed(m.loglik, 3) << "   AIC "
      << format_fixed(m.aic, 3) << "   BIC " << format_fixed(m.bic, 3) << "\n";
  return out.str();
}

std::string glm_coef_csv(const FittedGlm& m, const std::set<std::string>& logs,
                         const Eigen::VectorXd& me) {
  const auto terms = term_names(m.column_names, logs);
  const auto t = m.t_stats();
  std::string out = "term,estimate,std_err,t_stat,marginal_effect\n";
  for (Eigen::Index k = 0; k < m.beta.size(); ++k) {
    out += join_csv({terms[k], format_double(m.beta(k)),
                     k < m.se.size() ? format_double(m.se(k)) : "",
                     k < t.size() ? format_double(t(k)) : "",
                     k > 0 ? format_double(me(k - 1)) : ""}) +
           "\n";
  }
  if (m.alpha) {
    const auto k = m.beta.size();
    out += join_csv({"alpha", format_double(*m.alpha),
                     k < m.se.size() ? format_double(m.se(k)) : "", "", ""}) +
           "\n";
  }
  out += "loglik," + format_double(m.loglik) + ",,,\n";
  out += "aic," + format_double(m.aic) + ",,,\n";
  out += "bic," + format_double(m.bic) + ",,,\n";
  return out;
}

std::string importance_csv(const std::vector<std::string>& cols,
                           const std::vector<double>& imp) {
  std::string out = "column,importance\n";
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out += join_csv({cols[j], format_double(j < imp.size() ? imp[j] : 0.0)}) + "\n";
  }
  return out;
}

void write_importance(const fs::path& dir, const std::string& stem,
                      const std::vector<std::string>& cols,
                      const std::vector<double>& imp, const std::string& title,
                      const std::string& label) {
  write_file(dir / (stem + ".csv"), importance_csv(cols, imp));
  std::vector<std::pair<std::string, double>> bars;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    bars.emplace_back(cols[j], j < imp.size() ? imp[j] : 0.0);
  }
  write_file(dir / (stem + ".svg"), svg::bar_chart(bars, title, label));
}

std::string importance_text(const std::vector<std::string>& cols,
                            const std::vector<double>& imp) {
  std::ostringstream out;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out << "  " << std::left << std::setw(20) << cols[j] << std::right << std::setw(10)
        << format_fixed(j < imp.size() ? imp[j] : 0.0, 2) << "\n";
  }
  return out.str();
}

Json model_wrapper(const std::string& learner, const std::set<std::string>& logs,
                   Json model) {
  return {{"format", "crashstack-model"},
          {"learner", learner},
          {"log_cols", logs},
          {"model", std::move(model)}};
}

FeatureMatrix training_matrix(const RunConfig& rc, const SegmentPanel& panel) {
  rc.pipeline.split.validate();
  return build_period_matrix(panel, rc.pipeline.split.train_years,
                             rc.pipeline.split.train_aggregation, rc.pipeline.log_cols);
}

// ---------------------------------------------------------------- commands

int cmd_simulate(const RunConfig& rc, std::ostream& out) {
  const Json resolved = resolved_json(rc);
  const SegmentPanel panel = generate_panel(rc.simulate);
  const fs::path dir = prepare_run_dir(rc, resolved, out);
  save_panel(panel, dir / "panel.csv");
  save_json(dir / "truth.json", truth_json(rc.simulate));
  write_file(dir / "describe.csv", summary_csv(describe(panel)));
  out << "wrote " << panel.size() << " segment-years (" << rc.simulate.n_segments
      << " segments) to " << (dir / "panel.csv").string() << "\n";
  return 0;
}

int cmd_fit(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Json resolved = resolved_json(rc);
  const SegmentPanel panel = read_panel(rc, err);
  const FeatureMatrix X = training_matrix(rc, panel);
  const fs::path dir = prepare_run_dir(rc, resolved, out);
  const auto& base = rc.pipeline.base;
  const auto& logs = X.transform_log;
  const std::string& learner = rc.fit_learner;

  if (learner == "poisson" || learner == "negbin") {
    GlmSpec spec = learner == "poisson" ? base.poisson : base.negbin;
    spec.family = learner == "poisson" ? Family::poisson : Family::negative_binomial;
    const FittedGlm m = fit_glm(X, spec);
    const Eigen::VectorXd me = marginal_effects(m, X, rc.marginal);
    save_json(dir / "model.json", model_wrapper(learner, logs, to_json(m)));
    write_file(dir / "coefficients.csv", glm_coef_csv(m, logs, me));
    const std::string table =
        glm_table(m, logs, &me, rc.marginal == MarginalEffect::average ? "AME" : "MEM");
    write_file(dir / "summary.txt", table);
    out << table;
  } else if (learner == "tree") {
    RegressionTree tree = grow_tree(X, base.tree);
    std::string prune_csv = "cp,leaves,cv_error,cv_se\n";
    if (base.tree_prune) {
      PruneResult r = prune_one_se(tree, X, base.tree_cv_folds, base.tree_seed);
      for (const auto& row : r.table) {
        prune_csv += join_csv({format_double(row.cp), std::to_string(row.leaves),
                               format_double(row.cv_error), format_double(row.cv_se)}) +
                     "\n";
      }
      tree = std::move(r.tree);
      out << "one-SE pruning kept cp = " << format_double(r.cp_selected) << "\n";
    }
    save_json(dir / "model.json", model_wrapper(learner, logs, to_json(tree)));
    write_file(dir / "prune_table.csv", prune_csv);
    const std::string text = render_tree(tree);
    write_file(dir / "tree.txt", text);
    out << text;
  } else if (learner == "forest") {
    const RandomForest f = fit_forest(X, base.forest);
    save_json(dir / "model.json", model_wrapper(learner, logs, to_json(f)));
    write_importance(dir, "importance", f.column_names, f.importance,
                     "Random forest permutation importance", "importance (max = 100)");
    std::ostringstream s;
    s << "random forest: " << f.trees.size() << " trees, m_try = " << f.config.m_try
      << ", max_nodes = " << f.config.max_nodes << "\n"
      << "OOB MSE " << format_fixed(oob_mse(f, X.response), 4) << ", OOB R^2 "
      << format_fixed(oob_r2(f, X.response), 4) << "\npermutation importance:\n"
      << importance_text(f.column_names, f.importance);
    write_file(dir / "summary.txt", s.str());
    out << s.str();
  } else {
    const BoostedModel g = fit_gbm(X, base.gbm);
    save_json(dir / "model.json", model_wrapper(learner, logs, to_json(g)));
    write_importance(dir, "importance", g.column_names, g.importance,
                     "Boosting relative influence", "relative influence (%)");
    std::string mse_csv = "stage,training_mse\n";
    for (std::size_t k = 0; k < g.training_mse.size(); ++k) {
      mse_csv += std::to_string(k + 1) + "," + format_double(g.training_mse[k]) + "\n";
    }
    write_file(dir / "training_mse.csv", mse_csv);
    for (const auto& col : g.column_names) {
      const auto pd = partial_dependence(g, col, column_grid(X, col, kPdPoints), X);
      std::string csv = "value,partial_dependence\n";
      for (const auto& [v, y] : pd) csv += format_double(v) + "," + format_double(y) + "\n";
      write_file(dir / ("pd_" + col + ".csv"), csv);
      const std::string xl = logs.count(col) ? "ln(" + col + ")" : col;
      write_file(dir / ("pd_" + col + ".svg"),
                 svg::line_chart({{col, pd}}, "Partial dependence: " + xl, xl,
                                 "mean predicted crashes"));
    }
    std::ostringstream s;
    s << "gradient boosting: " << g.trees.size() << " trees, shrinkage "
      << format_double(g.shrinkage) << ", final training MSE "
      << format_fixed(g.training_mse.empty() ? 0.0 : g.training_mse.back(), 4)
      << "\nrelative influence (%):\n"
      << importance_text(g.column_names, g.importance);
    write_file(dir / "summary.txt", s.str());
    out << s.str();
  }
  return 0;
}

int cmd_tune(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Json resolved = resolved_json(rc);
  const SegmentPanel panel = read_panel(rc, err);
  const FeatureMatrix X = training_matrix(rc, panel);
  Grid grid = rc.grid.value_or(default_grid(rc.tune_learner));
  grid.seed = *rc.seed;
  const fs::path dir = prepare_run_dir(rc, resolved, out);
  const TuneBase base{rc.pipeline.base.tree, rc.pipeline.base.forest,
                      rc.pipeline.base.gbm};
  const CvResult res = grid_search(X, rc.tune_learner, grid, base);
  write_file(dir / "cv.csv", cv_csv(res));
  for (const auto& [name, curve] : marginal_curves(res)) {
    std::string csv = name + "," + to_string(res.metric) + "\n";
    for (const auto& [v, m] : curve) csv += format_double(v) + "," + format_double(m) + "\n";
    write_file(dir / ("curve_" + name + ".csv"), csv);
    write_file(dir / ("tuning_" + name + ".svg"),
               svg::line_chart({{name, curve}}, "Cross-validated " + to_string(res.metric),
                               name, "best mean " + to_string(res.metric)));
  }
  const CvRow& w = res.best();
  out << to_string(rc.tune_learner) << " grid: " << res.rows.size() << " combinations, "
      << grid.folds << "-fold x " << grid.repeats << "\nwinner:";
  for (const auto& n : res.param_names) out << " " << n << "=" << format_double(w.params.at(n));
  out << "  rmse " << format_fixed(w.rmse, 4) << " (se " << format_fixed(w.rmse_se, 4)
      << "), r2 " << format_fixed(w.r2, 4) << "\n";
  int failed = 0;
  for (const auto& r : res.rows) failed += r.disqualified;
  if (failed) err << "warning: " << failed << " combinations failed and were disqualified\n";
  return 0;
}

int cmd_stack(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Json resolved = resolved_json(rc);
  const SegmentPanel panel = read_panel(rc, err);
  const PipelineResult r = run_pipeline(panel, rc.pipeline);
  const fs::path dir = prepare_run_dir(rc, resolved, out);
  for (const auto& s : r.stacks) {
    const std::string kind = to_string(s.kind);
    save_json(dir / ("stack_" + kind + ".json"), to_json(s));
    write_importance(dir, "meta_importance_" + kind, s.meta_columns,
                     meta_importance(s.meta), "Meta-learner importance (" + kind + ")",
                     kind == "linear" ? "|weight|" : "importance");
  }
  write_file(dir / "report.csv", report_csv(r.report));
  const std::string table = report_table(r.report);
  write_file(dir / "report.txt", table);
  write_file(dir / "validation_summary.csv", summary_csv(r.validation_summary));
  const auto& obs = r.periods.test.response;
  const std::span<const double> obs_span(obs.data(), obs.size());
  for (const auto& p : r.test_predictions) {
    scatter_export(p.pred, obs_span, dir / ("scatter_" + p.name),
                   p.name + ": observed vs predicted (test period)");
  }
  out << table;
  return 0;
}

struct LoadedModel {
  std::string learner;  // fit learner name or "stack"
  std::set<std::string> log_cols;
  Json model;
};

LoadedModel load_model(const std::string& path) {
  const Json j = load_json(path);
  LoadedModel m;
  const std::string format = j.is_object() ? j.value("format", "") : "";
  if (format == "crashstack-stack") {
    m.learner = "stack";
    m.model = j;
    return m;
  }
  if (format != "crashstack-model") {
    throw DataError(path + ": not a crashstack model or stack bundle");
  }
  try {
    m.learner = j.at("learner").get<std::string>();
    m.log_cols = j.at("log_cols").get<std::set<std::string>>();
    m.model = j.at("model");
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return m;
}

Eigen::VectorXd predict_loaded(const LoadedModel& m, const FeatureMatrix& X) {
  if (m.learner == "stack") return predict_stacked(stacked_from_json(m.model), X);
  if (m.learner == "poisson" || m.learner == "negbin") {
    return predict_mean(glm_from_json(m.model), X);
  }
  if (m.learner == "tree") return predict_tree(tree_from_json(m.model), X);
  if (m.learner == "forest") return predict_forest(forest_from_json(m.model), X);
  if (m.learner == "gbm") return predict_gbm(gbm_from_json(m.model), X);
  throw DataError("unknown model learner '" + m.learner + "'");
}

int cmd_evaluate(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Json resolved = resolved_json(rc);
  const LoadedModel m = load_model(rc.model);
  std::set<std::string> logs = m.log_cols;
  if (m.learner == "stack") {
    logs = m.model.at("feature_log_cols").get<std::set<std::string>>();
  }
  const SegmentPanel panel = read_panel(rc, err);
  const auto& split = rc.pipeline.split;
  split.validate();
  const std::set<int>& years = rc.period == "train"        ? split.train_years
                               : rc.period == "validation" ? split.validation_years
                                                           : split.test_years;
  const Aggregation agg =
      rc.period == "train" ? split.train_aggregation : Aggregation::mean_per_year;
  const FeatureMatrix X = build_period_matrix(panel, years, agg, logs);
  const Eigen::VectorXd pred = predict_loaded(m, X);
  const fs::path dir = prepare_run_dir(rc, resolved, out);

  std::string csv = "segment_id,observed,predicted\n";
  for (Eigen::Index i = 0; i < X.n_rows(); ++i) {
    const std::string id = i < static_cast<Eigen::Index>(X.row_ids.size())
                               ? X.row_ids[i]
                               : std::to_string(i + 1);
    csv += join_csv({id, format_double(X.response(i)), format_double(pred(i))}) + "\n";
  }
  write_file(dir / "predictions.csv", csv);
  const std::vector<double> p(pred.begin(), pred.end());
  const MetricsReport rep =
      build_report({{m.learner, m.learner == "stack" ? ModelRole::meta : ModelRole::base, p}},
                   std::span<const double>(X.response.data(), X.response.size()),
                   m.learner);
  write_file(dir / "metrics.csv", report_csv(rep));
  scatter_export(p, std::span<const double>(X.response.data(), X.response.size()),
                 dir / "scatter", m.learner + ": observed vs predicted (" + rc.period + ")");
  out << m.learner << " on " << rc.period << " period (n = " << X.n_rows() << "): RMSE "
      << format_fixed(rep.rows[0].rmse, 4) << ", MAE " << format_fixed(rep.rows[0].mae, 4)
      << "\n";
  return 0;
}

int cmd_report(const RunConfig& rc, std::ostream& out) {
  const Json resolved = resolved_json(rc);
  const LoadedModel m = load_model(rc.model);
  std::ostringstream s;
  if (m.learner == "poisson" || m.learner == "negbin") {
    s << glm_table(glm_from_json(m.model), m.log_cols, nullptr, "");
  } else if (m.learner == "tree") {
    s << render_tree(tree_from_json(m.model));
  } else if (m.learner == "forest") {
    const RandomForest f = forest_from_json(m.model);
    s << "random forest: " << f.trees.size() << " trees\npermutation importance:\n"
      << importance_text(f.column_names, f.importance);
  } else if (m.learner == "gbm") {
    const BoostedModel g = gbm_from_json(m.model);
    s << "gradient boosting: " << g.trees.size() << " trees\nrelative influence (%):\n"
      << importance_text(g.column_names, g.importance);
  } else if (m.learner == "stack") {
    const StackedModel st = stacked_from_json(m.model);
    s << "stacked model, meta-learner: " << to_string(st.kind) << "\n";
    if (const auto* w = std::get_if<LinearStackWeights>(&st.meta)) {
      s << "weights (" << to_string(w->mode) << "):\n";
      for (Eigen::Index k = 0; k < w->w.size(); ++k) {
        s << "  " << st.meta_columns[k] << " (" << kBaseNames[k] << ") "
          << format_fixed(w->w(k), 4) << "\n";
      }
      if (w->intercept) s << "  intercept " << format_fixed(*w->intercept, 4) << "\n";
    } else {
      s << "meta importance:\n" << importance_text(st.meta_columns, meta_importance(st.meta));
    }
    s << "\nbase learners:\n"
      << glm_table(st.base.poisson, st.base.transform_log, nullptr, "") << "\n"
      << glm_table(st.base.negbin, st.base.transform_log, nullptr, "") << "\n"
      << "pruned tree (cp " << format_double(st.base.tree_cp) << "):\n"
      << render_tree(st.base.tree) << "\nforest permutation importance:\n"
      << importance_text(st.base.forest.column_names, st.base.forest.importance)
      << "\nboosting relative influence (%):\n"
      << importance_text(st.base.gbm.column_names, st.base.gbm.importance);
  } else {
    throw DataError("unknown model learner '" + m.learner + "'");
  }
  const fs::path dir = prepare_run_dir(rc, resolved, out);
  write_file(dir / "report.txt", s.str());
  out << s.str();
  return 0;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("-c,--config", f.config, "JSON run configuration");
  sub->add_option("--seed", f.seed, "master seed (required here or in the config)");
  sub->add_option("-o,--output-dir", f.output_dir,
                  "root for run directories (env CRASHSTACK_OUTPUT_DIR)");
  sub->add_option("--threads", f.threads, "worker threads (env CRASHSTACK_THREADS)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heterogeneous stacking ensembles for crash-frequency panels"};
  app.require_subcommand(1);
  Flags f;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic segment panel");
  add_common(simulate, f);
  auto* fit = app.add_subcommand("fit", "fit one base learner on the training period");
  add_common(fit, f);
  fit->add_option("-i,--input", f.input, "panel CSV");
  fit->add_option("-l,--learner", f.learner, "poisson | negbin | tree | forest | gbm");
  auto* tune = app.add_subcommand("tune", "grid search with k-fold cross-validation");
  add_common(tune, f);
  tune->add_option("-i,--input", f.input, "panel CSV");
  tune->add_option("-l,--learner", f.learner, "tree | forest | gbm");
  auto* stack = app.add_subcommand("stack", "train, stack and score the full pipeline");
  add_common(stack, f);
  stack->add_option("-i,--input", f.input, "panel CSV");
  stack->add_option("--meta", f.meta, "linear | tree | forest | gbm | all (comma list)");
  stack->add_option("--mode", f.mode, "linear stack constraint: unconstrained | nonneg | simplex");
  auto* evaluate = app.add_subcommand("evaluate", "score a saved model on a panel period");
  add_common(evaluate, f);
  evaluate->add_option("-i,--input", f.input, "panel CSV");
  evaluate->add_option("-m,--model", f.model, "model JSON or stack bundle");
  evaluate->add_option("--period", f.period, "train | validation | test (default test)");
  auto* report = app.add_subcommand("report", "print a saved model");
  add_common(report, f);
  report->add_option("-m,--model", f.model, "model JSON or stack bundle");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return ConfigError("").exit_code();
  }

  std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig rc = resolve(command, f);
    if (rc.threads > 0) set_num_threads(rc.threads);
    if (command == "simulate") return cmd_simulate(rc, out);
    if (command == "fit") return cmd_fit(rc, out, err);
    if (command == "tune") return cmd_tune(rc, out, err);
    if (command == "stack") return cmd_stack(rc, out, err);
    if (command == "evaluate") return cmd_evaluate(rc, out, err);
    return cmd_report(rc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace crashstack::cli
