#ifndef CRASHSTACK_SERIALIZE_HPP_
#define CRASHSTACK_SERIALIZE_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"

#include "crashstack/boosting.hpp"
#include "crashstack/cart.hpp"
#include "crashstack/forest.hpp"
#include "crashstack/glm.hpp"
#include "crashstack/simgen.hpp"
#include "crashstack/stacking.hpp"
#include "crashstack/tuning.hpp"

namespace crashstack {

// Keys are emitted sorted and doubles in shortest round-trip form, so a
// dump/parse cycle reproduces every model bit-exactly and equal models
// produce identical bytes.
using Json = nlohmann::json;

Json to_json(const FittedGlm& m);
FittedGlm glm_from_json(const Json& j);

Json to_json(const RegressionTree& t);
RegressionTree tree_from_json(const Json& j);

Json to_json(const RandomForest& f);
RandomForest forest_from_json(const Json& j);

Json to_json(const BoostedModel& m);
BoostedModel gbm_from_json(const Json& j);

Json to_json(const LinearStackWeights& w);
LinearStackWeights linear_from_json(const Json& j);

// One document holding the base learners, the meta-learner, both column
// orders and every seed used.
Json to_json(const StackedModel& s);
StackedModel stacked_from_json(const Json& j);

// Configs. The *_from_json readers start from `defaults`, override the keys
// present and throw ConfigError on unknown keys or ill-typed values.
Json to_json(const GlmSpec& c);
Json to_json(const TreeConfig& c);
Json to_json(const ForestConfig& c);
Json to_json(const BoostConfig& c);
Json to_json(const BaseConfigs& c);
Json to_json(const MetaConfigs& c);
Json to_json(const SplitSpec& c);
Json to_json(const PipelineConfig& c);
Json to_json(const GenConfig& c);
Json to_json(const Grid& g);
GlmSpec glm_spec_from_json(const Json& j, GlmSpec defaults = {});
TreeConfig tree_config_from_json(const Json& j, TreeConfig defaults = {});
ForestConfig forest_config_from_json(const Json& j, ForestConfig defaults = {});
BoostConfig boost_config_from_json(const Json& j, BoostConfig defaults = {});
BaseConfigs base_configs_from_json(const Json& j, BaseConfigs defaults = {});
MetaConfigs meta_configs_from_json(const Json& j, MetaConfigs defaults = {});
SplitSpec split_from_json(const Json& j, SplitSpec defaults = {});
PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig defaults = {});
GenConfig gen_config_from_json(const Json& j, GenConfig defaults = {});
Grid grid_from_json(const Json& j, Grid defaults = {});

// Truth sidecar written next to a simulated panel.
Json truth_json(const GenConfig& c);

// Two-space indented text with a trailing newline.
std::string dump_json(const Json& j);
// Throws DataError when the text is not valid JSON.
Json parse_json(const std::string& text);
Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

}  // namespace crashstack

#endif  // CRASHSTACK_SERIALIZE_HPP_
