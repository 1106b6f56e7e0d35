#pragma once

#include <string>

#include <json.hpp>

#include "core/explain.hpp"
#include "core/graphbuild.hpp"
#include "core/model.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"

namespace stn {

// One JSON document controls a full run. Unknown keys are rejected; every
// field has a default; the resolved form is echoed to
// output_dir/spec.resolved.json by each command.
struct ExperimentSpec {
  std::uint64_t seed = 42;
  std::string output_dir = "out";
  std::string dataset_dir;  // empty resolves to output_dir + "/dataset"
  SynthConfig synth;
  GraphBuildConfig graph;
  ModelConfig model;  // feat_dim / n_classes are filled from data at run time
  TrainConfig train;
  ExplainConfig explain;
};

// Merge a (possibly partial) JSON document into the spec, strictly.
void apply_spec_json(ExperimentSpec& spec, const nlohmann::json& j);
ExperimentSpec parse_spec_json(const std::string& text);
ExperimentSpec parse_spec_file(const std::string& path);

// Dotted-path override, e.g. ("model.pe_mode", "none") or ("seed", "7").
void spec_set(ExperimentSpec& spec, const std::string& dotted_key, const std::string& value);

// Defaults filled, seeds propagated into the section configs.
ExperimentSpec resolve_spec(const ExperimentSpec& spec);
nlohmann::json spec_to_json(const ExperimentSpec& spec);

nlohmann::json cmd_synth(const ExperimentSpec& spec);
nlohmann::json cmd_build(const ExperimentSpec& spec);
nlohmann::json cmd_train(const ExperimentSpec& spec);
nlohmann::json cmd_explain(const ExperimentSpec& spec, const std::string& checkpoint = "");
nlohmann::json cmd_attnviz(const ExperimentSpec& spec, const std::string& checkpoint = "");
// grid: "pe" (encoding ablation), "graph" (edge source x window count),
// "aggregator" (attention vs lstm).
nlohmann::json cmd_ablate(const ExperimentSpec& spec, const std::string& grid = "pe");

}  // namespace stn
