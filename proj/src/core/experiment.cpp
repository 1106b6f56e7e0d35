#include "core/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace stn {

namespace {

using nlohmann::json;

enum : std::uint64_t { kAttnvizParams = 5 };

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("spec section '" + section + "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) known = true;
    if (!known)
      throw ConfigError("unknown spec key '" + (section.empty() ? key : section + "." + key) +
                        "'");
  }
}

template <typename T>
void read_field(const json& j, const std::string& section, const char* name, T* out) {
  if (!j.contains(name)) return;
  try {
    *out = j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("spec field '" + (section.empty() ? name : section + "." + name) +
                      "' has the wrong type");
  }
}

void read_enum_field(const json& j, const std::string& section, const char* name,
                     const std::function<void(const std::string&)>& apply) {
  if (!j.contains(name)) return;
  std::string raw;
  read_field(j, section, name, &raw);
  apply(raw);
}

std::string ranking_name(RankMode r) {
  return r == RankMode::signed_value ? "signed" : "absolute";
}

RankMode parse_ranking(const std::string& s) {
  if (s == "signed") return RankMode::signed_value;
  if (s == "absolute") return RankMode::absolute;
  throw ConfigError("unknown ranking '" + s + "'");
}

std::string window_mode_name(WindowMode m) {
  switch (m) {
    case WindowMode::auto_detect: return "auto";
    case WindowMode::equal: return "equal";
    case WindowMode::aligned: return "aligned";
  }
  throw InternalError("unreachable window mode");
}

WindowMode parse_window_mode(const std::string& s) {
  if (s == "auto") return WindowMode::auto_detect;
  if (s == "equal") return WindowMode::equal;
  if (s == "aligned") return WindowMode::aligned;
  throw ConfigError("unknown window_mode '" + s + "'");
}

void write_resolved(const ExperimentSpec& spec) {
  ensure_dir(spec.output_dir);
  write_text_file(spec.output_dir + "/spec.resolved.json", spec_to_json(spec).dump(2) + "\n");
}

GraphDataset load_and_build(const ExperimentSpec& spec, BuildStats* stats) {
  Dataset ds = load_dataset(spec.dataset_dir);
  return build_graph_dataset(ds, spec.graph, stats);
}

ModelConfig runtime_model_cfg(const ExperimentSpec& spec, const GraphDataset& gds) {
  ModelConfig cfg = spec.model;
  cfg.feat_dim = gds.n_roi;
  int max_label = 0;
  for (const GraphInstance& g : gds.instances) max_label = std::max(max_label, g.class_label);
  cfg.n_classes = std::max(2, max_label + 1);
  return cfg;
}

json summary_base(const char* command, const ExperimentSpec& spec) {
  return json{{"command", command}, {"output_dir", spec.output_dir}, {"seed", spec.seed}};
}

}  // namespace

void apply_spec_json(ExperimentSpec& spec, const json& j) {
  check_keys(j, "", {"seed", "output_dir", "dataset_dir", "synth", "graph", "model", "train",
                     "explain"});
  read_field(j, "", "seed", &spec.seed);
  read_field(j, "", "output_dir", &spec.output_dir);
  read_field(j, "", "dataset_dir", &spec.dataset_dir);

  if (j.contains("synth")) {
    const json& s = j.at("synth");
    check_keys(s, "synth",
               {"task", "n_subjects", "n_roi", "frames", "t_blocks", "n_classes",
                "n_voxels_per_roi", "n_augments", "voxel_fraction", "noise_sigma",
                "coupling_strength"});
    read_enum_field(s, "synth", "task",
                    [&](const std::string& v) { spec.synth.task = parse_task(v); });
    read_field(s, "synth", "n_subjects", &spec.synth.n_subjects);
    read_field(s, "synth", "n_roi", &spec.synth.n_roi);
    read_field(s, "synth", "frames", &spec.synth.frames);
    read_field(s, "synth", "t_blocks", &spec.synth.t_blocks);
    read_field(s, "synth", "n_classes", &spec.synth.n_classes);
    read_field(s, "synth", "n_voxels_per_roi", &spec.synth.n_voxels_per_roi);
    read_field(s, "synth", "n_augments", &spec.synth.n_augments);
    read_field(s, "synth", "voxel_fraction", &spec.synth.voxel_fraction);
    read_field(s, "synth", "noise_sigma", &spec.synth.noise_sigma);
    read_field(s, "synth", "coupling_strength", &spec.synth.coupling_strength);
  }
  if (j.contains("graph")) {
    const json& g = j.at("graph");
    check_keys(g, "graph",
               {"windows", "edge_source", "fraction", "ridge_scale", "ranking", "window_mode"});
    read_field(g, "graph", "windows", &spec.graph.windows);
    read_field(g, "graph", "edge_source", &spec.graph.edge_source);
    read_field(g, "graph", "fraction", &spec.graph.fraction);
    read_field(g, "graph", "ridge_scale", &spec.graph.ridge_scale);
    read_enum_field(g, "graph", "ranking",
                    [&](const std::string& v) { spec.graph.ranking = parse_ranking(v); });
    read_enum_field(g, "graph", "window_mode",
                    [&](const std::string& v) { spec.graph.window_mode = parse_window_mode(v); });
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"backbone", "pe_mode", "d_model", "dropout", "aggregator"});
    read_enum_field(m, "model", "backbone",
                    [&](const std::string& v) { spec.model.backbone = parse_backbone(v); });
    read_enum_field(m, "model", "pe_mode",
                    [&](const std::string& v) { spec.model.pe_mode = parse_pe_mode(v); });
    read_field(m, "model", "d_model", &spec.model.d_model);
    read_field(m, "model", "dropout", &spec.model.dropout);
    read_enum_field(m, "model", "aggregator",
                    [&](const std::string& v) { spec.model.aggregator = parse_aggregator(v); });
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train",
               {"lr", "weight_decay", "batch_size", "max_epochs", "patience", "folds",
                "val_fraction", "parallel_folds"});
    read_field(t, "train", "lr", &spec.train.lr);
    read_field(t, "train", "weight_decay", &spec.train.weight_decay);
    read_field(t, "train", "batch_size", &spec.train.batch_size);
    read_field(t, "train", "max_epochs", &spec.train.max_epochs);
    read_field(t, "train", "patience", &spec.train.patience);
    read_field(t, "train", "folds", &spec.train.folds);
    read_field(t, "train", "val_fraction", &spec.train.val_fraction);
    read_field(t, "train", "parallel_folds", &spec.train.parallel_folds);
  }
  if (j.contains("explain")) {
    const json& e = j.at("explain");
    check_keys(e, "explain",
               {"steps", "lr_mask", "sparsity_weight", "entropy_weight", "max_instances",
                "query_t", "query_j"});
    read_field(e, "explain", "steps", &spec.explain.steps);
    read_field(e, "explain", "lr_mask", &spec.explain.lr_mask);
    read_field(e, "explain", "sparsity_weight", &spec.explain.sparsity_weight);
    read_field(e, "explain", "entropy_weight", &spec.explain.entropy_weight);
    read_field(e, "explain", "max_instances", &spec.explain.max_instances);
    read_field(e, "explain", "query_t", &spec.explain.query_t);
    read_field(e, "explain", "query_j", &spec.explain.query_j);
  }
}

ExperimentSpec parse_spec_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spec is not valid JSON: ") + e.what());
  }
  ExperimentSpec spec;
  apply_spec_json(spec, j);
  return spec;
}

ExperimentSpec parse_spec_file(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("cannot read spec file: ") + e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("spec file " + path + " is not valid JSON: " + e.what());
  }
  ExperimentSpec spec;
  apply_spec_json(spec, j);
  return spec;
}

void spec_set(ExperimentSpec& spec, const std::string& dotted_key, const std::string& value) {
  json leaf;
  try {
    leaf = json::parse(value);
    if (!leaf.is_number() && !leaf.is_boolean()) leaf = value;
  } catch (const json::exception&) {
    leaf = value;
  }
  json patch;
  size_t dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    patch[dotted_key] = leaf;
  } else if (dot == 0 || dot + 1 == dotted_key.size() ||
             dotted_key.find('.', dot + 1) != std::string::npos) {
    throw ConfigError("bad spec key '" + dotted_key + "'");
  } else {
    patch[dotted_key.substr(0, dot)][dotted_key.substr(dot + 1)] = leaf;
  }
  apply_spec_json(spec, patch);
}

ExperimentSpec resolve_spec(const ExperimentSpec& spec) {
  ExperimentSpec r = spec;
  if (r.output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (r.dataset_dir.empty()) r.dataset_dir = r.output_dir + "/dataset";
  r.synth.seed = r.seed;
  r.train.seed = r.seed;
  r.explain.seed = r.seed;
  return r;
}

json spec_to_json(const ExperimentSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["output_dir"] = spec.output_dir;
  j["dataset_dir"] = spec.dataset_dir;
  j["synth"] = {{"task", task_name(spec.synth.task)},
                {"n_subjects", spec.synth.n_subjects},
                {"n_roi", spec.synth.n_roi},
                {"frames", spec.synth.frames},
                {"t_blocks", spec.synth.t_blocks},
                {"n_classes", spec.synth.n_classes},
                {"n_voxels_per_roi", spec.synth.n_voxels_per_roi},
                {"n_augments", spec.synth.n_augments},
                {"voxel_fraction", spec.synth.voxel_fraction},
                {"noise_sigma", spec.synth.noise_sigma},
                {"coupling_strength", spec.synth.coupling_strength}};
  j["graph"] = {{"windows", spec.graph.windows},
                {"edge_source", spec.graph.edge_source},
                {"fraction", spec.graph.fraction},
                {"ridge_scale", spec.graph.ridge_scale},
                {"ranking", ranking_name(spec.graph.ranking)},
                {"window_mode", window_mode_name(spec.graph.window_mode)}};
  j["model"] = {{"backbone", backbone_name(spec.model.backbone)},
                {"pe_mode", pe_mode_name(spec.model.pe_mode)},
                {"d_model", spec.model.d_model},
                {"dropout", spec.model.dropout},
                {"aggregator", aggregator_name(spec.model.aggregator)}};
  j["train"] = {{"lr", spec.train.lr},
                {"weight_decay", spec.train.weight_decay},
                {"batch_size", spec.train.batch_size},
                {"max_epochs", spec.train.max_epochs},
                {"patience", spec.train.patience},
                {"folds", spec.train.folds},
                {"val_fraction", spec.train.val_fraction},
                {"parallel_folds", spec.train.parallel_folds}};
  j["explain"] = {{"steps", spec.explain.steps},
                  {"lr_mask", spec.explain.lr_mask},
                  {"sparsity_weight", spec.explain.sparsity_weight},
                  {"entropy_weight", spec.explain.entropy_weight},
                  {"max_instances", spec.explain.max_instances},
                  {"query_t", spec.explain.query_t},
                  {"query_j", spec.explain.query_j}};
  return j;
}

json cmd_synth(const ExperimentSpec& raw) {
  ExperimentSpec spec = resolve_spec(raw);
  write_resolved(spec);
  Dataset ds = gen_dataset(spec.synth);
  save_dataset(spec.dataset_dir, ds);
  json out = summary_base("synth", spec);
  out["dataset_dir"] = spec.dataset_dir;
  out["instances"] = ds.instances.size();
  out["task"] = task_name(spec.synth.task);
  return out;
}

json cmd_build(const ExperimentSpec& raw) {
  ExperimentSpec spec = resolve_spec(raw);
  write_resolved(spec);
  BuildStats stats;
  GraphDataset gds = load_and_build(spec, &stats);
  std::string graph_dir = spec.output_dir + "/graphs";
  for (const GraphInstance& g : gds.instances)
    export_graph_instance(graph_dir + "/" + g.instance_id, g);
  json out = summary_base("build", spec);
  out["instances"] = gds.instances.size();
  out["edges_per_instance"] = gds.instances.empty() ? 0 : gds.instances[0].edges.size();
  out["snapshots"] = gds.T;
  out["zero_variance_rois"] = stats.zero_variance_rois;
  out["graph_dir"] = graph_dir;
  return out;
}

json cmd_train(const ExperimentSpec& raw) {
  ExperimentSpec spec = resolve_spec(raw);
  write_resolved(spec);
  GraphDataset gds = load_and_build(spec, nullptr);
  ModelConfig mcfg = runtime_model_cfg(spec, gds);
  CvSummary cv =
      cross_validate(gds, mcfg, spec.train, spec.output_dir, spec_to_json(spec).dump());
  json out = summary_base("train", spec);
  out["mean_accuracy"] = cv.mean_accuracy;
  out["std_accuracy"] = cv.std_accuracy;
  out["mean_auc"] = cv.mean_auc;
  out["std_auc"] = cv.std_auc;
  out["metrics_file"] = spec.output_dir + "/metrics.json";
  return out;
}

json cmd_explain(const ExperimentSpec& raw, const std::string& checkpoint) {
  ExperimentSpec spec = resolve_spec(raw);
  write_resolved(spec);
  std::string ckpt = checkpoint.empty() ? spec.output_dir + "/fold0_checkpoint.json" : checkpoint;
  ModelParams params = load_checkpoint(ckpt);

  GraphDataset gds = load_and_build(spec, nullptr);
  ModelConfig mcfg = runtime_model_cfg(spec, gds);
  int n = std::min<int>(spec.explain.max_instances, static_cast<int>(gds.instances.size()));
  if (n < 1) throw DataError("no instances to explain");

  std::vector<ImportanceMap> maps;
  for (int i = 0; i < n; ++i)
    maps.push_back(explain_instance(params, mcfg, gds.instances[i], spec.explain));
  Mat agg = aggregate_importance(maps);
  write_importance_csv(spec.output_dir + "/importance.csv", agg);
  write_importance_pgms(spec.output_dir, "importance", agg);

  json out = summary_base("explain", spec);
  out["checkpoint"] = ckpt;
  out["instances_explained"] = n;
  out["snapshots"] = agg.rows;
  out["importance_file"] = spec.output_dir + "/importance.csv";
  return out;
}

json cmd_attnviz(const ExperimentSpec& raw, const std::string& checkpoint) {
  ExperimentSpec spec = resolve_spec(raw);
  write_resolved(spec);
  GraphInstance g = gen_pe_sim(spec.seed);
  int T = static_cast<int>(g.node_features.size()), N = g.n_nodes;

  ModelConfig mcfg = spec.model;
  mcfg.feat_dim = 1;
  mcfg.n_classes = 2;
  ModelParams params;
  if (checkpoint.empty()) {
    RngStream rng = RngStream(spec.seed).derive(kAttnvizParams);
    params = init_params(mcfg, rng);
  } else {
    params = load_checkpoint(checkpoint);
  }

  json stats = json::object();
  json out = summary_base("attnviz", spec);
  for (PEMode mode : {PEMode::none, PEMode::raster1d, PEMode::st2d}) {
    ModelConfig mode_cfg = mcfg;
    mode_cfg.pe_mode = mode;
    std::vector<double> row =
        attention_heatmap(params, mode_cfg, g, spec.explain.query_t, spec.explain.query_j);
    Mat img(T, N);
    img.a = row;
    std::string name = pe_mode_name(mode);
    write_pgm(spec.output_dir + "/attn_" + name + ".pgm", img);
    write_importance_csv(spec.output_dir + "/attn_" + name + ".csv", img);
    stats[name] = temporal_variance_stat(row, T, N);
  }
  out["temporal_variance"] = stats;
  out["query_t"] = spec.explain.query_t < 0 ? T / 2 : spec.explain.query_t;
  out["query_j"] = spec.explain.query_j < 0 ? N / 2 : spec.explain.query_j;
  return out;
}

json cmd_ablate(const ExperimentSpec& raw, const std::string& grid) {
  ExperimentSpec spec = resolve_spec(raw);
  write_resolved(spec);
  Dataset ds = load_dataset(spec.dataset_dir);

  json rows = json::array();
  std::string csv;

  auto run_cell = [&](const ExperimentSpec& cell_spec, const std::string& subdir) {
    GraphDataset gds = build_graph_dataset(ds, cell_spec.graph, nullptr);
    ModelConfig mcfg = runtime_model_cfg(cell_spec, gds);
    std::string cell_dir = spec.output_dir + "/" + subdir;
    return cross_validate(gds, mcfg, cell_spec.train, cell_dir,
                          spec_to_json(cell_spec).dump());
  };

  if (grid == "pe") {
    csv = "pe_mode,mean_accuracy,std_accuracy,mean_auc,std_auc\n";
    for (PEMode mode : {PEMode::none, PEMode::raster1d, PEMode::st2d}) {
      ExperimentSpec cell = spec;
      cell.model.pe_mode = mode;
      CvSummary cv = run_cell(cell, "ablate_pe_" + pe_mode_name(mode));
      csv += pe_mode_name(mode) + "," + format_double17(cv.mean_accuracy) + "," +
             format_double17(cv.std_accuracy) + "," + format_double17(cv.mean_auc) + "," +
             format_double17(cv.std_auc) + "\n";
      rows.push_back({{"pe_mode", pe_mode_name(mode)},
                      {"mean_accuracy", cv.mean_accuracy},
                      {"std_accuracy", cv.std_accuracy},
                      {"mean_auc", cv.mean_auc},
                      {"std_auc", cv.std_auc}});
    }
    write_text_file(spec.output_dir + "/pe_ablation.csv", csv);
  } else if (grid == "graph") {
    csv = "edge_source,windows,mean_accuracy,std_accuracy,mean_auc,std_auc\n";
    for (const char* src : {"BIOL", "SCRAM", "ALL"})
      for (int w : {10, 12, 14}) {
        ExperimentSpec cell = spec;
        cell.graph.edge_source = src;
        cell.graph.windows = w;
        CvSummary cv = run_cell(cell, std::string("ablate_graph_") + src + "_w" +
                                          std::to_string(w));
        csv += std::string(src) + "," + std::to_string(w) + "," +
               format_double17(cv.mean_accuracy) + "," + format_double17(cv.std_accuracy) + "," +
               format_double17(cv.mean_auc) + "," + format_double17(cv.std_auc) + "\n";
        rows.push_back({{"edge_source", src},
                        {"windows", w},
                        {"mean_accuracy", cv.mean_accuracy},
                        {"std_accuracy", cv.std_accuracy},
                        {"mean_auc", cv.mean_auc},
                        {"std_auc", cv.std_auc}});
      }
    write_text_file(spec.output_dir + "/graph_ablation.csv", csv);
  } else if (grid == "aggregator") {
    csv = "aggregator,mean_accuracy,std_accuracy,mean_auc,std_auc\n";
    for (Aggregator agg : {Aggregator::attention, Aggregator::lstm}) {
      ExperimentSpec cell = spec;
      cell.model.aggregator = agg;
      CvSummary cv = run_cell(cell, "ablate_aggregator_" + aggregator_name(agg));
      csv += aggregator_name(agg) + "," + format_double17(cv.mean_accuracy) + "," +
             format_double17(cv.std_accuracy) + "," + format_double17(cv.mean_auc) + "," +
             format_double17(cv.std_auc) + "\n";
      rows.push_back({{"aggregator", aggregator_name(agg)},
                      {"mean_accuracy", cv.mean_accuracy},
                      {"std_accuracy", cv.std_accuracy},
                      {"mean_auc", cv.mean_auc},
                      {"std_auc", cv.std_auc}});
    }
    write_text_file(spec.output_dir + "/aggregator_ablation.csv", csv);
  } else {
    throw ConfigError("unknown ablation grid '" + grid + "' (use pe, graph, or aggregator)");
  }

  json out = summary_base("ablate", spec);
  out["grid"] = grid;
  out["rows"] = rows;
  return out;
}

}  // namespace stn
