#include "core/dataset.hpp"

#include <json.hpp>

namespace stn {

void save_dataset(const std::string& dir, const Dataset& ds) {
  ensure_dir(dir);
  nlohmann::json manifest;
  manifest["n_roi"] = ds.n_roi;
  manifest["frames"] = ds.frames;
  manifest["instances"] = nlohmann::json::array();
  for (const TimeSeriesInstance& inst : ds.instances) {
    std::string series_file = inst.instance_id + "_series.csv";
    std::string condition_file = inst.instance_id + "_condition.csv";
    write_csv_matrix(dir + "/" + series_file, inst.series);
    write_lines(dir + "/" + condition_file, inst.condition);
    manifest["instances"].push_back({{"instance_id", inst.instance_id},
                                     {"subject_id", inst.subject_id},
                                     {"class_label", inst.class_label},
                                     {"series_file", series_file},
                                     {"condition_file", condition_file}});
  }
  if (!ds.planted.empty())
    manifest["planted"] = {{"rois", ds.planted.rois}, {"windows", ds.planted.windows}};
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(dir + "/manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir + "/manifest.json is not valid JSON: " + e.what());
  }
  if (!manifest.contains("n_roi") || !manifest.contains("frames") ||
      !manifest.contains("instances"))
    throw DataError(dir + "/manifest.json needs n_roi, frames, and instances");

  Dataset ds;
  ds.n_roi = manifest["n_roi"].get<int>();
  ds.frames = manifest["frames"].get<int>();
  if (ds.n_roi <= 0 || ds.frames <= 0) throw DataError("manifest n_roi and frames must be positive");
  if (manifest.contains("planted")) {
    for (const auto& r : manifest["planted"]["rois"]) ds.planted.rois.push_back(r.get<int>());
    for (const auto& w : manifest["planted"]["windows"]) ds.planted.windows.push_back(w.get<int>());
  }

  for (const auto& entry : manifest["instances"]) {
    TimeSeriesInstance inst;
    inst.instance_id = entry.at("instance_id").get<std::string>();
    inst.subject_id = entry.at("subject_id").get<std::string>();
    inst.class_label = entry.at("class_label").get<int>();
    inst.series = read_csv_matrix(dir + "/" + entry.at("series_file").get<std::string>());
    inst.condition = read_lines(dir + "/" + entry.at("condition_file").get<std::string>());
    if (inst.series.rows != ds.frames || inst.series.cols != ds.n_roi)
      throw DataError("instance " + inst.instance_id + " series is " +
                      std::to_string(inst.series.rows) + "x" + std::to_string(inst.series.cols) +
                      ", manifest says " + std::to_string(ds.frames) + "x" +
                      std::to_string(ds.n_roi));
    if (static_cast<int>(inst.condition.size()) != ds.frames)
      throw DataError("instance " + inst.instance_id + " has " +
                      std::to_string(inst.condition.size()) + " condition labels, expected " +
                      std::to_string(ds.frames));
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

void export_graph_instance(const std::string& dir, const GraphInstance& g) {
  ensure_dir(dir);
  std::string edges = "u,v,weight\n";
  for (const Edge& e : g.edges)
    edges += std::to_string(e.u) + "," + std::to_string(e.v) + "," + format_double17(e.weight) +
             "\n";
  write_text_file(dir + "/edges.csv", edges);
  for (size_t t = 0; t < g.node_features.size(); ++t)
    write_csv_matrix(dir + "/features_t" + std::to_string(t) + ".csv", g.node_features[t]);
}

}  // namespace stn
