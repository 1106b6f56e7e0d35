#pragma once

#include <string>
#include <vector>

#include "core/graphbuild.hpp"

namespace stn {

// Ground truth for synthetic tasks: which (window, roi) cells carry the
// planted class signal. Empty for real or null data.
struct Planted {
  std::vector<int> rois;
  std::vector<int> windows;
  bool empty() const { return rois.empty() && windows.empty(); }
};

struct Dataset {
  int n_roi = 0;
  int frames = 0;
  std::vector<TimeSeriesInstance> instances;
  Planted planted;
};

// Directory layout: manifest.json listing {instance_id, subject_id,
// class_label, series_file, condition_file} per instance plus n_roi / frames,
// series CSVs (frames rows, n_roi columns, no header), condition files (one
// label per line). A synthetic manifest may carry a "planted" section.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// edges.csv (u,v,weight) plus features_t<k>.csv per snapshot.
void export_graph_instance(const std::string& dir, const GraphInstance& g);

}  // namespace stn
