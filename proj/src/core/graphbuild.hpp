#pragma once

#include <string>
#include <vector>

#include "core/errors.hpp"
#include "core/io.hpp"

namespace stn {

// One subject's recording: frames x n_roi matrix plus a per-frame condition
// label ("BIOL", "SCRAM", ...).
struct TimeSeriesInstance {
  std::string instance_id;
  std::string subject_id;
  int class_label = 0;
  Mat series;                          // frames x n_roi
  std::vector<std::string> condition;  // one label per frame
};

struct Edge {
  int u = 0;
  int v = 0;
  double weight = 0.0;
};

// Windowed graph sequence handed to the models: T snapshots over N nodes.
struct GraphInstance {
  std::string instance_id;
  std::string subject_id;
  int class_label = 0;
  int n_nodes = 0;
  std::vector<Edge> edges;         // shared across snapshots, u < v
  std::vector<Mat> node_features;  // T entries, each n_nodes x feat_dim
};

struct WindowRange {
  int begin = 0;  // inclusive frame index
  int end = 0;    // exclusive
};

enum class WindowMode { auto_detect, equal, aligned };
enum class RankMode { signed_value, absolute };

struct GraphBuildConfig {
  int windows = 12;
  double fraction = 0.05;
  double ridge_scale = 1e-3;
  WindowMode window_mode = WindowMode::auto_detect;
  std::string edge_source = "ALL";  // condition label, or ALL for every frame
  RankMode ranking = RankMode::signed_value;
};

struct BuildStats {
  long zero_variance_rois = 0;  // flat-in-window ROI columns hit by pearson
};

// Frame windows for one instance. equal splits [0, frames) into `windows`
// near-equal contiguous chunks, remainder frames going to the earliest ones.
// aligned uses maximal runs of constant condition label and requires exactly
// `windows` of them. auto_detect picks aligned when the run count matches.
std::vector<WindowRange> window_truncate(int frames, int windows, WindowMode mode,
                                         const std::vector<std::string>& condition);

// Pearson correlation of ROI columns within each window. A zero-variance
// column gets 0 correlation against everything (counted in stats); diagonal 1.
std::vector<Mat> pearson_features(const Mat& series, const std::vector<WindowRange>& windows,
                                  BuildStats* stats = nullptr);
Mat pearson_window(const Mat& series, int begin, int end, BuildStats* stats = nullptr);

// Ridge-regularized partial correlation of an already-selected frame block.
Mat partial_correlation(const Mat& series_subset, double ridge_scale);

// Rows of the series whose condition matches `keep`, temporal order kept.
Mat condition_concat(const TimeSeriesInstance& inst, const std::string& keep);

// Top floor(fraction * N(N-1)/2) strict-upper-triangle entries, descending,
// ties broken by (u, v). absolute mode ranks by magnitude and stores it.
std::vector<Edge> sparsify_top_fraction(const Mat& m, double fraction, RankMode ranking);

// Full pipeline for one instance.
GraphInstance build_graph_instance(const TimeSeriesInstance& ts, const GraphBuildConfig& cfg,
                                   BuildStats* stats = nullptr);

}  // namespace stn
