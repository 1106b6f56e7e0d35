#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace stn {

struct ExplainConfig {
  int steps = 300;
  double lr_mask = 0.05;
  double sparsity_weight = 0.05;
  double entropy_weight = 0.1;
  int max_instances = 12;
  int query_t = -1;  // attention heatmap query node; -1 centers it
  int query_j = -1;
  std::uint64_t seed = 42;
};

struct ImportanceMap {
  std::string instance_id;
  int T = 0;
  int N = 0;
  std::vector<double> scores;  // T*N, row t*N + j, each in [0, 1]
};

// Sigmoid feature-mask optimization against the model's own unmasked
// prediction. Parameters are used read-only.
ImportanceMap explain_instance(const ModelParams& params, const ModelConfig& cfg,
                               const GraphInstance& g, const ExplainConfig& ecfg);

// Elementwise mean over maps sharing one (T, N) shape.
Mat aggregate_importance(const std::vector<ImportanceMap>& maps);

// Post-softmax attention row of the query node (t, j), length T*N.
std::vector<double> attention_heatmap(const ModelParams& params, const ModelConfig& cfg,
                                      const GraphInstance& g, int query_t, int query_j);

// Mean over spatial index j of the variance across t of row[t*N + j].
double temporal_variance_stat(const std::vector<double>& row, int T, int N);

void write_importance_csv(const std::string& path, const Mat& scores);
// One PGM per snapshot: row t rendered as a near-square ROI grid.
void write_importance_pgms(const std::string& dir, const std::string& prefix, const Mat& scores);

}  // namespace stn
