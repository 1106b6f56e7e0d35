#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/synth.hpp"

namespace stn {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.015;
  int batch_size = 10;
  int max_epochs = 200;
  int patience = 20;
  int folds = 5;
  double val_fraction = 0.15;
  int parallel_folds = 1;
  std::uint64_t seed = 42;
};

struct FoldResult {
  int fold = 0;
  double accuracy = 0.0;
  double auc = 0.0;
  std::vector<double> train_loss;  // one entry per epoch run
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  ModelParams best_params;
  std::string checkpoint_path;
};

struct CvSummary {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_auc = 0.0, std_auc = 0.0;
};

struct InstanceKey {
  std::string subject_id;
  int class_label = 0;
};

// Subject-level stratified folds: all instances of a subject stay together,
// per-class subject counts differ by at most 1 across folds. Returns, per
// fold, the sorted list of subject ids.
std::vector<std::vector<std::string>> stratified_group_kfold(const std::vector<InstanceKey>& keys,
                                                             int k, std::uint64_t seed);

struct GraphDataset {
  int T = 0;
  int n_roi = 0;
  std::vector<GraphInstance> instances;
  Planted planted;
};

GraphDataset build_graph_dataset(const Dataset& ds, const GraphBuildConfig& cfg,
                                 BuildStats* stats = nullptr);

// accuracy + AUC (binary: Mann-Whitney on class-1 scores; K>2: macro
// one-vs-rest over classes with both labels present).
std::pair<double, double> evaluate(const ModelParams& params, const ModelConfig& cfg,
                                   const std::vector<const GraphInstance*>& instances);

// Rank-based AUC of (score, is_positive) pairs, ties counted half.
double auc_score(const std::vector<std::pair<double, bool>>& scored);

FoldResult train_model(const GraphDataset& ds, const std::vector<int>& train_idx,
                       const std::vector<int>& test_idx, const ModelConfig& mcfg,
                       const TrainConfig& tcfg, int fold_index);

// Full k-fold run. When out_dir is nonempty, writes fold<k>_checkpoint.json,
// fold<k>_loss.csv and metrics.json there.
CvSummary cross_validate(const GraphDataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::string& out_dir = "",
                         const std::string& config_echo_json = "");

}  // namespace stn
