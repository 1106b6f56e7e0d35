#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/rng.hpp"

namespace stn {

enum class TaskKind { condition_coupled, temporal_order, multi_state };

struct SynthConfig {
  TaskKind task = TaskKind::condition_coupled;
  int n_subjects = 60;
  int n_roi = 30;
  int frames = 144;
  int t_blocks = 12;
  int n_classes = 2;
  int n_voxels_per_roi = 4;
  int n_augments = 5;
  double voxel_fraction = 1.0 / 3.0;
  double noise_sigma = 0.1;
  double coupling_strength = 2.0;
  std::uint64_t seed = 42;
};

// Voxel-resolution output of one generated recording: frames x (n_roi * V)
// with voxel v of ROI r in column r*V + v, plus the frame condition labels.
struct SubjectData {
  Mat voxels;
  std::vector<std::string> condition;
};

void validate_synth_config(const SynthConfig& cfg);

// Deterministic in (cfg.seed, subject_index, class_label).
SubjectData gen_subject(const SynthConfig& cfg, int subject_index, int class_label);

// Each augment draws ceil(fraction * V) voxel columns per ROI with
// replacement and averages them into one ROI series.
std::vector<Mat> bootstrap_roi_sample(const Mat& voxel_series, int n_roi, double fraction,
                                      int n_augments, RngStream& rng);

// Full dataset: per subject, gen_subject + bootstrap augments. multi_state
// emits one recording per (subject, class); the other tasks assign classes
// round-robin over subjects. Planted ground truth filled when the task has
// localized signal and coupling_strength > 0.
Dataset gen_dataset(const SynthConfig& cfg);

// The (window, roi) cells carrying class signal under this config.
Planted planted_cells(const SynthConfig& cfg);

// Noise-features instance for the positional-encoding simulation:
// 12 snapshots x 84 nodes x 1 feature drawn N(0, sigma=0.1), no edges.
GraphInstance gen_pe_sim(std::uint64_t seed);

std::string task_name(TaskKind t);
TaskKind parse_task(const std::string& name);

}  // namespace stn
