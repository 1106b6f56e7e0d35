#include "core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace stn {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Derivation tags for per-subject substreams.
enum : std::uint64_t { kGenTag = 1, kSubjectBase = 1, kSubjectCoupling = 2, kSubjectVoxel = 3, kSubjectBoot = 4 };

RngStream subject_stream(const SynthConfig& cfg, int subject_index, int class_label) {
  return RngStream(cfg.seed)
      .derive(kGenTag)
      .derive(static_cast<std::uint64_t>(subject_index))
      .derive(static_cast<std::uint64_t>(class_label));
}

std::vector<int> block_starts(int frames, int blocks) {
  std::vector<int> starts(blocks + 1);
  int base = frames / blocks, rem = frames % blocks, at = 0;
  for (int b = 0; b < blocks; ++b) {
    starts[b] = at;
    at += base + (b < rem ? 1 : 0);
  }
  starts[blocks] = frames;
  return starts;
}

std::vector<double> latent_series(int frames, double period, RngStream& rng) {
  double phase = rng.next_uniform(0.0, kTwoPi);
  std::vector<double> u(frames);
  for (int t = 0; t < frames; ++t)
    u[t] = std::sin(kTwoPi * t / period + phase) + 0.3 * rng.next_gaussian();
  return u;
}

int community_of(int roi, int comm_size) { return std::min(roi / comm_size, 2); }

// Cross-community ROI pairs receiving the planted coupling.
std::vector<std::pair<int, int>> coupled_pairs(int n_roi) {
  int g = n_roi / 3;
  int n_pairs = std::min(4, g);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n_pairs; ++i) pairs.push_back({i, g + i});
  return pairs;
}

Mat roi_to_voxels(const Mat& roi_series, int voxels_per_roi, double noise_sigma, RngStream& rng) {
  Mat out(roi_series.rows, roi_series.cols * voxels_per_roi);
  for (int r = 0; r < roi_series.cols; ++r)
    for (int v = 0; v < voxels_per_roi; ++v)
      for (int t = 0; t < roi_series.rows; ++t)
        out(t, r * voxels_per_roi + v) = roi_series(t, r) + noise_sigma * rng.next_gaussian();
  return out;
}

Mat gen_condition_coupled_rois(const SynthConfig& cfg, int class_label, RngStream& base,
                               RngStream& coupling, std::vector<std::string>* condition) {
  int F = cfg.frames, R = cfg.n_roi;
  int comm_size = R / 3;
  std::vector<std::vector<double>> u;
  for (int c = 0; c < 3; ++c) u.push_back(latent_series(F, 17.0 + 6.0 * c, base));

  Mat x(F, R);
  for (int r = 0; r < R; ++r) {
    const std::vector<double>& uc = u[community_of(r, comm_size)];
    for (int t = 0; t < F; ++t) x(t, r) = uc[t] + 0.35 * base.next_gaussian();
  }

  std::vector<int> starts = block_starts(F, cfg.t_blocks);
  condition->assign(F, "");
  for (int b = 0; b < cfg.t_blocks; ++b) {
    bool biol = b % 2 == 0;
    for (int t = starts[b]; t < starts[b + 1]; ++t) (*condition)[t] = biol ? "BIOL" : "SCRAM";
    if (!biol) continue;
    for (int t = starts[b]; t < starts[b + 1]; ++t)
      for (auto [p, q] : coupled_pairs(R)) {
        if (class_label == 1) {
          double z = cfg.coupling_strength * coupling.next_gaussian();
          x(t, p) += z;
          x(t, q) += z;
        } else {
          x(t, p) += cfg.coupling_strength * coupling.next_gaussian();
          x(t, q) += cfg.coupling_strength * coupling.next_gaussian();
        }
      }
  }
  return x;
}

Mat gen_temporal_order_rois(const SynthConfig& cfg, int class_label, RngStream& base,
                            std::vector<std::string>* condition) {
  int F = cfg.frames, R = cfg.n_roi, half = F / 2;
  int m = R / 4;  // group size; A = [0, m), B = [m, 2m)
  std::vector<double> u0 = latent_series(half, 19.0, base);
  std::vector<double> u1 = latent_series(half, 19.0, base);

  Mat x(F, R);
  for (int r = 0; r < R; ++r)
    for (int t = 0; t < F; ++t) x(t, r) = 0.5 * base.next_gaussian();

  // class 0: A active first, B second; class 1 swaps the groups, not the
  // latents, so the half-swap maps one class's law onto the other's exactly.
  int first_group = class_label == 0 ? 0 : 1;
  for (int t = 0; t < half; ++t) {
    int lo = first_group == 0 ? 0 : m;
    for (int r = lo; r < lo + m; ++r) x(t, r) += u0[t];
  }
  for (int t = half; t < F; ++t) {
    int lo = first_group == 0 ? m : 0;
    for (int r = lo; r < lo + m; ++r) x(t, r) += u1[t - half];
  }
  condition->assign(F, "BIOL");
  return x;
}

Mat gen_multi_state_rois(const SynthConfig& cfg, int class_label, RngStream& base,
                         std::vector<std::string>* condition) {
  int F = cfg.frames, R = cfg.n_roi;
  int m = R / cfg.n_classes;
  std::vector<double> u = latent_series(F, 20.0, base);
  Mat x(F, R);
  for (int r = 0; r < R; ++r) {
    bool active = r >= class_label * m && r < (class_label + 1) * m;
    for (int t = 0; t < F; ++t)
      x(t, r) = 0.5 * base.next_gaussian() + (active ? u[t] : 0.0);
  }
  condition->assign(F, "BIOL");
  return x;
}

std::string subject_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%03d", index);
  return buf;
}

}  // namespace

void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.n_subjects < 1 || cfg.n_roi < 6 || cfg.frames < 2 || cfg.t_blocks < 2 ||
      cfg.n_classes < 2 || cfg.n_voxels_per_roi < 1 || cfg.n_augments < 1)
    throw ConfigError("synth counts out of range");
  if (cfg.frames < 2 * cfg.t_blocks)
    throw ConfigError("synth needs at least 2 frames per block");
  if (!(cfg.noise_sigma > 0.0)) throw ConfigError("noise_sigma must be positive");
  if (!(cfg.voxel_fraction > 0.0 && cfg.voxel_fraction <= 1.0))
    throw ConfigError("voxel_fraction must be in (0, 1]");
  if (cfg.task != TaskKind::multi_state && cfg.n_classes != 2)
    throw ConfigError(task_name(cfg.task) + " generates 2 classes, config says " +
                      std::to_string(cfg.n_classes));
  if (cfg.task == TaskKind::temporal_order &&
      (cfg.t_blocks % 2 != 0 || cfg.frames % cfg.t_blocks != 0))
    throw ConfigError("temporal_order needs an even block count dividing frames");
  if (cfg.task == TaskKind::multi_state && cfg.n_roi < cfg.n_classes)
    throw ConfigError("multi_state needs at least one ROI per class");
}

SubjectData gen_subject(const SynthConfig& cfg, int subject_index, int class_label) {
  validate_synth_config(cfg);
  if (class_label < 0 || class_label >= cfg.n_classes)
    throw ConfigError("class label " + std::to_string(class_label) + " out of range");
  RngStream subj = subject_stream(cfg, subject_index, class_label);
  RngStream base = subj.derive(kSubjectBase);
  RngStream coupling = subj.derive(kSubjectCoupling);
  RngStream voxel = subj.derive(kSubjectVoxel);

  SubjectData out;
  Mat rois;
  switch (cfg.task) {
    case TaskKind::condition_coupled:
      rois = gen_condition_coupled_rois(cfg, class_label, base, coupling, &out.condition);
      break;
    case TaskKind::temporal_order:
      rois = gen_temporal_order_rois(cfg, class_label, base, &out.condition);
      break;
    case TaskKind::multi_state:
      rois = gen_multi_state_rois(cfg, class_label, base, &out.condition);
      break;
  }
  out.voxels = roi_to_voxels(rois, cfg.n_voxels_per_roi, cfg.noise_sigma, voxel);
  return out;
}

std::vector<Mat> bootstrap_roi_sample(const Mat& voxel_series, int n_roi, double fraction,
                                      int n_augments, RngStream& rng) {
  if (n_roi < 1 || voxel_series.cols % n_roi != 0)
    throw ConfigError("voxel columns (" + std::to_string(voxel_series.cols) +
                      ") not divisible into " + std::to_string(n_roi) + " ROIs");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("bootstrap fraction must be in (0, 1]");
  int V = voxel_series.cols / n_roi;
  int k = static_cast<int>(std::ceil(fraction * V));
  std::vector<Mat> out;
  out.reserve(n_augments);
  for (int a = 0; a < n_augments; ++a) {
    Mat roi(voxel_series.rows, n_roi);
    for (int r = 0; r < n_roi; ++r) {
      std::vector<int> pick(k);
      for (int i = 0; i < k; ++i) pick[i] = static_cast<int>(rng.next_below(V));
      for (int t = 0; t < voxel_series.rows; ++t) {
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += voxel_series(t, r * V + pick[i]);
        roi(t, r) = s / k;
      }
    }
    out.push_back(std::move(roi));
  }
  return out;
}

Planted planted_cells(const SynthConfig& cfg) {
  Planted p;
  switch (cfg.task) {
    case TaskKind::condition_coupled:
      if (cfg.coupling_strength > 0.0) {
        for (auto [a, b] : coupled_pairs(cfg.n_roi)) {
          p.rois.push_back(a);
          p.rois.push_back(b);
        }
        std::sort(p.rois.begin(), p.rois.end());
        for (int b = 0; b < cfg.t_blocks; b += 2) p.windows.push_back(b);
      }
      break;
    case TaskKind::temporal_order: {
      int m = cfg.n_roi / 4;
      for (int r = 0; r < 2 * m; ++r) p.rois.push_back(r);
      for (int w = 0; w < cfg.t_blocks; ++w) p.windows.push_back(w);
      break;
    }
    case TaskKind::multi_state:
      break;  // signal location is class-dependent
  }
  return p;
}

Dataset gen_dataset(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  Dataset ds;
  ds.n_roi = cfg.n_roi;
  ds.frames = cfg.frames;
  ds.planted = planted_cells(cfg);

  auto add_instances = [&](int subject_index, int class_label, const std::string& rec_id) {
    SubjectData sd = gen_subject(cfg, subject_index, class_label);
    RngStream boot = subject_stream(cfg, subject_index, class_label).derive(kSubjectBoot);
    std::vector<Mat> augments =
        bootstrap_roi_sample(sd.voxels, cfg.n_roi, cfg.voxel_fraction, cfg.n_augments, boot);
    for (int a = 0; a < cfg.n_augments; ++a) {
      TimeSeriesInstance inst;
      char suffix[8];
      std::snprintf(suffix, sizeof suffix, "_a%02d", a);
      inst.instance_id = rec_id + suffix;
      inst.subject_id = subject_name(subject_index);
      inst.class_label = class_label;
      inst.series = augments[a];
      inst.condition = sd.condition;
      ds.instances.push_back(std::move(inst));
    }
  };

  for (int s = 0; s < cfg.n_subjects; ++s) {
    if (cfg.task == TaskKind::multi_state) {
      for (int k = 0; k < cfg.n_classes; ++k)
        add_instances(s, k, subject_name(s) + "_c" + std::to_string(k));
    } else {
      add_instances(s, s % 2, subject_name(s));
    }
  }
  return ds;
}

GraphInstance gen_pe_sim(std::uint64_t seed) {
  const int T = 12, N = 84;
  RngStream rng = RngStream(seed).derive(7);
  GraphInstance g;
  g.instance_id = "pe_sim";
  g.subject_id = "pe_sim";
  g.n_nodes = N;
  for (int t = 0; t < T; ++t) {
    Mat f(N, 1);
    for (int j = 0; j < N; ++j) f(j, 0) = 0.1 * rng.next_gaussian();
    g.node_features.push_back(std::move(f));
  }
  return g;
}

std::string task_name(TaskKind t) {
  switch (t) {
    case TaskKind::condition_coupled: return "condition_coupled";
    case TaskKind::temporal_order: return "temporal_order";
    case TaskKind::multi_state: return "multi_state";
  }
  throw InternalError("unreachable task kind");
}

TaskKind parse_task(const std::string& name) {
  if (name == "condition_coupled") return TaskKind::condition_coupled;
  if (name == "temporal_order") return TaskKind::temporal_order;
  if (name == "multi_state") return TaskKind::multi_state;
  throw ConfigError("unknown task '" + name + "'");
}

}  // namespace stn
