#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <thread>

#include <json.hpp>

namespace stn {

namespace {

// Substream tags under RngStream(seed).derive(kTrainRoot).
enum : std::uint64_t { kTrainRoot = 2, kKfoldTag = 10, kFoldBase = 20 };
enum : std::uint64_t { kValSplit = 1, kEpochShuffle = 2, kEpochDropout = 3, kParamInit = 4 };

void shuffle_ids(std::vector<std::string>& ids, RngStream& rng) {
  for (size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.next_below(i)]);
}

// subject -> smallest class label seen among its instances
std::map<std::string, int> subject_classes(const std::vector<InstanceKey>& keys) {
  std::map<std::string, int> cls;
  for (const InstanceKey& key : keys) {
    auto [it, fresh] = cls.emplace(key.subject_id, key.class_label);
    if (!fresh) it->second = std::min(it->second, key.class_label);
  }
  return cls;
}

void validate_train_cfg(const TrainConfig& cfg) {
  if (cfg.lr < 0.0) throw ConfigError("lr must be nonnegative");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (cfg.patience < 1) throw ConfigError("patience must be at least 1");
  if (cfg.folds < 2) throw ConfigError("fold count must be at least 2");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0))
    throw ConfigError("val_fraction must be in [0, 1)");
  if (cfg.parallel_folds < 1) throw ConfigError("parallel_folds must be at least 1");
}

std::vector<double> softmax_row(const double* logits, int k) {
  double mx = logits[0];
  for (int c = 1; c < k; ++c) mx = std::max(mx, logits[c]);
  double sum = 0.0;
  std::vector<double> p(k);
  for (int c = 0; c < k; ++c) {
    p[c] = std::exp(logits[c] - mx);
    sum += p[c];
  }
  for (int c = 0; c < k; ++c) p[c] /= sum;
  return p;
}

}  // namespace

std::vector<std::vector<std::string>> stratified_group_kfold(const std::vector<InstanceKey>& keys,
                                                             int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("fold count must be at least 2");
  std::map<std::string, int> cls = subject_classes(keys);
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& [subject, c] : cls) by_class[c].push_back(subject);

  RngStream root = RngStream(seed).derive(kTrainRoot).derive(kKfoldTag);
  std::vector<std::vector<std::string>> folds(k);
  int assigned = 0;
  for (auto& [c, subjects] : by_class) {
    if (static_cast<int>(subjects.size()) < k)
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(subjects.size()) +
                      " subjects, cannot stratify into " + std::to_string(k) + " folds");
    std::sort(subjects.begin(), subjects.end());
    RngStream rng = root.derive(static_cast<std::uint64_t>(c));
    shuffle_ids(subjects, rng);
    int offset = assigned % k;
    for (size_t i = 0; i < subjects.size(); ++i)
      folds[(offset + i) % k].push_back(subjects[i]);
    assigned += static_cast<int>(subjects.size());
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

GraphDataset build_graph_dataset(const Dataset& ds, const GraphBuildConfig& cfg,
                                 BuildStats* stats) {
  GraphDataset out;
  out.T = cfg.windows;
  out.n_roi = ds.n_roi;
  out.planted = ds.planted;
  out.instances.reserve(ds.instances.size());
  for (const TimeSeriesInstance& inst : ds.instances)
    out.instances.push_back(build_graph_instance(inst, cfg, stats));
  return out;
}

double auc_score(const std::vector<std::pair<double, bool>>& scored) {
  size_t n = scored.size();
  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scored[a].first < scored[b].first; });

  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scored[order[j + 1]].first == scored[order[i]].first) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }

  double pos_ranks = 0.0;
  std::int64_t n_pos = 0;
  for (size_t t = 0; t < n; ++t)
    if (scored[t].second) {
      pos_ranks += rank[t];
      ++n_pos;
    }
  std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("AUC undefined: evaluation set contains a single class");
  double u = pos_ranks - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::pair<double, double> evaluate(const ModelParams& params, const ModelConfig& cfg,
                                   const std::vector<const GraphInstance*>& instances) {
  if (instances.empty()) throw DataError("evaluation set is empty");
  int k = cfg.n_classes;
  std::vector<std::vector<double>> probs;
  std::vector<int> labels;
  int correct = 0;
  for (const GraphInstance* g : instances) {
    Tape tape;
    ForwardOptions opt;
    Tensor logits = model_forward(tape, *g, params, cfg, opt);
    std::vector<double> p = softmax_row(logits.data(), k);
    int pred = 0;
    for (int c = 1; c < k; ++c)
      if (p[c] > p[pred]) pred = c;
    if (pred == g->class_label) ++correct;
    probs.push_back(std::move(p));
    labels.push_back(g->class_label);
  }
  double accuracy = static_cast<double>(correct) / instances.size();

  double auc;
  if (k == 2) {
    std::vector<std::pair<double, bool>> scored;
    for (size_t i = 0; i < probs.size(); ++i) scored.push_back({probs[i][1], labels[i] == 1});
    auc = auc_score(scored);
  } else {
    double total = 0.0;
    int counted = 0;
    for (int c = 0; c < k; ++c) {
      std::vector<std::pair<double, bool>> scored;
      bool any_pos = false, any_neg = false;
      for (size_t i = 0; i < probs.size(); ++i) {
        bool pos = labels[i] == c;
        (pos ? any_pos : any_neg) = true;
        scored.push_back({probs[i][c], pos});
      }
      if (!any_pos || !any_neg) continue;
      total += auc_score(scored);
      ++counted;
    }
    if (counted == 0) throw DataError("AUC undefined: evaluation set contains a single class");
    auc = total / counted;
  }
  return {accuracy, auc};
}

FoldResult train_model(const GraphDataset& ds, const std::vector<int>& train_idx,
                       const std::vector<int>& test_idx, const ModelConfig& mcfg,
                       const TrainConfig& tcfg, int fold_index) {
  validate_train_cfg(tcfg);
  {
    std::set<std::string> train_subjects;
    for (int i : train_idx) train_subjects.insert(ds.instances[i].subject_id);
    for (int i : test_idx)
      if (train_subjects.count(ds.instances[i].subject_id))
        throw InternalError("fold leak: subject " + ds.instances[i].subject_id +
                            " appears in both train and test");
  }

  RngStream fold_stream =
      RngStream(tcfg.seed).derive(kTrainRoot).derive(kFoldBase + static_cast<std::uint64_t>(fold_index));

  // subject-level validation split inside the training fold
  std::vector<InstanceKey> train_keys;
  for (int i : train_idx)
    train_keys.push_back({ds.instances[i].subject_id, ds.instances[i].class_label});
  std::map<std::string, int> cls = subject_classes(train_keys);
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& [subject, c] : cls) by_class[c].push_back(subject);
  std::set<std::string> val_subjects;
  RngStream val_rng = fold_stream.derive(kValSplit);
  for (auto& [c, subjects] : by_class) {
    std::sort(subjects.begin(), subjects.end());
    RngStream rng = val_rng.derive(static_cast<std::uint64_t>(c));
    shuffle_ids(subjects, rng);
    int want = static_cast<int>(std::floor(tcfg.val_fraction * subjects.size() + 0.5));
    want = std::min(want, static_cast<int>(subjects.size()) - 1);
    for (int i = 0; i < want; ++i) val_subjects.insert(subjects[i]);
  }

  std::vector<int> fit_idx, val_idx;
  for (int i : train_idx)
    (val_subjects.count(ds.instances[i].subject_id) ? val_idx : fit_idx).push_back(i);
  if (fit_idx.empty()) throw DataError("training fold is empty after validation split");

  RngStream init_rng = fold_stream.derive(kParamInit);
  ModelParams params = init_params(mcfg, init_rng);
  AdamW opt({tcfg.lr, 0.9, 0.999, 1e-8, tcfg.weight_decay});

  auto eval_loss = [&](const std::vector<int>& idx) {
    double total = 0.0;
    for (int i : idx) {
      Tape tape;
      ForwardOptions fopt;
      Tensor logits = model_forward(tape, ds.instances[i], params, mcfg, fopt);
      total += tape.cross_entropy(logits, {ds.instances[i].class_label}).scalar();
    }
    return total / idx.size();
  };

  FoldResult result;
  result.fold = fold_index;
  double best_val = std::numeric_limits<double>::infinity();
  int since_improve = 0;

  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    std::vector<int> order = fit_idx;
    RngStream shuffle_rng = fold_stream.derive(kEpochShuffle).derive(epoch);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    RngStream dropout_rng = fold_stream.derive(kEpochDropout).derive(epoch);

    double epoch_loss = 0.0;
    for (size_t at = 0; at < order.size(); at += tcfg.batch_size) {
      size_t end = std::min(order.size(), at + tcfg.batch_size);
      Tape tape;
      std::vector<Tensor> logit_rows;
      std::vector<int> labels;
      for (size_t i = at; i < end; ++i) {
        const GraphInstance& g = ds.instances[order[i]];
        ForwardOptions fopt;
        fopt.training = true;
        fopt.rng = &dropout_rng;
        logit_rows.push_back(model_forward(tape, g, params, mcfg, fopt));
        labels.push_back(g.class_label);
      }
      Tensor loss = tape.cross_entropy(tape.concat_rows(logit_rows), labels);
      params.zero_grad();
      tape.backward(loss);
      opt.step(params);
      epoch_loss += loss.scalar() * static_cast<double>(end - at);
    }
    epoch_loss /= fit_idx.size();
    double vloss = val_idx.empty() ? epoch_loss : eval_loss(val_idx);
    if (!std::isfinite(epoch_loss) || !std::isfinite(vloss))
      throw NumericError("training diverged at fold " + std::to_string(fold_index) + " epoch " +
                         std::to_string(epoch));
    result.train_loss.push_back(epoch_loss);
    result.val_loss.push_back(vloss);

    if (vloss < best_val) {
      best_val = vloss;
      result.best_epoch = epoch;
      result.best_params = params.clone(true);
      since_improve = 0;
    } else if (++since_improve >= tcfg.patience) {
      break;
    }
  }

  result.best_val_loss = best_val;
  std::vector<const GraphInstance*> test_set;
  for (int i : test_idx) test_set.push_back(&ds.instances[i]);
  auto [acc, auc] = evaluate(result.best_params, mcfg, test_set);
  result.accuracy = acc;
  result.auc = auc;
  return result;
}

CvSummary cross_validate(const GraphDataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::string& out_dir, const std::string& config_echo_json) {
  validate_train_cfg(tcfg);
  std::vector<InstanceKey> keys;
  for (const GraphInstance& g : ds.instances) keys.push_back({g.subject_id, g.class_label});
  std::vector<std::vector<std::string>> folds =
      stratified_group_kfold(keys, tcfg.folds, tcfg.seed);

  CvSummary summary;
  summary.folds.resize(tcfg.folds);
  std::vector<std::exception_ptr> errors(tcfg.folds);

  auto run_fold = [&](int f) {
    try {
      std::set<std::string> held(folds[f].begin(), folds[f].end());
      std::vector<int> train_idx, test_idx;
      for (size_t i = 0; i < ds.instances.size(); ++i)
        (held.count(ds.instances[i].subject_id) ? test_idx : train_idx)
            .push_back(static_cast<int>(i));
      summary.folds[f] = train_model(ds, train_idx, test_idx, mcfg, tcfg, f);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };

  int workers = std::min(tcfg.parallel_folds, tcfg.folds);
  if (workers <= 1) {
    for (int f = 0; f < tcfg.folds; ++f) run_fold(f);
  } else {
    for (int wave = 0; wave < tcfg.folds; wave += workers) {
      std::vector<std::thread> pool;
      for (int f = wave; f < std::min(tcfg.folds, wave + workers); ++f)
        pool.emplace_back(run_fold, f);
      for (std::thread& t : pool) t.join();
    }
  }
  for (int f = 0; f < tcfg.folds; ++f)
    if (errors[f]) std::rethrow_exception(errors[f]);

  auto moments = [&](auto get) {
    double m = 0.0;
    for (const FoldResult& r : summary.folds) m += get(r);
    m /= summary.folds.size();
    double var = 0.0;
    for (const FoldResult& r : summary.folds) {
      double d = get(r) - m;
      var += d * d;
    }
    return std::pair<double, double>(m, std::sqrt(var / summary.folds.size()));
  };
  std::tie(summary.mean_accuracy, summary.std_accuracy) =
      moments([](const FoldResult& r) { return r.accuracy; });
  std::tie(summary.mean_auc, summary.std_auc) = moments([](const FoldResult& r) { return r.auc; });

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    nlohmann::json metrics;
    if (!config_echo_json.empty())
      metrics["config"] = nlohmann::json::parse(config_echo_json);
    else
      metrics["config"] = nlohmann::json::object();
    metrics["per_fold"] = nlohmann::json::array();
    for (FoldResult& r : summary.folds) {
      r.checkpoint_path = out_dir + "/fold" + std::to_string(r.fold) + "_checkpoint.json";
      save_checkpoint(r.checkpoint_path, r.best_params);
      std::string csv = "epoch,train_loss,val_loss\n";
      for (size_t e = 0; e < r.train_loss.size(); ++e)
        csv += std::to_string(e) + "," + format_double17(r.train_loss[e]) + "," +
               format_double17(r.val_loss[e]) + "\n";
      write_text_file(out_dir + "/fold" + std::to_string(r.fold) + "_loss.csv", csv);
      metrics["per_fold"].push_back({{"fold", r.fold},
                                     {"accuracy", r.accuracy},
                                     {"auc", r.auc},
                                     {"best_epoch", r.best_epoch},
                                     {"epochs_run", r.train_loss.size()},
                                     {"best_val_loss", r.best_val_loss}});
    }
    metrics["mean"] = {{"accuracy", summary.mean_accuracy}, {"auc", summary.mean_auc}};
    metrics["std"] = {{"accuracy", summary.std_accuracy}, {"auc", summary.std_auc}};
    write_text_file(out_dir + "/metrics.json", metrics.dump(2) + "\n");
  }
  return summary;
}

}  // namespace stn
