#include "core/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace stn {

namespace {

int argmax_row(const double* v, int k) {
  int best = 0;
  for (int c = 1; c < k; ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

Tensor eval_logits(const ModelParams& params, const ModelConfig& cfg, const GraphInstance& g,
                   const Tensor* mask) {
  Tape tape;
  ForwardOptions opt;
  opt.node_mask = mask;
  return model_forward(tape, g, params, cfg, opt);
}

}  // namespace

ImportanceMap explain_instance(const ModelParams& params, const ModelConfig& cfg,
                               const GraphInstance& g, const ExplainConfig& ecfg) {
  if (ecfg.steps < 1) throw ConfigError("explain steps must be at least 1");
  if (ecfg.sparsity_weight < 0.0 || ecfg.entropy_weight < 0.0)
    throw ConfigError("explain regularizer weights must be nonnegative");
  int T = static_cast<int>(g.node_features.size());
  int N = g.n_nodes;
  std::int64_t S = static_cast<std::int64_t>(T) * N;

  ModelParams frozen = params.clone(false);

  Tensor logits0 = eval_logits(frozen, cfg, g, nullptr);
  int target = argmax_row(logits0.data(), cfg.n_classes);

  Tensor ones = Tensor::full({static_cast<int>(S), 1}, 1.0);
  Tensor logits1 = eval_logits(frozen, cfg, g, &ones);
  if (argmax_row(logits1.data(), cfg.n_classes) != target)
    throw InternalError("all-ones mask changed the prediction of " + g.instance_id);

  Tensor m = Tensor::zeros({static_cast<int>(S), 1}, true);
  for (int step = 0; step < ecfg.steps; ++step) {
    Tape tape;
    Tensor sig = tape.sigmoid(m);
    ForwardOptions opt;
    opt.node_mask = &sig;
    Tensor logits = model_forward(tape, g, frozen, cfg, opt);
    Tensor loss = tape.cross_entropy(logits, {target});
    loss = tape.add(loss, tape.scale(tape.sum(sig), ecfg.sparsity_weight / S));
    loss = tape.add(loss,
                    tape.scale(tape.sum(tape.binary_entropy_logits(m)), ecfg.entropy_weight / S));
    m.zero_grad();
    tape.backward(loss);
    std::span<const double> grad = m.grad();
    double* mv = m.data_mut();
    for (std::int64_t i = 0; i < S; ++i) mv[i] -= ecfg.lr_mask * grad[i];
  }

  ImportanceMap map;
  map.instance_id = g.instance_id;
  map.T = T;
  map.N = N;
  map.scores.resize(S);
  for (std::int64_t i = 0; i < S; ++i) map.scores[i] = 1.0 / (1.0 + std::exp(-m.data()[i]));
  return map;
}

Mat aggregate_importance(const std::vector<ImportanceMap>& maps) {
  if (maps.empty()) throw DataError("no importance maps to aggregate");
  int T = maps[0].T, N = maps[0].N;
  Mat out(T, N);
  for (const ImportanceMap& map : maps) {
    if (map.T != T || map.N != N)
      throw DataError("importance map " + map.instance_id + " has mismatched shape");
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < N; ++j) out(t, j) += map.scores[static_cast<size_t>(t) * N + j];
  }
  for (double& v : out.a) v /= maps.size();
  return out;
}

std::vector<double> attention_heatmap(const ModelParams& params, const ModelConfig& cfg,
                                      const GraphInstance& g, int query_t, int query_j) {
  if (cfg.aggregator != Aggregator::attention)
    throw ConfigError("attention heatmaps need the attention aggregator, not lstm");
  int T = static_cast<int>(g.node_features.size());
  int N = g.n_nodes;
  if (query_t < 0) query_t = T / 2;
  if (query_j < 0) query_j = N / 2;
  if (query_t >= T || query_j >= N)
    throw ConfigError("query node (" + std::to_string(query_t) + ", " + std::to_string(query_j) +
                      ") outside " + std::to_string(T) + "x" + std::to_string(N));

  Tape tape;
  AttentionCache cache;
  ForwardOptions opt;
  opt.attention = &cache;
  model_forward(tape, g, params, cfg, opt);
  int row = query_t * N + query_j;
  std::vector<double> out(cache.attn.begin() + static_cast<size_t>(row) * cache.rows,
                          cache.attn.begin() + static_cast<size_t>(row + 1) * cache.rows);
  return out;
}

double temporal_variance_stat(const std::vector<double>& row, int T, int N) {
  if (static_cast<std::int64_t>(row.size()) != static_cast<std::int64_t>(T) * N)
    throw ConfigError("attention row length does not match T*N");
  double total = 0.0;
  for (int j = 0; j < N; ++j) {
    double mean = 0.0;
    for (int t = 0; t < T; ++t) mean += row[static_cast<size_t>(t) * N + j];
    mean /= T;
    double var = 0.0;
    for (int t = 0; t < T; ++t) {
      double d = row[static_cast<size_t>(t) * N + j] - mean;
      var += d * d;
    }
    total += var / T;
  }
  return total / N;
}

void write_importance_csv(const std::string& path, const Mat& scores) {
  std::string out = "t,roi,score\n";
  for (int t = 0; t < scores.rows; ++t)
    for (int j = 0; j < scores.cols; ++j)
      out += std::to_string(t) + "," + std::to_string(j) + "," + format_double17(scores(t, j)) +
             "\n";
  write_text_file(path, out);
}

void write_importance_pgms(const std::string& dir, const std::string& prefix, const Mat& scores) {
  ensure_dir(dir);
  int N = scores.cols;
  int w = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(N))));
  int h = (N + w - 1) / w;
  for (int t = 0; t < scores.rows; ++t) {
    double lo = scores(t, 0);
    for (int j = 1; j < N; ++j) lo = std::min(lo, scores(t, j));
    Mat img(h, w);
    for (double& v : img.a) v = lo;  // padding renders black after scaling
    for (int j = 0; j < N; ++j) img(j / w, j % w) = scores(t, j);
    char tag[16];
    std::snprintf(tag, sizeof tag, "_t%02d", t);
    write_pgm(dir + "/" + prefix + tag + ".pgm", img);
  }
}

}  // namespace stn
