#include "core/model.hpp"

#include <cmath>

#include "core/rng.hpp"

namespace stn {

static void check_pe(const PEConfig& pe) {
  if (pe.d_model <= 0 || pe.d_model % 2 != 0)
    throw ConfigError("d_model must be positive and even, got " + std::to_string(pe.d_model));
  if (pe.N <= 0 || pe.T <= 0) throw ConfigError("positional encoding needs N > 0 and T > 0");
  if (!(pe.C1 > 0.0)) throw ConfigError("C1 must be positive");
}

Tensor positional_encoding(const PEConfig& pe) {
  check_pe(pe);
  int d = pe.d_model;
  Tensor out = Tensor::zeros({pe.T * pe.N, d});
  double* v = out.data_mut();
  for (int i = 0; i < pe.T; ++i)
    for (int j = 0; j < pe.N; ++j) {
      double* row = v + static_cast<size_t>(i * pe.N + j) * d;
      for (int f = 0; f < d / 2; ++f) {
        double div = std::pow(pe.C1, 2.0 * f / d);
        row[2 * f] = std::sin(j / div) * std::sin((pe.C2 + i) / div);
        row[2 * f + 1] = std::cos(j / div) * std::cos((pe.C2 + i) / div);
      }
    }
  return out;
}

Tensor raster_pe(const PEConfig& pe) {
  check_pe(pe);
  int d = pe.d_model;
  Tensor out = Tensor::zeros({pe.T * pe.N, d});
  double* v = out.data_mut();
  for (int p = 0; p < pe.T * pe.N; ++p) {
    double* row = v + static_cast<size_t>(p) * d;
    for (int f = 0; f < d / 2; ++f) {
      double div = std::pow(pe.C1, 2.0 * f / d);
      row[2 * f] = std::sin(p / div);
      row[2 * f + 1] = std::cos(p / div);
    }
  }
  return out;
}

Tensor pe_for_mode(PEMode mode, const PEConfig& pe) {
  switch (mode) {
    case PEMode::none: return Tensor();
    case PEMode::raster1d: return raster_pe(pe);
    case PEMode::st2d: return positional_encoding(pe);
  }
  throw InternalError("unreachable pe mode");
}

static void check_model_cfg(const ModelConfig& cfg) {
  if (cfg.d_model <= 0 || cfg.d_model % 2 != 0)
    throw ConfigError("d_model must be positive and even");
  if (cfg.feat_dim <= 0) throw ConfigError("feat_dim must be positive");
  if (cfg.n_classes < 2) throw ConfigError("need at least 2 classes");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

ModelParams init_params(const ModelConfig& cfg, RngStream& rng) {
  check_model_cfg(cfg);
  int d = cfg.d_model;
  ModelParams p;
  p.add("input.W", glorot_init(cfg.feat_dim, d, rng));
  p.add("input.b", Tensor::zeros({d}, true));
  for (const char* conv : {"conv1", "conv2"}) {
    std::string name = conv;
    p.add(name + ".W", glorot_init(d, d, rng));
    if (cfg.backbone == Backbone::gcn) {
      p.add(name + ".b", Tensor::zeros({d}, true));
    } else {
      p.add(name + ".a_src", glorot_init(d, 1, rng));
      p.add(name + ".a_dst", glorot_init(d, 1, rng));
    }
  }
  if (cfg.aggregator == Aggregator::attention) {
    p.add("attn.Wq", glorot_init(d, d, rng));
    p.add("attn.Wk", glorot_init(d, d, rng));
    p.add("attn.Wv", glorot_init(d, d, rng));
    p.add("attn.Wo", glorot_init(d, d, rng));
    p.add("ff.W1", glorot_init(d, d, rng));
    p.add("ff.b1", Tensor::zeros({d}, true));
    p.add("ff.W2", glorot_init(d, d, rng));
    p.add("ff.b2", Tensor::zeros({d}, true));
  } else {
    p.add("lstm.Wx", glorot_init(d, 4 * d, rng));
    p.add("lstm.Wh", glorot_init(d, 4 * d, rng));
    p.add("lstm.b", Tensor::zeros({4 * d}, true));
  }
  p.add("head.W", glorot_init(d, cfg.n_classes, rng));
  p.add("head.b", Tensor::zeros({cfg.n_classes}, true));
  return p;
}

Mat gcn_norm_adjacency(int n_nodes, const std::vector<Edge>& edges) {
  Mat a(n_nodes, n_nodes);
  for (int i = 0; i < n_nodes; ++i) a(i, i) = 1.0;  // self-loops
  for (const Edge& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= n_nodes || e.v >= n_nodes || e.u == e.v)
      throw DataError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                      ") invalid for " + std::to_string(n_nodes) + " nodes");
    if (!(e.weight > 0.0)) throw DataError("edge weights must be positive");
    a(e.u, e.v) += e.weight;
    a(e.v, e.u) += e.weight;
  }
  std::vector<double> dinv(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n_nodes; ++j) deg += a(i, j);
    dinv[i] = 1.0 / std::sqrt(deg);
  }
  for (int i = 0; i < n_nodes; ++i)
    for (int j = 0; j < n_nodes; ++j) a(i, j) *= dinv[i] * dinv[j];
  return a;
}

Tensor gcn_layer(Tape& tape, const Tensor& x, const Tensor& norm_adj, const Tensor& w,
                 const Tensor& b) {
  return tape.add_rowvec(tape.matmul(norm_adj, tape.matmul(x, w)), b);
}

Mat gat_logit_mask(int n_nodes, const std::vector<Edge>& edges) {
  Mat c(n_nodes, n_nodes);
  for (int i = 0; i < n_nodes; ++i)
    for (int j = 0; j < n_nodes; ++j) c(i, j) = i == j ? 0.0 : -1e9;
  for (const Edge& e : edges) {
    if (!(e.weight > 0.0)) throw DataError("edge weights must be positive");
    double lw = std::log(e.weight);
    c(e.u, e.v) = lw;
    c(e.v, e.u) = lw;
  }
  return c;
}

Tensor gat_layer(Tape& tape, const Tensor& x, const Tensor& logit_mask, const Tensor& w,
                 const Tensor& a_src, const Tensor& a_dst) {
  Tensor h = tape.matmul(x, w);                       // N x d
  Tensor s = tape.matmul(h, a_src);                   // N x 1, source term
  Tensor dst = tape.matmul(h, a_dst);                 // N x 1, destination term
  Tensor raw = tape.add_outer(dst, tape.transpose(s));  // raw[v][u] = d_v + s_u
  Tensor logits = tape.add(tape.leaky_relu(raw, 0.2), logit_mask);
  Tensor alpha = tape.softmax_rows(logits);
  return tape.matmul(alpha, h);
}

Tensor st_self_attention(Tape& tape, const Tensor& h, const ModelParams& params,
                         AttentionCache* cache) {
  int d = h.cols();
  Tensor q = tape.matmul(h, params.at("attn.Wq"));
  Tensor k = tape.matmul(h, params.at("attn.Wk"));
  Tensor v = tape.matmul(h, params.at("attn.Wv"));
  Tensor scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(double(d)));
  Tensor attn = tape.softmax_rows(scores);
  if (cache) {
    cache->rows = attn.rows();
    cache->attn.assign(attn.data(), attn.data() + attn.size());
  }
  return tape.matmul(tape.matmul(attn, v), params.at("attn.Wo"));
}

LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& state, const Tensor& w_x,
                    const Tensor& w_h, const Tensor& b) {
  int d = x.cols();
  Tensor pre = tape.add_rowvec(tape.add(tape.matmul(x, w_x), tape.matmul(state.h, w_h)), b);
  Tensor i = tape.sigmoid(tape.slice_cols(pre, 0, d));
  Tensor f = tape.sigmoid(tape.slice_cols(pre, d, 2 * d));
  Tensor g = tape.tanh(tape.slice_cols(pre, 2 * d, 3 * d));
  Tensor o = tape.sigmoid(tape.slice_cols(pre, 3 * d, 4 * d));
  LstmState next;
  next.c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
  next.h = tape.mul(o, tape.tanh(next.c));
  return next;
}

namespace {

struct ConvStack {
  // Per-snapshot embeddings after input projection and both conv layers.
  std::vector<Tensor> z;
};

ConvStack run_conv_stack(Tape& tape, const GraphInstance& g, const ModelParams& params,
                         const ModelConfig& cfg, const ForwardOptions& opt) {
  int T = static_cast<int>(g.node_features.size());
  int N = g.n_nodes;
  if (T == 0) throw DataError("instance " + g.instance_id + " has no snapshots");
  if (g.node_features[0].cols != cfg.feat_dim)
    throw ConfigError("model feat_dim " + std::to_string(cfg.feat_dim) +
                      " does not match instance feature width " +
                      std::to_string(g.node_features[0].cols));
  if (opt.training && cfg.dropout > 0.0 && !opt.rng)
    throw InternalError("training forward needs an RNG stream for dropout");
  if (opt.node_mask && opt.node_mask->size() != static_cast<std::int64_t>(T) * N)
    throw ConfigError("node mask has " + std::to_string(opt.node_mask->size()) +
                      " entries, expected " + std::to_string(T * N));

  Tensor adj_const;
  if (cfg.backbone == Backbone::gcn) {
    Mat adj = gcn_norm_adjacency(N, g.edges);
    adj_const = Tensor::from_data({N, N}, std::move(adj.a));
  } else {
    Mat mask = gat_logit_mask(N, g.edges);
    adj_const = Tensor::from_data({N, N}, std::move(mask.a));
  }

  RngStream dummy(0);
  RngStream& rng = opt.rng ? *opt.rng : dummy;

  ConvStack out;
  for (int t = 0; t < T; ++t) {
    const Mat& feats = g.node_features[t];
    if (feats.rows != N || feats.cols != cfg.feat_dim)
      throw DataError("snapshot " + std::to_string(t) + " of " + g.instance_id +
                      " has inconsistent shape");
    Tensor x = Tensor::from_data({N, cfg.feat_dim}, feats.a);
    if (opt.node_mask)
      x = tape.scale_rows(x, tape.slice_rows(*opt.node_mask, t * N, (t + 1) * N));
    Tensor z = tape.add_rowvec(tape.matmul(x, params.at("input.W")), params.at("input.b"));
    for (const char* conv : {"conv1", "conv2"}) {
      std::string name = conv;
      if (cfg.backbone == Backbone::gcn)
        z = gcn_layer(tape, z, adj_const, params.at(name + ".W"), params.at(name + ".b"));
      else
        z = gat_layer(tape, z, adj_const, params.at(name + ".W"), params.at(name + ".a_src"),
                      params.at(name + ".a_dst"));
      z = tape.silu(z);
      z = tape.dropout(z, cfg.dropout, opt.training, rng);
    }
    out.z.push_back(z);
  }
  return out;
}

Tensor classify(Tape& tape, const Tensor& pooled, const ModelParams& params) {
  return tape.add_rowvec(tape.matmul(pooled, params.at("head.W")), params.at("head.b"));
}

}  // namespace

Tensor stnagnn_forward(Tape& tape, const GraphInstance& g, const ModelParams& params,
                       const ModelConfig& cfg, const ForwardOptions& opt) {
  ConvStack stack = run_conv_stack(tape, g, params, cfg, opt);
  int T = static_cast<int>(stack.z.size());
  int N = g.n_nodes;
  Tensor h = tape.concat_rows(stack.z);  // (T*N) x d, snapshot-major

  if (cfg.pe_mode != PEMode::none) {
    PEConfig pc;
    pc.d_model = cfg.d_model;
    pc.N = N;
    pc.T = T;
    h = tape.add(h, pe_for_mode(cfg.pe_mode, pc));
  }

  Tensor h1 = tape.add(h, st_self_attention(tape, h, params, opt.attention));

  RngStream dummy(0);
  RngStream& rng = opt.rng ? *opt.rng : dummy;
  Tensor ff = tape.silu(tape.add_rowvec(tape.matmul(h1, params.at("ff.W1")), params.at("ff.b1")));
  ff = tape.dropout(ff, cfg.dropout, opt.training, rng);
  ff = tape.add_rowvec(tape.matmul(ff, params.at("ff.W2")), params.at("ff.b2"));
  Tensor h2 = tape.add(h1, ff);

  return classify(tape, tape.mean_rows(h2), params);
}

Tensor gnn_lstm_forward(Tape& tape, const GraphInstance& g, const ModelParams& params,
                        const ModelConfig& cfg, const ForwardOptions& opt) {
  ConvStack stack = run_conv_stack(tape, g, params, cfg, opt);
  LstmState state;
  state.h = Tensor::zeros({1, cfg.d_model});
  state.c = Tensor::zeros({1, cfg.d_model});
  for (const Tensor& z : stack.z)
    state = lstm_cell(tape, tape.mean_rows(z), state, params.at("lstm.Wx"), params.at("lstm.Wh"),
                      params.at("lstm.b"));
  return classify(tape, state.h, params);
}

Tensor model_forward(Tape& tape, const GraphInstance& g, const ModelParams& params,
                     const ModelConfig& cfg, const ForwardOptions& opt) {
  if (cfg.aggregator == Aggregator::attention) return stnagnn_forward(tape, g, params, cfg, opt);
  return gnn_lstm_forward(tape, g, params, cfg, opt);
}

std::string backbone_name(Backbone b) { return b == Backbone::gcn ? "gcn" : "gat"; }

Backbone parse_backbone(const std::string& s) {
  if (s == "gcn") return Backbone::gcn;
  if (s == "gat") return Backbone::gat;
  throw ConfigError("unknown backbone '" + s + "'");
}

std::string pe_mode_name(PEMode m) {
  switch (m) {
    case PEMode::none: return "none";
    case PEMode::raster1d: return "raster1d";
    case PEMode::st2d: return "st2d";
  }
  throw InternalError("unreachable pe mode");
}

PEMode parse_pe_mode(const std::string& s) {
  if (s == "none") return PEMode::none;
  if (s == "raster1d") return PEMode::raster1d;
  if (s == "st2d") return PEMode::st2d;
  throw ConfigError("unknown pe mode '" + s + "'");
}

std::string aggregator_name(Aggregator a) {
  return a == Aggregator::attention ? "attention" : "lstm";
}

Aggregator parse_aggregator(const std::string& s) {
  if (s == "attention") return Aggregator::attention;
  if (s == "lstm") return Aggregator::lstm;
  throw ConfigError("unknown aggregator '" + s + "'");
}

}  // namespace stn
