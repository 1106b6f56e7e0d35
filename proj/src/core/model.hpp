#pragma once

#include <string>
#include <vector>

#include "core/graphbuild.hpp"
#include "core/params.hpp"
#include "core/tensor.hpp"

namespace stn {

enum class Backbone { gcn, gat };
enum class PEMode { none, raster1d, st2d };
enum class Aggregator { attention, lstm };

struct PEConfig {
  double C1 = 10000.0;
  double C2 = 10000.0;
  int d_model = 32;
  int N = 0;  // nodes per snapshot
  int T = 0;  // snapshots
};

struct ModelConfig {
  Backbone backbone = Backbone::gcn;
  PEMode pe_mode = PEMode::st2d;
  Aggregator aggregator = Aggregator::attention;
  int d_model = 32;
  int feat_dim = 0;  // node feature width (n_roi for correlation features)
  int n_classes = 2;
  double dropout = 0.2;
};

// Rows ordered snapshot-major: row i*N + j is node j of snapshot i.
// st2d channels: 2f = sin(j/C1^E) * sin((C2+i)/C1^E),
//                2f+1 = cos(j/C1^E) * cos((C2+i)/C1^E), E = 2f/d.
Tensor positional_encoding(const PEConfig& pe);
// 1D raster baseline over flattened position p = i*N + j.
Tensor raster_pe(const PEConfig& pe);
Tensor pe_for_mode(PEMode mode, const PEConfig& pe);

ModelParams init_params(const ModelConfig& cfg, RngStream& rng);

// Post-softmax attention matrix of the last forward, (T*N) x (T*N).
struct AttentionCache {
  int rows = 0;
  std::vector<double> attn;
};

struct ForwardOptions {
  bool training = false;
  RngStream* rng = nullptr;           // needed when training with dropout > 0
  const Tensor* node_mask = nullptr;  // [T*N x 1] per-node feature multiplier
  AttentionCache* attention = nullptr;
};

// Symmetric normalized adjacency with unit self-loops, dense N x N.
Mat gcn_norm_adjacency(int n_nodes, const std::vector<Edge>& edges);

Tensor gcn_layer(Tape& tape, const Tensor& x, const Tensor& norm_adj, const Tensor& w,
                 const Tensor& b);

// Single-head graph attention; edge weights enter the logits as log-weights.
Tensor gat_layer(Tape& tape, const Tensor& x, const Tensor& logit_mask, const Tensor& w,
                 const Tensor& a_src, const Tensor& a_dst);

// Additive attention-logit mask: ln(w) on edges, 0 on the diagonal, -1e9
// elsewhere (softmax then zeroes non-neighbors).
Mat gat_logit_mask(int n_nodes, const std::vector<Edge>& edges);

// Global dot-product self-attention over all T*N rows with output projection.
Tensor st_self_attention(Tape& tape, const Tensor& h, const ModelParams& params,
                         AttentionCache* cache);

struct LstmState {
  Tensor h, c;
};
// Fused-gate cell: pre-activations laid out [i | f | g | o], each d wide.
LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& state, const Tensor& w_x,
                    const Tensor& w_h, const Tensor& b);

Tensor stnagnn_forward(Tape& tape, const GraphInstance& g, const ModelParams& params,
                       const ModelConfig& cfg, const ForwardOptions& opt);
Tensor gnn_lstm_forward(Tape& tape, const GraphInstance& g, const ModelParams& params,
                        const ModelConfig& cfg, const ForwardOptions& opt);
// Dispatch on cfg.aggregator; logits [1 x n_classes].
Tensor model_forward(Tape& tape, const GraphInstance& g, const ModelParams& params,
                     const ModelConfig& cfg, const ForwardOptions& opt);

std::string backbone_name(Backbone b);
Backbone parse_backbone(const std::string& s);
std::string pe_mode_name(PEMode m);
PEMode parse_pe_mode(const std::string& s);
std::string aggregator_name(Aggregator a);
Aggregator parse_aggregator(const std::string& s);

}  // namespace stn
