#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "core/errors.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"
#include "testutil.hpp"

using namespace stn;
using stn::test::fd_grad;
using stn::test::rel_err;

static GraphInstance toy_graph(int T, int N, int feat_dim, std::uint64_t seed,
                               bool with_edges = true) {
  RngStream rng(seed);
  GraphInstance g;
  g.instance_id = "toy";
  g.n_nodes = N;
  if (with_edges)
    for (int u = 0; u < N; ++u)
      for (int v = u + 1; v < N; ++v)
        if (rng.next_double() < 0.5) g.edges.push_back({u, v, 0.1 + rng.next_double()});
  for (int t = 0; t < T; ++t) {
    Mat f(N, feat_dim);
    for (auto& x : f.a) x = rng.next_gaussian();
    g.node_features.push_back(std::move(f));
  }
  return g;
}

TEST_CASE("2d positional encoding matches high-precision reference values") {
  PEConfig pe;
  pe.d_model = 8;
  pe.N = 7;
  pe.T = 12;
  Tensor enc = positional_encoding(pe);
  REQUIRE(enc.rows() == 84);
  REQUIRE(enc.cols() == 8);

  auto at = [&](int j, int i, int k) { return enc.at(i * pe.N + j, k); };
  CHECK(std::abs(at(0, 0, 0) - 0.0) < 1e-12);
  CHECK(std::abs(at(0, 0, 1) - -0.95215536825901485124) < 1e-12);
  CHECK(std::abs(at(3, 2, 0) - -0.10423292647607688164) < 1e-12);
  CHECK(std::abs(at(3, 2, 1) - -0.66738445532825756443) < 1e-12);
  CHECK(std::abs(at(3, 2, 2) - 0.2725064158083710373) < 1e-12);
  CHECK(std::abs(at(3, 2, 3) - 0.36961331725275630142) < 1e-12);
  CHECK(std::abs(at(5, 11, 6) - -0.0027660774677984423814) < 1e-12);
  CHECK(std::abs(at(5, 11, 7) - -0.83302624128582896253) < 1e-12);
  CHECK(std::abs(at(1, 1, 4) - -0.0049770898278841399015) < 1e-12);

  for (double v : enc.values()) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }

  // node index 0 zeroes every even channel through the sine factor
  for (int i = 0; i < pe.T; ++i)
    for (int k = 0; k < pe.d_model; k += 2) CHECK(at(0, i, k) == 0.0);
}

TEST_CASE("2d positional encoding rows are pairwise distinct at full size") {
  PEConfig pe;
  pe.d_model = 32;
  pe.N = 84;
  pe.T = 12;
  Tensor enc = positional_encoding(pe);
  REQUIRE(enc.rows() == 1008);
  std::set<std::vector<double>> rows;
  for (int r = 0; r < enc.rows(); ++r) {
    std::vector<double> row(enc.data() + r * pe.d_model, enc.data() + (r + 1) * pe.d_model);
    rows.insert(std::move(row));
  }
  CHECK(rows.size() == 1008);
}

TEST_CASE("raster encoding matches reference values and the rotation identity") {
  PEConfig pe;
  pe.d_model = 8;
  pe.N = 7;
  pe.T = 5;
  Tensor enc = raster_pe(pe);
  REQUIRE(enc.rows() == 35);
  CHECK(std::abs(enc.at(0, 0) - 0.0) < 1e-15);
  CHECK(std::abs(enc.at(0, 1) - 1.0) < 1e-15);
  CHECK(std::abs(enc.at(7, 0) - 0.6569865987187890904) < 1e-12);
  CHECK(std::abs(enc.at(7, 1) - 0.75390225434330463814) < 1e-12);
  CHECK(std::abs(enc.at(13, 4) - 0.12963414261969485954) < 1e-12);
  CHECK(std::abs(enc.at(13, 5) - 0.99156189371478803959) < 1e-12);
  CHECK(std::abs(enc.at(25, 2) - 0.59847214410395649405) < 1e-12);

  // each channel pair rotates by a fixed angle under a position shift
  const int k = 5;
  for (int f = 0; f < 4; ++f) {
    double omega = std::pow(10000.0, -2.0 * f / 8.0);
    double c = std::cos(k * omega), s = std::sin(k * omega);
    for (int p = 0; p + k < 35; ++p) {
      double sp = enc.at(p, 2 * f), cp = enc.at(p, 2 * f + 1);
      CHECK(std::abs(enc.at(p + k, 2 * f) - (sp * c + cp * s)) < 1e-12);
      CHECK(std::abs(enc.at(p + k, 2 * f + 1) - (cp * c - sp * s)) < 1e-12);
    }
  }
}

TEST_CASE("product-form node shifts have no position-independent linear closure") {
  // For the raster encoding a unit shift acts as one fixed rotation on every
  // position. Here the product form factorizes, so the map from row j to
  // row j+1 scales each channel by sin((j+1)w)/sin(jw) etc., which depends
  // on j. Fit the shift map at j=1 and show it breaks at j=3.
  PEConfig pe;
  pe.d_model = 8;
  pe.N = 10;
  pe.T = 4;
  Tensor enc = positional_encoding(pe);
  auto v = [&](int j, int i, int k) { return enc.at(i * pe.N + j, k); };
  int k0 = 2, k1 = 3;
  double a00, a01, a10, a11;
  {
    double x0 = v(1, 0, k0), y0 = v(1, 0, k1), u0 = v(2, 0, k0), w0 = v(2, 0, k1);
    double x1 = v(1, 1, k0), y1 = v(1, 1, k1), u1 = v(2, 1, k0), w1 = v(2, 1, k1);
    double det = x0 * y1 - x1 * y0;
    REQUIRE(std::abs(det) > 1e-9);
    a00 = (u0 * y1 - u1 * y0) / det;
    a01 = (x0 * u1 - x1 * u0) / det;
    a10 = (w0 * y1 - w1 * y0) / det;
    a11 = (x0 * w1 - x1 * w0) / det;
  }
  // the fitted map reproduces j=1 -> j=2 at an unseen i exactly
  double fit0 = a00 * v(1, 2, k0) + a01 * v(1, 2, k1);
  double fit1 = a10 * v(1, 2, k0) + a11 * v(1, 2, k1);
  CHECK(std::abs(fit0 - v(2, 2, k0)) < 1e-12);
  CHECK(std::abs(fit1 - v(2, 2, k1)) < 1e-12);
  // but applied at j=3 it misses j=4 by a wide margin
  double pred0 = a00 * v(3, 0, k0) + a01 * v(3, 0, k1);
  double pred1 = a10 * v(3, 0, k0) + a11 * v(3, 0, k1);
  double err = std::abs(pred0 - v(4, 0, k0)) + std::abs(pred1 - v(4, 0, k1));
  CHECK(err > 1e-3);
}

TEST_CASE("pe_for_mode dispatch") {
  PEConfig pe;
  pe.d_model = 4;
  pe.N = 3;
  pe.T = 2;
  CHECK_FALSE(pe_for_mode(PEMode::none, pe).defined());
  CHECK(pe_for_mode(PEMode::st2d, pe).rows() == 6);
  CHECK(pe_for_mode(PEMode::raster1d, pe).rows() == 6);
}

TEST_CASE("gcn normalized adjacency on no edges is the identity") {
  Mat a = gcn_norm_adjacency(4, {});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(a(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("gcn normalized adjacency on one weighted edge") {
  double w = 0.6;
  Mat a = gcn_norm_adjacency(2, {{0, 1, w}});
  CHECK(a(0, 0) == doctest::Approx(1.0 / (1.0 + w)).epsilon(1e-12));
  CHECK(a(0, 1) == doctest::Approx(w / (1.0 + w)).epsilon(1e-12));
  CHECK(a(1, 0) == doctest::Approx(a(0, 1)).epsilon(1e-12));
}

TEST_CASE("gcn layer matches a manual dense computation") {
  Mat adj = gcn_norm_adjacency(3, {{0, 1, 1.0}});
  Tensor adj_t = Tensor::from_data({3, 3}, adj.a);
  Tensor x = Tensor::from_data({3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor w = Tensor::from_data({2, 2}, {2, 0, 0, 3});
  Tensor b = Tensor::from_data({2}, {0.5, -0.5});
  Tape tape;
  Tensor y = gcn_layer(tape, x, adj_t, w, b);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k) {
      double acc = 0.0;
      for (int j = 0; j < 3; ++j) acc += adj(i, j) * x.at(j, 0) * w.at(0, k) +
                                         adj(i, j) * x.at(j, 1) * w.at(1, k);
      acc += b.at(0, k);
      CHECK(y.at(i, k) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("gcn layer is equivariant under node relabeling") {
  const int n = 5, f = 3;
  RngStream rng(10);
  std::vector<Edge> edges = {{0, 1, 0.5}, {1, 2, 1.2}, {0, 3, 0.8}, {3, 4, 0.3}};
  Mat x(n, f);
  for (auto& v : x.a) v = rng.next_gaussian();
  Tensor w = glorot_init(f, f, rng);
  Tensor b = Tensor::zeros({f});

  std::vector<int> perm = {2, 0, 4, 1, 3};
  std::vector<Edge> pedges;
  for (auto& e : edges) {
    int u = perm[e.u], v = perm[e.v];
    pedges.push_back({std::min(u, v), std::max(u, v), e.weight});
  }
  Mat px(n, f);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < f; ++c) px(perm[i], c) = x(i, c);

  Tape tape;
  Tensor base = gcn_layer(tape, Tensor::from_data({n, f}, x.a),
                          Tensor::from_data({n, n}, gcn_norm_adjacency(n, edges).a), w, b);
  Tensor permuted = gcn_layer(tape, Tensor::from_data({n, f}, px.a),
                              Tensor::from_data({n, n}, gcn_norm_adjacency(n, pedges).a), w, b);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < f; ++c)
      CHECK(permuted.at(perm[i], c) == doctest::Approx(base.at(i, c)).epsilon(1e-9));
}

TEST_CASE("gat layer with no edges reduces to the feature projection") {
  const int n = 4, fin = 3, fout = 2;
  RngStream rng(21);
  Tensor x = Tensor::from_data({n, fin}, {0.2, -1.0, 0.7, 1.1, 0.3, -0.4, -0.9, 0.5, 0.8, 0.1, -0.2, 1.3});
  Tensor w = glorot_init(fin, fout, rng);
  Tensor a_src = Tensor::zeros({fout, 1});
  Tensor a_dst = Tensor::zeros({fout, 1});
  a_src.values_mut()[0] = 0.3;
  a_dst.values_mut()[1] = -0.7;

  Tape tape;
  Tensor mask = Tensor::from_data({n, n}, gat_logit_mask(n, {}).a);
  Tensor y = gat_layer(tape, x, mask, w, a_src, a_dst);
  Tensor h = tape.matmul(x, w);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < fout; ++c) CHECK(y.at(i, c) == doctest::Approx(h.at(i, c)).epsilon(1e-9));
}

TEST_CASE("gat layer with zero attention vectors and uniform clique averages") {
  const int n = 3, f = 2;
  std::vector<Edge> clique = {{0, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}};
  Tensor x = Tensor::from_data({n, f}, {1, 0, 0, 1, 1, 1});
  Tensor w = Tensor::from_data({f, f}, {1, 0, 0, 1});
  Tensor a_src = Tensor::zeros({f, 1});
  Tensor a_dst = Tensor::zeros({f, 1});
  Tape tape;
  Tensor mask = Tensor::from_data({n, n}, gat_logit_mask(n, clique).a);
  Tensor y = gat_layer(tape, x, mask, w, a_src, a_dst);
  // uniform logits over {self, neighbors} = all three nodes
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < f; ++c) CHECK(y.at(i, c) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("gat gradients match finite differences") {
  const int n = 4, fin = 3, fout = 3;
  RngStream rng(33);
  Tensor x = Tensor::from_data({n, fin},
                               {0.2, -1.0, 0.7, 1.1, 0.3, -0.4, -0.9, 0.5, 0.8, 0.1, -0.2, 1.3},
                               true);
  Tensor w = glorot_init(fin, fout, rng);
  Tensor a_src = glorot_init(fout, 1, rng);
  Tensor a_dst = glorot_init(fout, 1, rng);
  std::vector<Edge> edges = {{0, 1, 0.4}, {1, 2, 1.5}, {2, 3, 0.9}};
  Tensor mask = Tensor::from_data({n, n}, gat_logit_mask(n, edges).a);

  auto loss = [&]() {
    Tape t;
    Tensor y = gat_layer(t, x, mask, w, a_src, a_dst);
    return t.sum(t.mul(y, y)).scalar();
  };
  Tape tape;
  Tensor y = gat_layer(tape, x, mask, w, a_src, a_dst);
  tape.backward(tape.sum(tape.mul(y, y)));
  CHECK(stn::test::max_grad_err(x, fd_grad(x, loss)) < 1e-5);
  CHECK(stn::test::max_grad_err(w, fd_grad(w, loss)) < 1e-5);
  CHECK(stn::test::max_grad_err(a_src, fd_grad(a_src, loss)) < 1e-5);
  CHECK(stn::test::max_grad_err(a_dst, fd_grad(a_dst, loss)) < 1e-5);
}

TEST_CASE("self attention with zero query and key is uniform averaging") {
  const int rows = 6, d = 4;
  RngStream rng(77);
  ModelParams params;
  params.add("attn.Wq", Tensor::zeros({d, d}, true));
  params.add("attn.Wk", Tensor::zeros({d, d}, true));
  Tensor eye = Tensor::zeros({d, d}, true);
  for (int i = 0; i < d; ++i) eye.values_mut()[i * d + i] = 1.0;
  params.add("attn.Wv", eye.detached_copy(true));
  params.add("attn.Wo", eye.detached_copy(true));

  Tensor h = Tensor::zeros({rows, d});
  for (auto& v : h.values_mut()) v = rng.next_gaussian();

  AttentionCache cache;
  Tape tape;
  Tensor out = st_self_attention(tape, h, params, &cache);

  std::vector<double> colmean(d, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < d; ++c) colmean[c] += h.at(r, c) / rows;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < d; ++c) CHECK(out.at(r, c) == doctest::Approx(colmean[c]).epsilon(1e-9));

  REQUIRE(cache.rows == rows);
  REQUIRE(cache.attn.size() == static_cast<size_t>(rows * rows));
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < rows; ++c) {
      CHECK(cache.attn[r * rows + c] == doctest::Approx(1.0 / rows).epsilon(1e-9));
      s += cache.attn[r * rows + c];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("attention rows always sum to one") {
  const int rows = 5, d = 3;
  RngStream rng(101);
  ModelParams params;
  params.add("attn.Wq", glorot_init(d, d, rng));
  params.add("attn.Wk", glorot_init(d, d, rng));
  params.add("attn.Wv", glorot_init(d, d, rng));
  params.add("attn.Wo", glorot_init(d, d, rng));
  Tensor h = Tensor::zeros({rows, d});
  for (auto& v : h.values_mut()) v = rng.next_gaussian();

  AttentionCache cache;
  Tape tape;
  st_self_attention(tape, h, params, &cache);
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < rows; ++c) s += cache.attn[r * rows + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("lstm cell with zero parameters follows the closed form") {
  const int d = 3;
  Tensor wx = Tensor::zeros({d, 4 * d});
  Tensor wh = Tensor::zeros({d, 4 * d});
  Tensor b = Tensor::zeros({4 * d});
  Tensor x = Tensor::from_data({1, d}, {1.0, -2.0, 0.5});
  LstmState st;
  st.h = Tensor::from_data({1, d}, {0.3, -0.1, 0.9});
  st.c = Tensor::from_data({1, d}, {1.0, 0.0, -2.0});

  Tape tape;
  LstmState nx = lstm_cell(tape, x, st, wx, wh, b);
  for (int i = 0; i < d; ++i) {
    double c_new = 0.5 * st.c.at(0, i);
    CHECK(nx.c.at(0, i) == doctest::Approx(c_new).epsilon(1e-12));
    CHECK(nx.h.at(0, i) == doctest::Approx(0.5 * std::tanh(c_new)).epsilon(1e-12));
  }
}

TEST_CASE("lstm cell gradients match finite differences") {
  const int d = 2;
  RngStream rng(55);
  Tensor wx = glorot_init(d, 4 * d, rng);
  Tensor wh = glorot_init(d, 4 * d, rng);
  Tensor b = Tensor::zeros({4 * d}, true);
  Tensor x = Tensor::from_data({1, d}, {0.7, -0.3}, true);

  auto loss = [&]() {
    Tape t;
    LstmState st;
    st.h = Tensor::zeros({1, d});
    st.c = Tensor::zeros({1, d});
    LstmState a = lstm_cell(t, x, st, wx, wh, b);
    LstmState bst = lstm_cell(t, x, a, wx, wh, b);
    return t.sum(t.mul(bst.h, bst.h)).scalar();
  };
  Tape tape;
  LstmState st0;
  st0.h = Tensor::zeros({1, d});
  st0.c = Tensor::zeros({1, d});
  LstmState a = lstm_cell(tape, x, st0, wx, wh, b);
  LstmState bst = lstm_cell(tape, x, a, wx, wh, b);
  tape.backward(tape.sum(tape.mul(bst.h, bst.h)));
  CHECK(stn::test::max_grad_err(x, fd_grad(x, loss)) < 1e-5);
  CHECK(stn::test::max_grad_err(wx, fd_grad(wx, loss)) < 1e-5);
  CHECK(stn::test::max_grad_err(wh, fd_grad(wh, loss)) < 1e-5);
  CHECK(stn::test::max_grad_err(b, fd_grad(b, loss)) < 1e-5);
}

TEST_CASE("init_params creates the right parameter sets") {
  RngStream rng(1);
  ModelConfig cfg;
  cfg.feat_dim = 6;
  cfg.d_model = 8;
  ModelParams p = init_params(cfg, rng);
  CHECK(p.has("input.W"));
  CHECK(p.has("conv1.W"));
  CHECK(p.has("conv1.b"));
  CHECK(p.has("attn.Wq"));
  CHECK(p.has("ff.W1"));
  CHECK(p.has("head.W"));
  CHECK_FALSE(p.has("lstm.Wx"));
  CHECK(p.at("input.W").rows() == 6);
  CHECK(p.at("input.W").cols() == 8);
  CHECK(p.at("head.W").cols() == 2);

  ModelConfig gat_lstm = cfg;
  gat_lstm.backbone = Backbone::gat;
  gat_lstm.aggregator = Aggregator::lstm;
  RngStream rng2(1);
  ModelParams q = init_params(gat_lstm, rng2);
  CHECK(q.has("conv1.a_src"));
  CHECK(q.has("lstm.Wx"));
  CHECK_FALSE(q.has("conv1.b"));
  CHECK_FALSE(q.has("attn.Wq"));
  CHECK(q.at("lstm.Wx").cols() == 32);
}

TEST_CASE("forward produces logits and a zeroed head gives zero logits") {
  GraphInstance g = toy_graph(3, 5, 4, 9);
  ModelConfig cfg;
  cfg.feat_dim = 4;
  cfg.d_model = 8;
  cfg.n_classes = 2;
  RngStream rng(2);
  ModelParams params = init_params(cfg, rng);
  Tape tape;
  ForwardOptions opt;
  Tensor logits = model_forward(tape, g, params, cfg, opt);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == 2);

  for (auto& v : params.at("head.W").values_mut()) v = 0.0;
  for (auto& v : params.at("head.b").values_mut()) v = 0.0;
  Tape t2;
  Tensor z = model_forward(t2, g, params, cfg, opt);
  CHECK(z.at(0, 0) == 0.0);
  CHECK(z.at(0, 1) == 0.0);
}

TEST_CASE("forward in eval mode is deterministic; dropout branches during training") {
  GraphInstance g = toy_graph(3, 5, 4, 19);
  ModelConfig cfg;
  cfg.feat_dim = 4;
  cfg.d_model = 8;
  cfg.dropout = 0.5;
  RngStream rng(3);
  ModelParams params = init_params(cfg, rng);

  ForwardOptions eval_opt;
  Tape t1, t2;
  Tensor a = model_forward(t1, g, params, cfg, eval_opt);
  Tensor b = model_forward(t2, g, params, cfg, eval_opt);
  CHECK(a.at(0, 0) == b.at(0, 0));
  CHECK(a.at(0, 1) == b.at(0, 1));

  RngStream drop(11);
  ForwardOptions train_opt;
  train_opt.training = true;
  train_opt.rng = &drop;
  Tape t3, t4;
  Tensor c = model_forward(t3, g, params, cfg, train_opt);
  Tensor d = model_forward(t4, g, params, cfg, train_opt);
  CHECK(c.at(0, 0) != d.at(0, 0));
}

TEST_CASE("node mask scales features before the input projection") {
  GraphInstance g = toy_graph(2, 4, 3, 29);
  ModelConfig cfg;
  cfg.feat_dim = 3;
  cfg.d_model = 8;
  RngStream rng(4);
  ModelParams params = init_params(cfg, rng);

  // a mask of ones changes nothing
  Tensor ones = Tensor::full({8, 1}, 1.0);
  ForwardOptions base_opt, mask_opt;
  mask_opt.node_mask = &ones;
  Tape t1, t2;
  Tensor a = model_forward(t1, g, params, cfg, base_opt);
  Tensor b = model_forward(t2, g, params, cfg, mask_opt);
  CHECK(a.at(0, 0) == doctest::Approx(b.at(0, 0)).epsilon(1e-12));

  // zero mask equals zeroed input features
  Tensor zeros = Tensor::zeros({8, 1});
  ForwardOptions zero_opt;
  zero_opt.node_mask = &zeros;
  Tape t3, t4;
  Tensor z = model_forward(t3, g, params, cfg, zero_opt);
  GraphInstance gz = g;
  for (auto& f : gz.node_features)
    for (auto& v : f.a) v = 0.0;
  Tensor z2 = model_forward(t4, gz, params, cfg, base_opt);
  CHECK(z.at(0, 0) == doctest::Approx(z2.at(0, 0)).epsilon(1e-9));
  CHECK(z.at(0, 1) == doctest::Approx(z2.at(0, 1)).epsilon(1e-9));
}

TEST_CASE("gnn lstm forward runs and differs from attention aggregation") {
  GraphInstance g = toy_graph(4, 5, 4, 39);
  ModelConfig cfg;
  cfg.feat_dim = 4;
  cfg.d_model = 8;
  cfg.aggregator = Aggregator::lstm;
  RngStream rng(5);
  ModelParams params = init_params(cfg, rng);
  Tape tape;
  ForwardOptions opt;
  Tensor logits = gnn_lstm_forward(tape, g, params, cfg, opt);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == 2);
  CHECK(std::isfinite(logits.at(0, 0)));
}

static double full_model_fd_worst(Backbone bb, Aggregator agg, PEMode pe) {
  GraphInstance g = toy_graph(2, 6, 5, 123);
  ModelConfig cfg;
  cfg.backbone = bb;
  cfg.aggregator = agg;
  cfg.pe_mode = pe;
  cfg.feat_dim = 5;
  cfg.d_model = 8;
  cfg.n_classes = 2;
  cfg.dropout = 0.0;
  RngStream rng(6);
  ModelParams params = init_params(cfg, rng);
  std::vector<int> label = {1};

  auto loss = [&]() {
    Tape t;
    ForwardOptions opt;
    Tensor logits = model_forward(t, g, params, cfg, opt);
    return t.cross_entropy(logits, label).scalar();
  };
  auto grads = [&]() {
    params.zero_grad();
    Tape t;
    ForwardOptions opt;
    Tensor logits = model_forward(t, g, params, cfg, opt);
    t.backward(t.cross_entropy(logits, label));
  };
  return stn::test::max_param_grad_err(params, loss, grads);
}

TEST_CASE("full model gradients match finite differences") {
  CHECK(full_model_fd_worst(Backbone::gcn, Aggregator::attention, PEMode::st2d) < 1e-4);
  CHECK(full_model_fd_worst(Backbone::gat, Aggregator::attention, PEMode::none) < 1e-4);
  CHECK(full_model_fd_worst(Backbone::gcn, Aggregator::lstm, PEMode::none) < 1e-4);
}

TEST_CASE("without positional encoding the logits ignore snapshot order") {
  GraphInstance g = toy_graph(4, 5, 4, 59);
  ModelConfig cfg;
  cfg.feat_dim = 4;
  cfg.d_model = 8;
  cfg.pe_mode = PEMode::none;
  RngStream rng(7);
  ModelParams params = init_params(cfg, rng);

  GraphInstance rev = g;
  std::reverse(rev.node_features.begin(), rev.node_features.end());

  ForwardOptions opt;
  Tape t1, t2;
  Tensor a = model_forward(t1, g, params, cfg, opt);
  Tensor b = model_forward(t2, rev, params, cfg, opt);
  CHECK(std::abs(a.at(0, 0) - b.at(0, 0)) < 1e-9);
  CHECK(std::abs(a.at(0, 1) - b.at(0, 1)) < 1e-9);
}

TEST_CASE("st2d encoding makes snapshot order matter") {
  ModelConfig cfg;
  cfg.feat_dim = 4;
  cfg.d_model = 8;
  cfg.pe_mode = PEMode::st2d;
  int changed = 0;
  for (int trial = 0; trial < 10; ++trial) {
    GraphInstance g = toy_graph(4, 5, 4, 600 + trial);
    RngStream rng(700 + trial);
    ModelParams params = init_params(cfg, rng);
    GraphInstance rev = g;
    std::reverse(rev.node_features.begin(), rev.node_features.end());
    ForwardOptions opt;
    Tape t1, t2;
    Tensor a = model_forward(t1, g, params, cfg, opt);
    Tensor b = model_forward(t2, rev, params, cfg, opt);
    if (std::abs(a.at(0, 0) - b.at(0, 0)) + std::abs(a.at(0, 1) - b.at(0, 1)) > 1e-6) ++changed;
  }
  CHECK(changed >= 9);
}

TEST_CASE("enum names round trip") {
  CHECK(parse_backbone(backbone_name(Backbone::gat)) == Backbone::gat);
  CHECK(parse_pe_mode(pe_mode_name(PEMode::raster1d)) == PEMode::raster1d);
  CHECK(parse_aggregator(aggregator_name(Aggregator::lstm)) == Aggregator::lstm);
  CHECK_THROWS_AS(parse_backbone("mlp"), ConfigError);
  CHECK_THROWS_AS(parse_pe_mode("learned"), ConfigError);
  CHECK_THROWS_AS(parse_aggregator("pool"), ConfigError);
}
