#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "core/errors.hpp"
#include "core/io.hpp"
#include "core/params.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "testutil.hpp"

using namespace stn;
using stn::test::fd_grad;
using stn::test::max_grad_err;
using stn::test::rel_err;

TEST_CASE("tensor construction and accessors") {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);

  Tensor v = Tensor::from_data({4}, {1, 2, 3, 4});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 4);

  Tensor z = Tensor::zeros({3, 3});
  for (double x : z.values()) CHECK(x == 0.0);

  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), InternalError);
}

TEST_CASE("matmul forward and gradient") {
  Tape tape;
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b = Tensor::from_data({3, 2}, {1, 0, 0, 1, 1, 1}, true);
  Tensor c = tape.matmul(a, b);
  CHECK(c.at(0, 0) == doctest::Approx(4.0));
  CHECK(c.at(0, 1) == doctest::Approx(5.0));
  CHECK(c.at(1, 0) == doctest::Approx(10.0));
  CHECK(c.at(1, 1) == doctest::Approx(11.0));

  Tensor loss = tape.sum(tape.mul(c, c));
  tape.backward(loss);

  auto fn = [&]() {
    Tape t2;
    Tensor c2 = t2.matmul(a, b);
    return t2.sum(t2.mul(c2, c2)).scalar();
  };
  CHECK(max_grad_err(a, fd_grad(a, fn)) < 1e-6);
  CHECK(max_grad_err(b, fd_grad(b, fn)) < 1e-6);
}

TEST_CASE("matmul shape mismatch throws") {
  Tape tape;
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  CHECK_THROWS_AS(tape.matmul(a, b), InternalError);
}

TEST_CASE("transpose forward and gradient") {
  Tape tape;
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor t = tape.transpose(a);
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 2);
  CHECK(t.at(2, 1) == 6.0);

  Tensor w = Tensor::from_data({3, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  Tensor loss = tape.sum(tape.mul(t, w));
  tape.backward(loss);
  auto fn = [&]() {
    Tape t2;
    return t2.sum(t2.mul(t2.transpose(a), w)).scalar();
  };
  CHECK(max_grad_err(a, fd_grad(a, fn)) < 1e-6);
}

TEST_CASE("elementwise add, mul, scale gradients") {
  Tensor a = Tensor::from_data({2, 2}, {0.5, -1.0, 2.0, 0.25}, true);
  Tensor b = Tensor::from_data({2, 2}, {1.5, 0.5, -0.5, 1.0}, true);

  auto fn = [&]() {
    Tape t2;
    Tensor s = t2.add(t2.mul(a, b), t2.scale(a, 3.0));
    return t2.sum(t2.mul(s, s)).scalar();
  };
  Tape tape;
  Tensor s = tape.add(tape.mul(a, b), tape.scale(a, 3.0));
  tape.backward(tape.sum(tape.mul(s, s)));
  CHECK(max_grad_err(a, fd_grad(a, fn)) < 1e-6);
  CHECK(max_grad_err(b, fd_grad(b, fn)) < 1e-6);
}

TEST_CASE("add_rowvec broadcasts and accumulates bias gradient") {
  Tensor x = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tensor bias = Tensor::from_data({2}, {10, 20}, true);
  Tape tape;
  Tensor y = tape.add_rowvec(x, bias);
  CHECK(y.at(0, 0) == 11.0);
  CHECK(y.at(2, 1) == 26.0);

  tape.backward(tape.sum(tape.mul(y, y)));
  auto fn = [&]() {
    Tape t2;
    Tensor y2 = t2.add_rowvec(x, bias);
    return t2.sum(t2.mul(y2, y2)).scalar();
  };
  CHECK(max_grad_err(x, fd_grad(x, fn)) < 1e-6);
  CHECK(max_grad_err(bias, fd_grad(bias, fn)) < 1e-6);
}

TEST_CASE("scale_rows multiplies each row by its scalar") {
  Tensor x = Tensor::from_data({3, 2}, {1, 1, 1, 1, 1, 1}, true);
  Tensor s = Tensor::from_data({3, 1}, {2, 3, 4}, true);
  Tape tape;
  Tensor y = tape.scale_rows(x, s);
  CHECK(y.at(0, 0) == 2.0);
  CHECK(y.at(1, 1) == 3.0);
  CHECK(y.at(2, 0) == 4.0);

  tape.backward(tape.sum(tape.mul(y, y)));
  auto fn = [&]() {
    Tape t2;
    Tensor y2 = t2.scale_rows(x, s);
    return t2.sum(t2.mul(y2, y2)).scalar();
  };
  CHECK(max_grad_err(x, fd_grad(x, fn)) < 1e-6);
  CHECK(max_grad_err(s, fd_grad(s, fn)) < 1e-6);
}

TEST_CASE("add_outer builds col + row sums") {
  Tensor col = Tensor::from_data({2, 1}, {1, 2}, true);
  Tensor row = Tensor::from_data({1, 3}, {10, 20, 30}, true);
  Tape tape;
  Tensor y = tape.add_outer(col, row);
  CHECK(y.rows() == 2);
  CHECK(y.cols() == 3);
  CHECK(y.at(0, 0) == 11.0);
  CHECK(y.at(1, 2) == 32.0);

  tape.backward(tape.sum(tape.mul(y, y)));
  auto fn = [&]() {
    Tape t2;
    Tensor y2 = t2.add_outer(col, row);
    return t2.sum(t2.mul(y2, y2)).scalar();
  };
  CHECK(max_grad_err(col, fd_grad(col, fn)) < 1e-6);
  CHECK(max_grad_err(row, fd_grad(row, fn)) < 1e-6);
}

TEST_CASE("activation forward values") {
  Tape tape;
  Tensor x = Tensor::from_data({1, 3}, {-1.0, 0.0, 2.0});
  Tensor sg = tape.sigmoid(x);
  CHECK(sg.at(0, 1) == doctest::Approx(0.5));
  CHECK(sg.at(0, 2) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));

  Tensor th = tape.tanh(x);
  CHECK(th.at(0, 0) == doctest::Approx(std::tanh(-1.0)));

  Tensor si = tape.silu(x);
  CHECK(si.at(0, 1) == doctest::Approx(0.0));
  CHECK(si.at(0, 2) == doctest::Approx(2.0 / (1.0 + std::exp(-2.0))));

  Tensor lr = tape.leaky_relu(x, 0.2);
  CHECK(lr.at(0, 0) == doctest::Approx(-0.2));
  CHECK(lr.at(0, 2) == doctest::Approx(2.0));
}

TEST_CASE("activation gradients match finite differences") {
  Tensor x = Tensor::from_data({2, 3}, {-1.2, 0.3, 2.1, 0.01, -0.7, 1.4}, true);
  auto check_unary = [&](auto make) {
    x.zero_grad();
    Tape tape;
    Tensor y = make(tape, x);
    tape.backward(tape.sum(tape.mul(y, y)));
    auto fn = [&]() {
      Tape t2;
      Tensor y2 = make(t2, x);
      return t2.sum(t2.mul(y2, y2)).scalar();
    };
    return max_grad_err(x, fd_grad(x, fn));
  };
  CHECK(check_unary([](Tape& t, const Tensor& v) { return t.sigmoid(v); }) < 1e-6);
  CHECK(check_unary([](Tape& t, const Tensor& v) { return t.tanh(v); }) < 1e-6);
  CHECK(check_unary([](Tape& t, const Tensor& v) { return t.silu(v); }) < 1e-6);
  CHECK(check_unary([](Tape& t, const Tensor& v) { return t.leaky_relu(v, 0.2); }) < 1e-6);
  CHECK(check_unary([](Tape& t, const Tensor& v) { return t.binary_entropy_logits(v); }) < 1e-6);
}

TEST_CASE("softmax rows sum to one and gradient is correct") {
  Tensor x = Tensor::from_data({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.0, 1.0}, true);
  Tape tape;
  Tensor y = tape.softmax_rows(x);
  for (int r = 0; r < 2; ++r) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += y.at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(y.at(0, 2) > y.at(0, 1));

  Tensor w = Tensor::from_data({2, 3}, {0.5, -1.0, 2.0, 1.0, 0.3, -0.7});
  tape.backward(tape.sum(tape.mul(y, w)));
  auto fn = [&]() {
    Tape t2;
    return t2.sum(t2.mul(t2.softmax_rows(x), w)).scalar();
  };
  CHECK(max_grad_err(x, fd_grad(x, fn)) < 1e-6);
}

TEST_CASE("softmax is shift invariant per row") {
  Tape tape;
  Tensor a = Tensor::from_data({1, 3}, {1.0, 2.0, 3.0});
  Tensor b = Tensor::from_data({1, 3}, {1001.0, 1002.0, 1003.0});
  Tensor ya = tape.softmax_rows(a);
  Tensor yb = tape.softmax_rows(b);
  for (int c = 0; c < 3; ++c) CHECK(ya.at(0, c) == doctest::Approx(yb.at(0, c)).epsilon(1e-12));
}

TEST_CASE("cross entropy forward matches manual computation") {
  Tape tape;
  Tensor logits = Tensor::from_data({2, 2}, {0.0, 0.0, 2.0, -1.0});
  Tensor loss = tape.cross_entropy(logits, {0, 1});
  double l0 = -std::log(0.5);
  double p1 = std::exp(-1.0) / (std::exp(2.0) + std::exp(-1.0));
  double expect = 0.5 * (l0 - std::log(p1));
  CHECK(loss.scalar() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient is softmax minus onehot over batch") {
  Tensor logits = Tensor::from_data({3, 4}, {0.1, -0.2, 0.3, 0.5, 1.0, 0.0, -1.0, 0.2,
                                             -0.4, 0.8, 0.1, -0.1},
                                    true);
  std::vector<int> labels = {2, 0, 3};
  Tape tape;
  tape.backward(tape.cross_entropy(logits, labels));
  auto fn = [&]() {
    Tape t2;
    return t2.cross_entropy(logits, labels).scalar();
  };
  CHECK(max_grad_err(logits, fd_grad(logits, fn)) < 1e-6);
}

TEST_CASE("cross entropy rejects bad labels") {
  Tape tape;
  Tensor logits = Tensor::from_data({2, 2}, {0, 0, 0, 0});
  CHECK_THROWS_AS(tape.cross_entropy(logits, {0, 2}), DataError);
  CHECK_THROWS_AS(tape.cross_entropy(logits, {-1, 0}), DataError);
  CHECK_THROWS_AS(tape.cross_entropy(logits, {0}), InternalError);
}

TEST_CASE("dropout semantics") {
  RngStream rng(123);
  Tensor x = Tensor::full({20, 20}, 1.0, true);

  Tape t1;
  Tensor y_eval = t1.dropout(x, 0.5, false, rng);
  for (double v : y_eval.values()) CHECK(v == 1.0);

  Tape t2;
  Tensor y_zero = t2.dropout(x, 0.0, true, rng);
  for (double v : y_zero.values()) CHECK(v == 1.0);

  Tape t3;
  Tensor y = t3.dropout(x, 0.25, true, rng);
  int zeros = 0;
  for (double v : y.values()) {
    bool ok = v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12;
    CHECK(ok);
    if (v == 0.0) ++zeros;
  }
  double frac = zeros / 400.0;
  CHECK(frac > 0.10);
  CHECK(frac < 0.45);

  Tape t4;
  CHECK_THROWS_AS(t4.dropout(x, 1.0, true, rng), ConfigError);
  CHECK_THROWS_AS(t4.dropout(x, -0.1, true, rng), ConfigError);
}

TEST_CASE("dropout gradient passes the same mask") {
  RngStream rng(7);
  Tensor x = Tensor::from_data({4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16},
                               true);
  Tape tape;
  Tensor y = tape.dropout(x, 0.5, true, rng);
  tape.backward(tape.sum(y));
  auto g = x.grad();
  auto yv = y.values();
  for (size_t i = 0; i < g.size(); ++i) {
    if (yv[i] == 0.0)
      CHECK(g[i] == 0.0);
    else
      CHECK(g[i] == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("sum, mean_rows, concat, slice, reshape") {
  Tape tape;
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  CHECK(tape.sum(x).scalar() == 21.0);

  Tensor m = tape.mean_rows(x);
  CHECK(m.rows() == 1);
  CHECK(m.at(0, 0) == doctest::Approx(2.5));
  CHECK(m.at(0, 2) == doctest::Approx(4.5));

  Tensor y = Tensor::from_data({1, 3}, {7, 8, 9});
  Tensor c = tape.concat_rows({x, y});
  CHECK(c.rows() == 3);
  CHECK(c.at(2, 0) == 7.0);

  Tensor s = tape.slice_rows(c, 1, 3);
  CHECK(s.rows() == 2);
  CHECK(s.at(0, 0) == 4.0);

  Tensor sc = tape.slice_cols(c, 1, 2);
  CHECK(sc.cols() == 1);
  CHECK(sc.at(1, 0) == 5.0);

  Tensor r = tape.reshape(x, {3, 2});
  CHECK(r.at(2, 1) == 6.0);
  CHECK_THROWS_AS(tape.reshape(x, {4, 2}), InternalError);
}

TEST_CASE("composite gradient through slicing and concat") {
  Tensor x = Tensor::from_data({3, 2}, {0.3, -0.5, 1.2, 0.8, -0.1, 0.6}, true);
  auto fn = [&]() {
    Tape t2;
    Tensor top = t2.slice_rows(x, 0, 2);
    Tensor bot = t2.slice_rows(x, 1, 3);
    Tensor c = t2.concat_rows({top, bot});
    Tensor h = t2.tanh(t2.mean_rows(c));
    return t2.sum(t2.mul(h, h)).scalar();
  };
  Tape tape;
  Tensor top = tape.slice_rows(x, 0, 2);
  Tensor bot = tape.slice_rows(x, 1, 3);
  Tensor c = tape.concat_rows({top, bot});
  Tensor h = tape.tanh(tape.mean_rows(c));
  tape.backward(tape.sum(tape.mul(h, h)));
  CHECK(max_grad_err(x, fd_grad(x, fn)) < 1e-6);
}

TEST_CASE("backward twice doubles accumulated gradients") {
  Tensor x = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
  Tape tape;
  Tensor loss = tape.sum(tape.mul(x, x));
  tape.backward(loss);
  std::vector<double> once(x.grad().begin(), x.grad().end());
  tape.backward(loss);
  auto twice = x.grad();
  for (size_t i = 0; i < once.size(); ++i)
    CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar from this tape") {
  Tape tape;
  Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor y = tape.mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), InternalError);
  Tensor detached = Tensor::from_data({1, 1}, {3.0});
  CHECK_THROWS_AS(tape.backward(detached), InternalError);
}

TEST_CASE("non-finite forward values abort the step") {
  Tape tape;
  Tensor x = Tensor::from_data({1, 2}, {1e308, 1e308});
  CHECK_THROWS_AS(tape.add(x, x), NumericError);
}

TEST_CASE("rng determinism and stream derivation") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(42);
  RngStream d1 = c.derive(7);
  RngStream c2(42);
  RngStream d2 = c2.derive(7);
  CHECK(d1.next_u64() == d2.next_u64());

  RngStream e(42);
  RngStream f1 = e.derive(1);
  RngStream f2 = e.derive(2);
  CHECK(f1.next_u64() != f2.next_u64());

  RngStream g(9);
  for (int i = 0; i < 1000; ++i) {
    double u = g.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    std::uint64_t k = g.next_below(13);
    CHECK(k < 13);
  }

  RngStream h(11);
  double mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += h.next_gaussian();
  mean /= n;
  CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("glorot init bounds and determinism") {
  RngStream r1(5), r2(5);
  Tensor w1 = glorot_init(64, 32, r1);
  Tensor w2 = glorot_init(64, 32, r2);
  double lim = std::sqrt(6.0 / (64 + 32));
  for (std::int64_t i = 0; i < w1.size(); ++i) {
    CHECK(w1.data()[i] == w2.data()[i]);
    CHECK(std::abs(w1.data()[i]) <= lim);
  }
  CHECK(w1.requires_grad());
  CHECK(w1.rows() == 64);
  CHECK(w1.cols() == 32);
}

TEST_CASE("adamw lr zero leaves parameters unchanged") {
  ModelParams params;
  params.add("w", Tensor::from_data({2, 2}, {1, 2, 3, 4}, true));
  auto& w = params.at("w");
  auto g = w.grad_mut();
  for (auto& v : g) v = 1.0;

  AdamW::Config cfg;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg);
  opt.step(params);
  CHECK(w.at(0, 0) == 1.0);
  CHECK(w.at(1, 1) == 4.0);
}

TEST_CASE("adamw first step moves by about lr against gradient sign") {
  ModelParams params;
  params.add("w", Tensor::from_data({1, 2}, {0.0, 0.0}, true));
  auto& w = params.at("w");
  auto g = w.grad_mut();
  g[0] = 3.0;
  g[1] = -0.5;

  AdamW::Config cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  opt.step(params);
  CHECK(w.data()[0] == doctest::Approx(-0.1).epsilon(1e-4));
  CHECK(w.data()[1] == doctest::Approx(0.1).epsilon(1e-4));
}

TEST_CASE("adamw decoupled weight decay applies before the update") {
  ModelParams params;
  params.add("w", Tensor::from_data({1, 1}, {2.0}, true));
  auto& w = params.at("w");
  w.grad_mut()[0] = 0.0;

  AdamW::Config cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW opt(cfg);
  opt.step(params);
  CHECK(w.data()[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip preserves exact doubles") {
  RngStream rng(99);
  ModelParams params;
  params.add("layer.W", glorot_init(7, 5, rng));
  params.add("layer.b", Tensor::zeros({5}, true));
  params.at("layer.b").values_mut()[2] = 1.0 / 3.0;

  std::string dir = stn::test::tmp_dir("ckpt");
  ensure_dir(dir);
  std::string path = dir + "/params.json";
  save_checkpoint(path, params);

  ModelParams loaded = load_checkpoint(path);
  CHECK(loaded.values.size() == 2);
  CHECK(loaded.value_checksum() == params.value_checksum());
  auto& wa = params.at("layer.W");
  auto& wb = loaded.at("layer.W");
  for (std::int64_t i = 0; i < wa.size(); ++i) CHECK(wa.data()[i] == wb.data()[i]);
}

TEST_CASE("params clone detaches storage") {
  ModelParams params;
  params.add("w", Tensor::from_data({1, 2}, {1.0, 2.0}, true));
  ModelParams copy = params.clone(false);
  copy.at("w").values_mut()[0] = 99.0;
  CHECK(params.at("w").data()[0] == 1.0);
  CHECK_FALSE(copy.at("w").requires_grad());
  CHECK(params.param_count() == 2);
}
