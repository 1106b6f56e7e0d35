#include "core/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "core/rng.hpp"

namespace stn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out << 'x';
    out << s[i];
  }
  out << ')';
  return out.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

static TensorNodePtr make_node(Shape shape, std::vector<double> data, bool requires_grad) {
  for (int d : shape)
    if (d <= 0) throw InternalError("tensor dims must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw InternalError("tensor data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)), 0.0);
  Tensor t;
  t.node = make_node(std::move(shape), std::move(data), requires_grad);
  return t;
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)), v);
  Tensor t;
  t.node = make_node(std::move(shape), std::move(data), requires_grad);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  Tensor t;
  t.node = make_node(std::move(shape), std::move(data), requires_grad);
  return t;
}

int Tensor::rows() const {
  const Shape& s = node->shape;
  if (s.size() == 1) return 1;
  if (s.size() == 2) return s[0];
  throw InternalError("rank-" + std::to_string(s.size()) + " tensor has no 2-D view");
}

int Tensor::cols() const {
  const Shape& s = node->shape;
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[1];
  throw InternalError("rank-" + std::to_string(s.size()) + " tensor has no 2-D view");
}

std::span<const double> Tensor::grad() const {
  if (node->grad.empty()) throw InternalError("grad not populated");
  return node->grad;
}

std::span<double> Tensor::grad_mut() {
  if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
  return node->grad;
}

void Tensor::zero_grad() {
  std::fill(node->grad.begin(), node->grad.end(), 0.0);
}

double Tensor::scalar() const {
  if (size() != 1) throw InternalError("scalar() on tensor of shape " + shape_str(shape()));
  return node->value[0];
}

Tensor Tensor::detached_copy(bool requires_grad) const {
  return Tensor::from_data(node->shape, node->value, requires_grad);
}

// ---------------------------------------------------------------------------

class Tape::Backprop {
 public:
  // Adjoint buffer for n, or nullptr if n needs no gradient signal.
  double* grad_for(const TensorNodePtr& n) {
    if (!n->requires_grad && !n->tape_output) return nullptr;
    return force(n);
  }

  double* force(const TensorNodePtr& n) {
    auto& e = buf_[n.get()];
    if (!e.node) {
      e.node = n;
      e.adj.assign(n->value.size(), 0.0);
    }
    return e.adj.data();
  }

  const std::vector<double>* find(const TensorNode* n) const {
    auto it = buf_.find(n);
    return it == buf_.end() ? nullptr : &it->second.adj;
  }

  // Accumulate computed adjoints into persistent grads.
  void flush() {
    for (auto& [ptr, e] : buf_) {
      if (!e.node->requires_grad) continue;
      auto& g = e.node->grad;
      if (g.empty()) g.assign(e.node->value.size(), 0.0);
      for (size_t i = 0; i < g.size(); ++i) g[i] += e.adj[i];
    }
  }

 private:
  struct Entry {
    TensorNodePtr node;
    std::vector<double> adj;
  };
  std::unordered_map<const TensorNode*, Entry> buf_;
};

Tensor Tape::record(const char* op, Tensor out,
                    std::function<void(const double*, Backprop&)> back) {
  CMap v(out.data(), 1, static_cast<Eigen::Index>(out.size()));
  if (!v.allFinite())
    throw NumericError(std::string(op) + " produced a non-finite value");
  out.node->tape_output = true;
  steps_.push_back(Step{op, out.node, std::move(back)});
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw InternalError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  bool mine = false;
  for (const auto& st : steps_)
    if (st.out == loss.node) {
      mine = true;
      break;
    }
  if (!mine) throw InternalError("backward loss was not produced by this tape");
  Backprop bp;
  bp.force(loss.node)[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    const std::vector<double>* g = bp.find(it->out.get());
    if (!g) continue;
    it->back(g->data(), bp);
  }
  bp.flush();
}

// ---------------------------------------------------------------------------

static void require_2d(const Tensor& t, const char* op) {
  if (!t.defined() || t.shape().size() > 2)
    throw InternalError(std::string(op) + " expects a rank-1 or rank-2 tensor");
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2)
    throw InternalError("matmul dimension mismatch: " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  CMap A(a.data(), m, k), B(b.data(), k, n);
  MMap(out.data_mut(), m, n).noalias() = A * B;
  return record("matmul", out,
                [an = a.node, bn = b.node, m, k, n](const double* gout, Backprop& bp) {
                  CMap G(gout, m, n);
                  if (double* da = bp.grad_for(an)) {
                    CMap B(bn->value.data(), k, n);
                    MMap(da, m, k).noalias() += G * B.transpose();
                  }
                  if (double* db = bp.grad_for(bn)) {
                    CMap A(an->value.data(), m, k);
                    MMap(db, k, n).noalias() += A.transpose() * G;
                  }
                });
}

Tensor Tape::transpose(const Tensor& x) {
  require_2d(x, "transpose");
  int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({n, m});
  MMap(out.data_mut(), n, m) = CMap(x.data(), m, n).transpose();
  return record("transpose", out, [xn = x.node, m, n](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn)) MMap(dx, m, n) += CMap(gout, n, m).transpose();
  });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw InternalError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const size_t sz = a.node->value.size();
  for (size_t i = 0; i < sz; ++i) out.data_mut()[i] = a.data()[i] + b.data()[i];
  return record("add", out, [an = a.node, bn = b.node, sz](const double* gout, Backprop& bp) {
    if (double* da = bp.grad_for(an))
      for (size_t i = 0; i < sz; ++i) da[i] += gout[i];
    if (double* db = bp.grad_for(bn))
      for (size_t i = 0; i < sz; ++i) db[i] += gout[i];
  });
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_rowvec");
  int m = x.rows(), n = x.cols();
  if (bias.size() != n)
    throw InternalError("add_rowvec bias length " + std::to_string(bias.size()) +
                      " does not match width " + std::to_string(n));
  Tensor out = Tensor::zeros(x.shape());
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c)
      out.data_mut()[static_cast<size_t>(r) * n + c] =
          x.data()[static_cast<size_t>(r) * n + c] + bias.data()[c];
  return record("add_rowvec", out,
                [xn = x.node, bn = bias.node, m, n](const double* gout, Backprop& bp) {
                  if (double* dx = bp.grad_for(xn))
                    for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) dx[i] += gout[i];
                  if (double* db = bp.grad_for(bn))
                    for (int r = 0; r < m; ++r)
                      for (int c = 0; c < n; ++c) db[c] += gout[static_cast<size_t>(r) * n + c];
                });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw InternalError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const size_t sz = a.node->value.size();
  for (size_t i = 0; i < sz; ++i) out.data_mut()[i] = a.data()[i] * b.data()[i];
  return record("mul", out, [an = a.node, bn = b.node, sz](const double* gout, Backprop& bp) {
    if (double* da = bp.grad_for(an))
      for (size_t i = 0; i < sz; ++i) da[i] += gout[i] * bn->value[i];
    if (double* db = bp.grad_for(bn))
      for (size_t i = 0; i < sz; ++i) db[i] += gout[i] * an->value[i];
  });
}

Tensor Tape::scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  const size_t sz = x.node->value.size();
  for (size_t i = 0; i < sz; ++i) out.data_mut()[i] = x.data()[i] * c;
  return record("scale", out, [xn = x.node, c, sz](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn))
      for (size_t i = 0; i < sz; ++i) dx[i] += gout[i] * c;
  });
}

Tensor Tape::scale_rows(const Tensor& x, const Tensor& s) {
  require_2d(x, "scale_rows");
  int m = x.rows(), n = x.cols();
  if (s.size() != m)
    throw InternalError("scale_rows scale length " + std::to_string(s.size()) +
                      " does not match rows " + std::to_string(m));
  Tensor out = Tensor::zeros(x.shape());
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c)
      out.data_mut()[static_cast<size_t>(r) * n + c] =
          x.data()[static_cast<size_t>(r) * n + c] * s.data()[r];
  return record("scale_rows", out,
                [xn = x.node, sn = s.node, m, n](const double* gout, Backprop& bp) {
                  if (double* dx = bp.grad_for(xn))
                    for (int r = 0; r < m; ++r)
                      for (int c = 0; c < n; ++c)
                        dx[static_cast<size_t>(r) * n + c] +=
                            gout[static_cast<size_t>(r) * n + c] * sn->value[r];
                  if (double* ds = bp.grad_for(sn))
                    for (int r = 0; r < m; ++r) {
                      double acc = 0.0;
                      for (int c = 0; c < n; ++c)
                        acc += gout[static_cast<size_t>(r) * n + c] *
                               xn->value[static_cast<size_t>(r) * n + c];
                      ds[r] += acc;
                    }
                });
}

Tensor Tape::add_outer(const Tensor& col, const Tensor& row) {
  if (col.shape().size() != 2 || col.cols() != 1)
    throw InternalError("add_outer expects column shape (m x 1), got " + shape_str(col.shape()));
  if (row.rows() != 1)
    throw InternalError("add_outer expects row shape (1 x n), got " + shape_str(row.shape()));
  int m = col.rows(), n = row.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c)
      out.data_mut()[static_cast<size_t>(r) * n + c] = col.data()[r] + row.data()[c];
  return record("add_outer", out,
                [cn = col.node, rn = row.node, m, n](const double* gout, Backprop& bp) {
                  if (double* dc = bp.grad_for(cn))
                    for (int r = 0; r < m; ++r) {
                      double acc = 0.0;
                      for (int c = 0; c < n; ++c) acc += gout[static_cast<size_t>(r) * n + c];
                      dc[r] += acc;
                    }
                  if (double* dr = bp.grad_for(rn))
                    for (int r = 0; r < m; ++r)
                      for (int c = 0; c < n; ++c) dr[c] += gout[static_cast<size_t>(r) * n + c];
                });
}

static double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor Tape::sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const size_t sz = x.node->value.size();
  for (size_t i = 0; i < sz; ++i) out.data_mut()[i] = sigmoid_stable(x.data()[i]);
  return record("sigmoid", out,
                [xn = x.node, on = out.node, sz](const double* gout, Backprop& bp) {
                  if (double* dx = bp.grad_for(xn))
                    for (size_t i = 0; i < sz; ++i) {
                      double y = on->value[i];
                      dx[i] += gout[i] * y * (1.0 - y);
                    }
                });
}

Tensor Tape::tanh(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const size_t sz = x.node->value.size();
  for (size_t i = 0; i < sz; ++i) out.data_mut()[i] = std::tanh(x.data()[i]);
  return record("tanh", out,
                [xn = x.node, on = out.node, sz](const double* gout, Backprop& bp) {
                  if (double* dx = bp.grad_for(xn))
                    for (size_t i = 0; i < sz; ++i) {
                      double y = on->value[i];
                      dx[i] += gout[i] * (1.0 - y * y);
                    }
                });
}

Tensor Tape::silu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const size_t sz = x.node->value.size();
  for (size_t i = 0; i < sz; ++i) {
    double v = x.data()[i];
    out.data_mut()[i] = v * sigmoid_stable(v);
  }
  return record("silu", out, [xn = x.node, sz](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn))
      for (size_t i = 0; i < sz; ++i) {
        double v = xn->value[i];
        double s = sigmoid_stable(v);
        dx[i] += gout[i] * s * (1.0 + v * (1.0 - s));
      }
  });
}

Tensor Tape::leaky_relu(const Tensor& x, double slope) {
  Tensor out = Tensor::zeros(x.shape());
  const size_t sz = x.node->value.size();
  for (size_t i = 0; i < sz; ++i) {
    double v = x.data()[i];
    out.data_mut()[i] = v >= 0.0 ? v : slope * v;
  }
  return record("leaky_relu", out, [xn = x.node, slope, sz](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn))
      for (size_t i = 0; i < sz; ++i)
        dx[i] += gout[i] * (xn->value[i] >= 0.0 ? 1.0 : slope);
  });
}

Tensor Tape::softmax_rows(const Tensor& x) {
  require_2d(x, "softmax_rows");
  int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  for (int r = 0; r < m; ++r) {
    const double* row = x.data() + static_cast<size_t>(r) * n;
    double* orow = out.data_mut() + static_cast<size_t>(r) * n;
    double mx = row[0];
    for (int c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < n; ++c) {
      orow[c] = std::exp(row[c] - mx);
      sum += orow[c];
    }
    for (int c = 0; c < n; ++c) orow[c] /= sum;
  }
  return record("softmax_rows", out,
                [xn = x.node, on = out.node, m, n](const double* gout, Backprop& bp) {
                  if (double* dx = bp.grad_for(xn))
                    for (int r = 0; r < m; ++r) {
                      const double* y = on->value.data() + static_cast<size_t>(r) * n;
                      const double* g = gout + static_cast<size_t>(r) * n;
                      double dot = 0.0;
                      for (int c = 0; c < n; ++c) dot += y[c] * g[c];
                      double* d = dx + static_cast<size_t>(r) * n;
                      for (int c = 0; c < n; ++c) d[c] += y[c] * (g[c] - dot);
                    }
                });
}

Tensor Tape::dropout(const Tensor& x, double p, bool training, RngStream& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;  // identity, consumes no randomness
  const size_t sz = x.node->value.size();
  auto mask = std::make_shared<std::vector<double>>(sz);
  double keep_scale = 1.0 / (1.0 - p);
  Tensor out = Tensor::zeros(x.shape());
  for (size_t i = 0; i < sz; ++i) {
    double m = rng.next_double() < p ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out.data_mut()[i] = x.data()[i] * m;
  }
  return record("dropout", out, [xn = x.node, mask, sz](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn))
      for (size_t i = 0; i < sz; ++i) dx[i] += gout[i] * (*mask)[i];
  });
}

Tensor Tape::cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_2d(logits, "cross_entropy");
  int b = logits.rows(), k = logits.cols();
  if (static_cast<int>(labels.size()) != b)
    throw InternalError("cross_entropy got " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(b) + " rows");
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(b) * k);
  double total = 0.0;
  for (int r = 0; r < b; ++r) {
    int label = labels[r];
    if (label < 0 || label >= k)
      throw DataError("class label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(k) + ")");
    const double* row = logits.data() + static_cast<size_t>(r) * k;
    double* prow = probs->data() + static_cast<size_t>(r) * k;
    double mx = row[0];
    for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      prow[c] = std::exp(row[c] - mx);
      sum += prow[c];
    }
    for (int c = 0; c < k; ++c) prow[c] /= sum;
    total += (mx + std::log(sum)) - row[label];
  }
  Tensor out = Tensor::from_data({1}, {total / b});
  return record("cross_entropy", out,
                [ln = logits.node, probs, labels, b, k](const double* gout, Backprop& bp) {
                  if (double* dl = bp.grad_for(ln)) {
                    double g = gout[0] / b;
                    for (int r = 0; r < b; ++r)
                      for (int c = 0; c < k; ++c)
                        dl[static_cast<size_t>(r) * k + c] +=
                            g * ((*probs)[static_cast<size_t>(r) * k + c] -
                                 (labels[r] == c ? 1.0 : 0.0));
                  }
                });
}

Tensor Tape::sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::from_data({1}, {total});
  const size_t sz = x.node->value.size();
  return record("sum", out, [xn = x.node, sz](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn))
      for (size_t i = 0; i < sz; ++i) dx[i] += gout[0];
  });
}

Tensor Tape::mean_rows(const Tensor& x) {
  require_2d(x, "mean_rows");
  int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({1, n});
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) out.data_mut()[c] += x.data()[static_cast<size_t>(r) * n + c];
  for (int c = 0; c < n; ++c) out.data_mut()[c] /= m;
  return record("mean_rows", out, [xn = x.node, m, n](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn)) {
      double inv = 1.0 / m;
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) dx[static_cast<size_t>(r) * n + c] += gout[c] * inv;
    }
  });
}

Tensor Tape::concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InternalError("concat_rows needs at least one tensor");
  int n = xs.front().cols();
  int total = 0;
  for (const Tensor& t : xs) {
    require_2d(t, "concat_rows");
    if (t.cols() != n)
      throw InternalError("concat_rows width mismatch: " + std::to_string(t.cols()) + " vs " +
                        std::to_string(n));
    total += t.rows();
  }
  Tensor out = Tensor::zeros({total, n});
  int at = 0;
  std::vector<TensorNodePtr> nodes;
  std::vector<int> row_counts;
  for (const Tensor& t : xs) {
    std::copy(t.data(), t.data() + t.size(), out.data_mut() + static_cast<size_t>(at) * n);
    at += t.rows();
    nodes.push_back(t.node);
    row_counts.push_back(t.rows());
  }
  return record("concat_rows", out,
                [nodes, row_counts, n](const double* gout, Backprop& bp) {
                  int at = 0;
                  for (size_t i = 0; i < nodes.size(); ++i) {
                    if (double* dx = bp.grad_for(nodes[i])) {
                      const double* g = gout + static_cast<size_t>(at) * n;
                      for (size_t j = 0; j < static_cast<size_t>(row_counts[i]) * n; ++j)
                        dx[j] += g[j];
                    }
                    at += row_counts[i];
                  }
                });
}

Tensor Tape::slice_rows(const Tensor& x, int begin, int end) {
  require_2d(x, "slice_rows");
  int m = x.rows(), n = x.cols();
  if (begin < 0 || end > m || begin >= end)
    throw InternalError("slice_rows range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") invalid for " + std::to_string(m) + " rows");
  int out_rows = end - begin;
  Tensor out = Tensor::zeros({out_rows, n});
  std::copy(x.data() + static_cast<size_t>(begin) * n, x.data() + static_cast<size_t>(end) * n,
            out.data_mut());
  return record("slice_rows", out,
                [xn = x.node, begin, out_rows, n](const double* gout, Backprop& bp) {
                  if (double* dx = bp.grad_for(xn))
                    for (size_t j = 0; j < static_cast<size_t>(out_rows) * n; ++j)
                      dx[static_cast<size_t>(begin) * n + j] += gout[j];
                });
}

Tensor Tape::slice_cols(const Tensor& x, int begin, int end) {
  require_2d(x, "slice_cols");
  int m = x.rows(), n = x.cols();
  if (begin < 0 || end > n || begin >= end)
    throw InternalError("slice_cols range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") invalid for " + std::to_string(n) + " cols");
  int w = end - begin;
  Tensor out = Tensor::zeros({m, w});
  for (int r = 0; r < m; ++r)
    std::copy(x.data() + static_cast<size_t>(r) * n + begin,
              x.data() + static_cast<size_t>(r) * n + end,
              out.data_mut() + static_cast<size_t>(r) * w);
  return record("slice_cols", out,
                [xn = x.node, begin, m, n, w](const double* gout, Backprop& bp) {
                  if (double* dx = bp.grad_for(xn))
                    for (int r = 0; r < m; ++r)
                      for (int c = 0; c < w; ++c)
                        dx[static_cast<size_t>(r) * n + begin + c] +=
                            gout[static_cast<size_t>(r) * w + c];
                });
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw InternalError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                      " changes element count");
  Tensor out = Tensor::from_data(std::move(shape), x.node->value);
  const size_t sz = x.node->value.size();
  return record("reshape", out, [xn = x.node, sz](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn))
      for (size_t i = 0; i < sz; ++i) dx[i] += gout[i];
  });
}

static double softplus_stable(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Binary entropy of sigmoid(x), computed from the logit so saturated masks
// stay finite: H = sigma(x)*softplus(-x) + sigma(-x)*softplus(x),
// dH/dx = -x*sigma(x)*sigma(-x).
Tensor Tape::binary_entropy_logits(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const size_t sz = x.node->value.size();
  for (size_t i = 0; i < sz; ++i) {
    double v = x.data()[i];
    out.data_mut()[i] =
        sigmoid_stable(v) * softplus_stable(-v) + sigmoid_stable(-v) * softplus_stable(v);
  }
  return record("binary_entropy_logits", out, [xn = x.node, sz](const double* gout, Backprop& bp) {
    if (double* dx = bp.grad_for(xn))
      for (size_t i = 0; i < sz; ++i) {
        double v = xn->value[i];
        dx[i] += gout[i] * (-v * sigmoid_stable(v) * sigmoid_stable(-v));
      }
  });
}

}  // namespace stn
