#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace stn {

class RngStream;

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily, only for requires_grad nodes
  bool requires_grad = false;
  bool tape_output = false;  // produced by a recorded primitive
};

using TensorNodePtr = std::shared_ptr<TensorNode>;

// Value-semantic handle onto a shared node. All data is 64-bit float,
// row-major. Rank is 1 or 2 for every primitive except reshape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node != nullptr; }
  const Shape& shape() const { return node->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(node->value.size()); }
  // 2-D view: rank-1 tensors count as a single row.
  int rows() const;
  int cols() const;
  bool requires_grad() const { return node->requires_grad; }

  const double* data() const { return node->value.data(); }
  double* data_mut() { return node->value.data(); }
  std::span<const double> values() const { return node->value; }
  std::span<double> values_mut() { return node->value; }

  bool has_grad() const { return !node->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  double scalar() const;
  double at(int r, int c) const { return node->value[static_cast<size_t>(r) * cols() + c]; }

  Tensor detached_copy(bool requires_grad = false) const;

  TensorNodePtr node;

 private:
  explicit Tensor(TensorNodePtr n) : node(std::move(n)) {}
};

// Records primitive applications in execution order; backward replays them in
// reverse, so inputs always precede their consumers and each step is visited
// once. Adjoints accumulate in scratch buffers during the sweep and are added
// into .grad at the end, so calling backward twice doubles every gradient.
class Tape {
 public:
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& x);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor add_rowvec(const Tensor& x, const Tensor& bias);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double c);
  Tensor scale_rows(const Tensor& x, const Tensor& s);
  Tensor add_outer(const Tensor& col, const Tensor& row);
  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor silu(const Tensor& x);
  Tensor leaky_relu(const Tensor& x, double slope);
  Tensor softmax_rows(const Tensor& x);
  Tensor dropout(const Tensor& x, double p, bool training, RngStream& rng);
  Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
  Tensor sum(const Tensor& x);
  Tensor mean_rows(const Tensor& x);
  Tensor concat_rows(const std::vector<Tensor>& xs);
  Tensor slice_rows(const Tensor& x, int begin, int end);
  Tensor slice_cols(const Tensor& x, int begin, int end);
  Tensor reshape(const Tensor& x, Shape shape);
  Tensor binary_entropy_logits(const Tensor& x);

  void backward(const Tensor& loss);

  size_t step_count() const { return steps_.size(); }

 private:
  class Backprop;
  struct Step {
    const char* op;
    TensorNodePtr out;
    std::function<void(const double*, Backprop&)> back;
  };

  Tensor record(const char* op, Tensor out,
                std::function<void(const double*, Backprop&)> back);

  std::vector<Step> steps_;
};

}  // namespace stn
