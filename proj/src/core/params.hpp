#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "core/tensor.hpp"

namespace stn {

class RngStream;

// Named parameter set. Ordered map so iteration (checksums, checkpoints,
// optimizer sweeps) is deterministic.
struct ModelParams {
  std::map<std::string, Tensor> values;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return values.count(name) != 0; }
  void add(const std::string& name, Tensor t);

  void zero_grad();
  std::int64_t param_count() const;
  ModelParams clone(bool requires_grad) const;
  std::uint64_t value_checksum() const;
};

// Glorot-uniform weight, limit sqrt(6 / (fan_in + fan_out)).
Tensor glorot_init(int fan_in, int fan_out, RngStream& rng);

void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

class AdamW {
 public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit AdamW(Config cfg) : cfg_(cfg) {}

  // One update over every parameter with a populated gradient.
  void step(ModelParams& params);
  std::int64_t steps_taken() const { return t_; }
  const Config& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  Config cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace stn
