#include "core/params.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "core/io.hpp"
#include "core/rng.hpp"

namespace stn {

Tensor& ModelParams::at(const std::string& name) {
  auto it = values.find(name);
  if (it == values.end()) throw InternalError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) throw InternalError("unknown parameter '" + name + "'");
  return it->second;
}

void ModelParams::add(const std::string& name, Tensor t) {
  if (!values.emplace(name, std::move(t)).second)
    throw InternalError("duplicate parameter '" + name + "'");
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : values) t.zero_grad();
}

std::int64_t ModelParams::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : values) n += t.size();
  return n;
}

ModelParams ModelParams::clone(bool requires_grad) const {
  ModelParams out;
  for (const auto& [name, t] : values) out.values.emplace(name, t.detached_copy(requires_grad));
  return out;
}

std::uint64_t ModelParams::value_checksum() const {
  // FNV-1a over names and raw value bytes, in map order.
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const unsigned char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [name, t] : values) {
    mix(reinterpret_cast<const unsigned char*>(name.data()), name.size());
    mix(reinterpret_cast<const unsigned char*>(t.data()), t.size() * sizeof(double));
  }
  return h;
}

Tensor glorot_init(int fan_in, int fan_out, RngStream& rng) {
  if (fan_in <= 0 || fan_out <= 0)
    throw ConfigError("glorot_init fans must be positive, got " + std::to_string(fan_in) + ", " +
                      std::to_string(fan_out));
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> data(static_cast<size_t>(fan_in) * fan_out);
  for (double& v : data) v = rng.next_uniform(-limit, limit);
  return Tensor::from_data({fan_in, fan_out}, std::move(data), true);
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  // Hand-rolled writer: nlohmann would round-trip doubles too, but shortest-
  // round-trip formatting differs across versions; %.17g is pinned everywhere.
  std::ostringstream out;
  out << "{\n";
  bool first = true;
  for (const auto& [name, t] : params.values) {
    if (!first) out << ",\n";
    first = false;
    out << "  \"" << name << "\": {\"shape\": [";
    const Shape& s = t.shape();
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out << ", ";
      out << s[i];
    }
    out << "], \"data\": [";
    for (std::int64_t i = 0; i < t.size(); ++i) {
      if (i) out << ", ";
      out << format_double17(t.data()[i]);
    }
    out << "]}";
  }
  out << "\n}\n";
  write_text_file(path, out.str());
}

ModelParams load_checkpoint(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw DataError("checkpoint " + path + " must be a JSON object");
  ModelParams params;
  for (auto& [name, entry] : j.items()) {
    if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data"))
      throw DataError("checkpoint entry '" + name + "' needs shape and data");
    Shape shape;
    for (const auto& d : entry["shape"]) shape.push_back(d.get<int>());
    std::vector<double> data;
    data.reserve(entry["data"].size());
    for (const auto& v : entry["data"]) data.push_back(v.get<double>());
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw DataError("checkpoint entry '" + name + "' shape does not match data length");
    params.values.emplace(name, Tensor::from_data(std::move(shape), std::move(data), true));
  }
  return params;
}

void AdamW::step(ModelParams& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params.values) {
    if (!p.requires_grad() || !p.has_grad()) continue;
    auto& mom = state_[name];
    size_t n = static_cast<size_t>(p.size());
    if (mom.m.empty()) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    } else if (mom.m.size() != n) {
      throw InternalError("optimizer state size changed for '" + name + "'");
    }
    double* w = p.data_mut();
    std::span<const double> g = p.grad();
    for (size_t i = 0; i < n; ++i) {
      w[i] -= cfg_.lr * cfg_.weight_decay * w[i];  // decoupled decay
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = mom.m[i] / bc1;
      double vhat = mom.v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    if (!std::isfinite(w[0]))
      throw NumericError("parameter '" + name + "' diverged during optimization");
  }
}

}  // namespace stn
