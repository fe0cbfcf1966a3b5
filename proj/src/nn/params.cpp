#include "talkinghead/nn/params.hpp"

#include <cmath>

#include "talkinghead/error.hpp"

namespace th::nn {

Var ParamSet::add(std::string name, Tensor init) {
  for (const auto& [existing, var] : items_)
    if (existing == name) throw ConfigError("duplicate parameter name: " + name);
  auto v = parameter(std::move(init), name);
  items_.emplace_back(std::move(name), v);
  return v;
}

std::vector<Var> ParamSet::vars() const {
  std::vector<Var> out;
  out.reserve(items_.size());
  for (const auto& [_, v] : items_) out.push_back(v);
  return out;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : items_) n += v->value.size();
  return n;
}

void ParamSet::store(io::Container& c, const std::string& prefix) const {
  for (const auto& [name, v] : items_) {
    std::vector<std::int64_t> shape(v->value.shape().begin(), v->value.shape().end());
    c.add_f32(prefix + name, shape, std::span<const double>(v->value.values()));
  }
}

void ParamSet::load(const io::Container& c, const std::string& prefix) {
  for (auto& [name, v] : items_) {
    const auto& arr = c.array(prefix + name);
    std::vector<int> shape(arr.shape.begin(), arr.shape.end());
    if (shape != v->value.shape())
      throw ConfigError("checkpoint shape mismatch for " + prefix + name);
    for (std::size_t i = 0; i < arr.f32.size(); ++i) v->value[i] = arr.f32[i];
  }
}

std::vector<Tensor> ParamSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [_, v] : items_) out.push_back(v->value);
  return out;
}

void ParamSet::restore(const std::vector<Tensor>& values) {
  if (values.size() != items_.size()) throw ConfigError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) items_[i].second->value = values[i];
}

bool ParamSet::all_finite() const {
  for (const auto& [_, v] : items_)
    if (!v->value.all_finite()) return false;
  return true;
}

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& x : t.values()) x = dist(rng);
  return t;
}

Tensor he_normal(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& x : t.values()) x = dist(rng);
  return t;
}

}  // namespace th::nn
