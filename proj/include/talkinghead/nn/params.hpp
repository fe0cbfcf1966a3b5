#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "talkinghead/io/container.hpp"
#include "talkinghead/nn/graph.hpp"

namespace th::nn {

/// Named, ordered parameter list of a model.
class ParamSet {
 public:
  Var add(std::string name, Tensor init);
  [[nodiscard]] std::vector<Var> vars() const;
  [[nodiscard]] const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  [[nodiscard]] std::size_t count() const;  // scalar parameter count

  void store(io::Container& c, const std::string& prefix) const;
  void load(const io::Container& c, const std::string& prefix);
  // Deep copy of values (no graph sharing).
  [[nodiscard]] std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);
  [[nodiscard]] bool all_finite() const;

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng);
Tensor he_normal(std::vector<int> shape, int fan_in, std::mt19937_64& rng);

}  // namespace th::nn
