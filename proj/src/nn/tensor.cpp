#include "talkinghead/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "talkinghead/error.hpp"

namespace th::nn {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    throw ConfigError("tensor data size does not match shape " + shape_string());
}

double Tensor::item() const {
  if (data_.size() != 1) throw ConfigError("item() on non-scalar tensor " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) s += (i ? "," : "") + std::to_string(shape_[i]);
  return s + "]";
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace th::nn
