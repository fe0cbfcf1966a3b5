#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace th::nn {

/// Dense row-major double tensor. Images are stored channel-first [C, H, W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  [[nodiscard]] const std::vector<int>& shape() const { return shape_; }
  [[nodiscard]] int rank() const { return static_cast<int>(shape_.size()); }
  [[nodiscard]] int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  [[nodiscard]] const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  [[nodiscard]] const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] double item() const;
  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] std::string shape_string() const;

  void fill(double v);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t shape_size(const std::vector<int>& shape);

}  // namespace th::nn
