#pragma once

#include <cstddef>
#include <vector>

namespace th {

/// Interleaved RGB image, row-major, values nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  [[nodiscard]] std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * 3 + c;
  }
  double& at(int x, int y, int c) { return data[index(x, y, c)]; }
  [[nodiscard]] double at(int x, int y, int c) const { return data[index(x, y, c)]; }
  [[nodiscard]] bool same_size(const Image& o) const {
    return width == o.width && height == o.height;
  }
  [[nodiscard]] bool empty() const { return data.empty(); }
};

double mean_abs_diff(const Image& a, const Image& b);

}  // namespace th
