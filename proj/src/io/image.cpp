#include "talkinghead/io/image.hpp"

#include <cmath>

#include "talkinghead/error.hpp"

namespace th {

double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_size(b)) throw ConfigError("mean_abs_diff: image size mismatch");
  if (a.data.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return acc / static_cast<double>(a.data.size());
}

}  // namespace th
