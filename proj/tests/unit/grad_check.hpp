#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "talkinghead/nn/graph.hpp"

namespace th::test {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences on up to `per_param` randomly chosen entries of each parameter.
inline GradCheck check_gradients(const std::vector<nn::Var>& params, const std::function<nn::Var()>& loss,
                                 double eps = 1e-5, std::size_t per_param = 12, std::uint64_t seed = 3) {
  nn::zero_grad(params);
  nn::backward(loss());
  std::vector<nn::Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p->grad.size() == p->value.size() ? p->grad : nn::Tensor(p->value.shape()));

  std::mt19937_64 rng(seed);
  GradCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = params[k]->value;
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(per_param, idx.size()));
    for (std::size_t i : idx) {
      const double orig = v[i];
      v[i] = orig + eps;
      const double up = loss()->value.item();
      v[i] = orig - eps;
      const double down = loss()->value.item();
      v[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max(std::abs(a), std::abs(numeric));
      if (denom < 1e-7) continue;
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace th::test
