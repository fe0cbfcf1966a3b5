#pragma once

#include <vector>

#include "talkinghead/nn/graph.hpp"

namespace th::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig config);

  void step();
  void zero_grad();
  void set_lr(double lr) { config_.lr = lr; }
  [[nodiscard]] const AdamConfig& config() const { return config_; }

 private:
  std::vector<Var> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

}  // namespace th::nn
