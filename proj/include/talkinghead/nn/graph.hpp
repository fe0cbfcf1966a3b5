#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "talkinghead/nn/tensor.hpp"

namespace th::nn {

// One value in a dynamically built computation graph. Graphs are rebuilt on
// every forward pass; parameters are long-lived nodes whose grad accumulates
// until zero_grad().
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  std::string name;

  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var parameter(Tensor value, std::string name = {});

// Builds a node; backward_fn and inputs are kept only when some input needs grad.
Var make_node(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

/// Reverse-mode sweep from a scalar root, seeding d(root)/d(root) = 1.
void backward(const Var& root);

void zero_grad(std::span<const Var> params);

}  // namespace th::nn
