#pragma once

#include <vector>

#include "talkinghead/nn/graph.hpp"

namespace th::nn {

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double c);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
// Subgradient 0 at 0.
Var sqrt(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var square(const Var& a);
Var abs(const Var& a);
// log(sigmoid(a)), evaluated without overflow.
Var log_sigmoid(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);

// [N,K] x [K,M]
Var matmul(const Var& a, const Var& b);
// x [N,K], weight [M,K], bias [M] -> [N,M]
Var linear(const Var& x, const Var& weight, const Var& bias);

Var reshape(const Var& a, std::vector<int> shape);
// Rows [start, start+count) of a rank-2 tensor.
Var rows(const Var& a, int start, int count);
// Columns [start, start+count) of a rank-2 tensor.
Var cols(const Var& a, int start, int count);
// Elements [start, start+count) along dim 0 (any rank).
Var slice0(const Var& a, int start, int count);
// Concatenation along dim 0; trailing dims must agree.
Var concat0(const std::vector<Var>& parts);

// x [C,H,W], weight [O,C,k,k], bias [O].
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var upsample2x(const Var& x);
// Per-channel normalization to zero mean / unit variance over H*W.
Var instance_norm(const Var& x, double eps = 1e-5);
// y[c] = x[c] * scale[c] + shift[c]
Var channel_affine(const Var& x, const Var& scale, const Var& shift);
Var global_avg_pool(const Var& x);
Var l2_normalize(const Var& v);

// o = A*r + (1-A)*C with A [1,H,W] broadcast over the channels of r, C [3,H,W].
Var attention_composite(const Var& attention, const Var& rendered, const Var& color);
// Sum of squared vertical and horizontal neighbour differences of a [1,H,W] map.
Var total_variation_sq(const Var& a);

}  // namespace th::nn
