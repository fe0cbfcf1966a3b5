#include "talkinghead/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "talkinghead/error.hpp"

namespace th::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->value.shape() != b->value.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + a->value.shape_string() + " vs " +
                      b->value.shape_string());
}

void require_rank(const Var& a, int rank, const char* op) {
  if (a->value.rank() != rank)
    throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                      a->value.shape_string());
}

// Unary elementwise op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  Tensor out(a->value.shape());
  const auto& x = a->value.values();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_node(std::move(out), {a}, [dfdx](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * dfdx(in.value[i], self.value[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const double s = k == 0 ? 1.0 : -1.0;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sqrt(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var log_sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        // 1 - sigmoid(x)
        if (x >= 0) {
          const double e = std::exp(-x);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(x));
      });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a->value.values()) acc += v;
  return make_node(Tensor::scalar(acc), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double s = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a->value.size());
  if (n == 0) throw ConfigError("mean of empty tensor");
  double acc = 0.0;
  for (double v : a->value.values()) acc += v;
  return make_node(Tensor::scalar(acc / n), {a}, [n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double s = self.grad[0] / n;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var dot(const Var& a, const Var& b) {
  if (a->value.size() != b->value.size()) throw ConfigError("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a->value.size(); ++i) acc += a->value[i] * b->value[i];
  return make_node(Tensor::scalar(acc), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    const double s = self.grad[0];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * x.value[i];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int n = a->value.dim(0), k = a->value.dim(1), m = b->value.dim(1);
  if (b->value.dim(0) != k) throw ConfigError("matmul: inner dimension mismatch");
  Tensor out({n, m});
  MapMat(out.data(), n, m).noalias() = ConstMapMat(a->value.data(), n, k) * ConstMapMat(b->value.data(), k, m);
  return make_node(std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    ConstMapMat g(self.grad.data(), n, m);
    if (x.requires_grad)
      MapMat(x.grad_buffer().data(), n, k).noalias() += g * ConstMapMat(y.value.data(), k, m).transpose();
    if (y.requires_grad)
      MapMat(y.grad_buffer().data(), k, m).noalias() += ConstMapMat(x.value.data(), n, k).transpose() * g;
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const int n = x->value.dim(0), k = x->value.dim(1), m = weight->value.dim(0);
  if (weight->value.dim(1) != k || bias->value.size() != static_cast<std::size_t>(m))
    throw ConfigError("linear: shape mismatch x" + x->value.shape_string() + " W" + weight->value.shape_string());
  Tensor out({n, m});
  MapMat o(out.data(), n, m);
  o.noalias() = ConstMapMat(x->value.data(), n, k) * ConstMapMat(weight->value.data(), m, k).transpose();
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->value.data(), m);
  return make_node(std::move(out), {x, weight, bias}, [n, k, m](Node& self) {
    Node& in = *self.inputs[0];
    Node& w = *self.inputs[1];
    Node& b = *self.inputs[2];
    ConstMapMat g(self.grad.data(), n, m);
    if (in.requires_grad)
      MapMat(in.grad_buffer().data(), n, k).noalias() += g * ConstMapMat(w.value.data(), m, k);
    if (w.requires_grad)
      MapMat(w.grad_buffer().data(), m, k).noalias() += g.transpose() * ConstMapMat(in.value.data(), n, k);
    if (b.requires_grad)
      Eigen::Map<Eigen::RowVectorXd>(b.grad_buffer().data(), m) += g.colwise().sum();
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  if (shape_size(shape) != a->value.size()) throw ConfigError("reshape: size mismatch");
  Tensor out(std::move(shape), a->value.values());
  return make_node(std::move(out), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var rows(const Var& a, int start, int count) {
  require_rank(a, 2, "rows");
  const int n = a->value.dim(0), m = a->value.dim(1);
  if (start < 0 || count < 0 || start + count > n) throw ConfigError("rows: range out of bounds");
  const auto off = static_cast<std::size_t>(start) * m;
  Tensor out({count, m});
  std::copy_n(a->value.data() + off, out.size(), out.data());
  return make_node(std::move(out), {a}, [off](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Var cols(const Var& a, int start, int count) {
  require_rank(a, 2, "cols");
  const int n = a->value.dim(0), m = a->value.dim(1);
  if (start < 0 || count < 0 || start + count > m) throw ConfigError("cols: range out of bounds");
  Tensor out({n, count});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < count; ++c)
      out[static_cast<std::size_t>(r) * count + c] = a->value[static_cast<std::size_t>(r) * m + start + c];
  return make_node(std::move(out), {a}, [n, m, start, count](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < count; ++c)
        g[static_cast<std::size_t>(r) * m + start + c] += self.grad[static_cast<std::size_t>(r) * count + c];
  });
}

Var slice0(const Var& a, int start, int count) {
  const auto& shape = a->value.shape();
  if (shape.empty() || start < 0 || count < 0 || start + count > shape[0])
    throw ConfigError("slice0: range out of bounds");
  const std::size_t inner = a->value.size() / static_cast<std::size_t>(shape[0]);
  auto out_shape = shape;
  out_shape[0] = count;
  Tensor out(out_shape);
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  std::copy_n(a->value.data() + off, out.size(), out.data());
  return make_node(std::move(out), {a}, [off](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Var concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat0: no inputs");
  auto shape = parts[0]->value.shape();
  std::vector<int> tail(shape.begin() + 1, shape.end());
  int total = 0;
  for (const auto& p : parts) {
    const auto& s = p->value.shape();
    if (std::vector<int>(s.begin() + 1, s.end()) != tail) throw ConfigError("concat0: trailing shape mismatch");
    total += s[0];
  }
  shape[0] = total;
  Tensor out(shape);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.values().begin(), p->value.values().end(), out.values().begin() + static_cast<long>(off));
    off += p->value.size();
  }
  return make_node(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->value.size();
      if (in->requires_grad) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int o = weight->value.dim(0), k = weight->value.dim(2);
  if (weight->value.dim(1) != c || weight->value.dim(3) != k)
    throw ConfigError("conv2d: weight " + weight->value.shape_string() + " vs input " + x->value.shape_string());
  if (bias->value.size() != static_cast<std::size_t>(o)) throw ConfigError("conv2d: bias size mismatch");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ConfigError("conv2d: output would be empty for input " + x->value.shape_string());
  const int patch = c * k * k;
  const int npix = ho * wo;

  // im2col: row = (channel, ky, kx), column = output pixel.
  auto columns = std::make_shared<std::vector<double>>(static_cast<std::size_t>(patch) * npix, 0.0);
  const double* src = x->value.data();
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = columns->data() + static_cast<std::size_t>((ci * k + ky) * k + kx) * npix;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            row[oy * wo + ox] = src[(static_cast<std::size_t>(ci) * h + iy) * w + ix];
          }
        }
      }

  Tensor out({o, ho, wo});
  MapMat om(out.data(), o, npix);
  om.noalias() = ConstMapMat(weight->value.data(), o, patch) * ConstMapMat(columns->data(), patch, npix);
  om.colwise() += Eigen::Map<const Eigen::VectorXd>(bias->value.data(), o);

  return make_node(std::move(out), {x, weight, bias},
                   [columns, c, h, w, o, k, stride, pad, ho, wo, patch, npix](Node& self) {
                     Node& in = *self.inputs[0];
                     Node& wt = *self.inputs[1];
                     Node& b = *self.inputs[2];
                     ConstMapMat g(self.grad.data(), o, npix);
                     if (wt.requires_grad)
                       MapMat(wt.grad_buffer().data(), o, patch).noalias() +=
                           g * ConstMapMat(columns->data(), patch, npix).transpose();
                     if (b.requires_grad)
                       Eigen::Map<Eigen::VectorXd>(b.grad_buffer().data(), o) += g.rowwise().sum();
                     if (in.requires_grad) {
                       RowMat dcols = ConstMapMat(wt.value.data(), o, patch).transpose() * g;
                       double* dx = in.grad_buffer().data();
                       for (int ci = 0; ci < c; ++ci)
                         for (int ky = 0; ky < k; ++ky)
                           for (int kx = 0; kx < k; ++kx) {
                             const double* row = dcols.data() + static_cast<std::size_t>((ci * k + ky) * k + kx) * npix;
                             for (int oy = 0; oy < ho; ++oy) {
                               const int iy = oy * stride - pad + ky;
                               if (iy < 0 || iy >= h) continue;
                               for (int ox = 0; ox < wo; ++ox) {
                                 const int ix = ox * stride - pad + kx;
                                 if (ix < 0 || ix >= w) continue;
                                 dx[(static_cast<std::size_t>(ci) * h + iy) * w + ix] += row[oy * wo + ox];
                               }
                             }
                           }
                     }
                   });
}

Var upsample2x(const Var& x) {
  require_rank(x, 3, "upsample2x");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out[(static_cast<std::size_t>(ci) * 2 * h + y) * 2 * w + xx] =
            x->value[(static_cast<std::size_t>(ci) * h + y / 2) * w + xx / 2];
  return make_node(std::move(out), {x}, [c, h, w](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          g[(static_cast<std::size_t>(ci) * h + y / 2) * w + xx / 2] +=
              self.grad[(static_cast<std::size_t>(ci) * 2 * h + y) * 2 * w + xx];
  });
}

Var instance_norm(const Var& x, double eps) {
  require_rank(x, 3, "instance_norm");
  const int c = x->value.dim(0);
  const std::size_t n = x->value.size() / static_cast<std::size_t>(c);
  Tensor out(x->value.shape());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
  for (int ci = 0; ci < c; ++ci) {
    const double* src = x->value.data() + ci * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += src[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[ci] = is;
    double* dst = out.data() + ci * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = (src[i] - mu) * is;
  }
  return make_node(std::move(out), {x}, [inv_std, c, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double dn = static_cast<double>(n);
    for (int ci = 0; ci < c; ++ci) {
      const double* dy = self.grad.data() + ci * n;
      const double* y = self.value.data() + ci * n;
      double sum_dy = 0.0, sum_dyy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_dy += dy[i];
        sum_dyy += dy[i] * y[i];
      }
      const double is = (*inv_std)[ci];
      double* dx = g.data() + ci * n;
      for (std::size_t i = 0; i < n; ++i) dx[i] += is / dn * (dn * dy[i] - sum_dy - y[i] * sum_dyy);
    }
  });
}

Var channel_affine(const Var& x, const Var& scale_v, const Var& shift_v) {
  require_rank(x, 3, "channel_affine");
  const int c = x->value.dim(0);
  if (scale_v->value.size() != static_cast<std::size_t>(c) || shift_v->value.size() != static_cast<std::size_t>(c))
    throw ConfigError("channel_affine: scale/shift must have one entry per channel");
  const std::size_t n = x->value.size() / static_cast<std::size_t>(c);
  Tensor out(x->value.shape());
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < n; ++i)
      out[ci * n + i] = x->value[ci * n + i] * scale_v->value[ci] + shift_v->value[ci];
  return make_node(std::move(out), {x, scale_v, shift_v}, [c, n](Node& self) {
    Node& in = *self.inputs[0];
    Node& sc = *self.inputs[1];
    Node& sh = *self.inputs[2];
    for (int ci = 0; ci < c; ++ci) {
      double gs = 0.0, gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = self.grad[ci * n + i];
        gs += g * in.value[ci * n + i];
        gb += g;
      }
      if (in.requires_grad) {
        auto& gx = in.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gx[ci * n + i] += self.grad[ci * n + i] * sc.value[ci];
      }
      if (sc.requires_grad) sc.grad_buffer()[ci] += gs;
      if (sh.requires_grad) sh.grad_buffer()[ci] += gb;
    }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 3, "global_avg_pool");
  const int c = x->value.dim(0);
  const std::size_t n = x->value.size() / static_cast<std::size_t>(c);
  Tensor out({c});
  for (int ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x->value[ci * n + i];
    out[ci] = acc / static_cast<double>(n);
  }
  return make_node(std::move(out), {x}, [c, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (int ci = 0; ci < c; ++ci) {
      const double s = self.grad[ci] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) g[ci * n + i] += s;
    }
  });
}

Var l2_normalize(const Var& v) {
  double ss = 0.0;
  for (double e : v->value.values()) ss += e * e;
  const double norm = std::max(std::sqrt(ss), 1e-12);
  Tensor out(v->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v->value[i] / norm;
  return make_node(std::move(out), {v}, [norm](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    double yg = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) yg += self.value[i] * self.grad[i];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (self.grad[i] - self.value[i] * yg) / norm;
  });
}

Var attention_composite(const Var& attention, const Var& rendered, const Var& color) {
  require_rank(attention, 3, "attention_composite");
  if (attention->value.dim(0) != 1) throw ConfigError("attention_composite: attention must be [1,H,W]");
  require_same_shape(rendered, color, "attention_composite");
  const int h = attention->value.dim(1), w = attention->value.dim(2);
  if (rendered->value.dim(1) != h || rendered->value.dim(2) != w)
    throw ConfigError("attention_composite: spatial size mismatch");
  const int ch = rendered->value.dim(0);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  Tensor out(rendered->value.shape());
  for (int c = 0; c < ch; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const double a = attention->value[i];
      out[c * n + i] = a * rendered->value[c * n + i] + (1.0 - a) * color->value[c * n + i];
    }
  return make_node(std::move(out), {attention, rendered, color}, [ch, n](Node& self) {
    Node& a = *self.inputs[0];
    Node& r = *self.inputs[1];
    Node& col = *self.inputs[2];
    for (int c = 0; c < ch; ++c)
      for (std::size_t i = 0; i < n; ++i) {
        const double g = self.grad[c * n + i];
        const double av = a.value[i];
        if (a.requires_grad) a.grad_buffer()[i] += g * (r.value[c * n + i] - col.value[c * n + i]);
        if (r.requires_grad) r.grad_buffer()[c * n + i] += g * av;
        if (col.requires_grad) col.grad_buffer()[c * n + i] += g * (1.0 - av);
      }
  });
}

Var total_variation_sq(const Var& a) {
  require_rank(a, 3, "total_variation_sq");
  if (a->value.dim(0) != 1) throw ConfigError("total_variation_sq: expected [1,H,W]");
  const int h = a->value.dim(1), w = a->value.dim(2);
  const auto& v = a->value;
  double acc = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double c = v[static_cast<std::size_t>(y) * w + x];
      if (y + 1 < h) {
        const double d = v[static_cast<std::size_t>(y + 1) * w + x] - c;
        acc += d * d;
      }
      if (x + 1 < w) {
        const double d = v[static_cast<std::size_t>(y) * w + x + 1] - c;
        acc += d * d;
      }
    }
  return make_node(Tensor::scalar(acc), {a}, [h, w](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    const double s = self.grad[0];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (y + 1 < h) {
          const std::size_t j = i + static_cast<std::size_t>(w);
          const double d = 2.0 * s * (in.value[j] - in.value[i]);
          g[j] += d;
          g[i] -= d;
        }
        if (x + 1 < w) {
          const double d = 2.0 * s * (in.value[i + 1] - in.value[i]);
          g[i + 1] += d;
          g[i] -= d;
        }
      }
  });
}

}  // namespace th::nn
