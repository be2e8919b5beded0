#include <cmath>

#include "tristream/ops.hpp"

namespace tristream {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Bwd bwd) {
  Tensor out = detail::make_op_output(
      x.shape(), name, {x},
      [x, bwd](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float* g = self.grad.data();
        const float* xv = x.data().data();
        const float* yv = self.data.data();
        for (size_t i = 0; i < dx.size(); ++i) dx[i] += bwd(g[i], xv[i], yv[i]);
      });
  const float* xv = x.data().data();
  float* yv = out.mut_data().data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yv[i] = fwd(xv[i]);
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float g, float xv, float) { return xv > 0.0f ? g : 0.0f; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](float v) { return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))); },
      [](float g, float, float y) { return g * y * (1.0f - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](float v) { return std::tanh(v); },
      [](float g, float, float y) { return g * (1.0f - y * y); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = detail::make_op_output(
      a.shape(), "add", {a, b},
      [a, b](const TensorImpl& self) {
        if (a.impl()->requires_grad) a.impl()->accumulate_grad(self.grad);
        if (b.impl()->requires_grad) b.impl()->accumulate_grad(self.grad);
      });
  const float* av = a.data().data();
  const float* bv = b.data().data();
  float* yv = out.mut_data().data();
  for (int64_t i = 0; i < a.numel(); ++i) yv[i] = av[i] + bv[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = detail::make_op_output(
      a.shape(), "sub", {a, b},
      [a, b](const TensorImpl& self) {
        if (a.impl()->requires_grad) a.impl()->accumulate_grad(self.grad);
        if (b.impl()->requires_grad) {
          auto& db = b.impl()->ensure_grad();
          const float* g = self.grad.data();
          for (size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
        }
      });
  const float* av = a.data().data();
  const float* bv = b.data().data();
  float* yv = out.mut_data().data();
  for (int64_t i = 0; i < a.numel(); ++i) yv[i] = av[i] - bv[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = detail::make_op_output(
      a.shape(), "mul", {a, b},
      [a, b](const TensorImpl& self) {
        const float* g = self.grad.data();
        if (a.impl()->requires_grad) {
          auto& da = a.impl()->ensure_grad();
          const float* bv = b.data().data();
          for (size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
        }
        if (b.impl()->requires_grad) {
          auto& db = b.impl()->ensure_grad();
          const float* av = a.data().data();
          for (size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
        }
      });
  const float* av = a.data().data();
  const float* bv = b.data().data();
  float* yv = out.mut_data().data();
  for (int64_t i = 0; i < a.numel(); ++i) yv[i] = av[i] * bv[i];
  return out;
}

Tensor scale(const Tensor& x, float c) {
  return unary_op(
      x, "scale", [c](float v) { return v * c; },
      [c](float g, float, float) { return g * c; });
}

Tensor scale(const Tensor& x, const Tensor& alpha) {
  if (alpha.numel() != 1)
    throw ShapeError("scale: alpha must be a scalar, got " + shape_str(alpha.shape()));
  Tensor out = detail::make_op_output(
      x.shape(), "scale_t", {x, alpha},
      [x, alpha](const TensorImpl& self) {
        const float* g = self.grad.data();
        if (x.impl()->requires_grad) {
          const float a = alpha.data()[0];
          auto& dx = x.impl()->ensure_grad();
          for (size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * a;
        }
        if (alpha.impl()->requires_grad) {
          const float* xv = x.data().data();
          double acc = 0.0;
          for (size_t i = 0; i < self.data.size(); ++i)
            acc += static_cast<double>(g[i]) * xv[i];
          alpha.impl()->ensure_grad()[0] += static_cast<float>(acc);
        }
      });
  const float a = alpha.data()[0];
  const float* xv = x.data().data();
  float* yv = out.mut_data().data();
  for (int64_t i = 0; i < x.numel(); ++i) yv[i] = xv[i] * a;
  return out;
}

Tensor bias_add(const Tensor& x, const Tensor& bias, int axis) {
  if (axis < 0 || static_cast<size_t>(axis) >= x.rank())
    throw ShapeError("bias_add: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  if (bias.rank() != 1 || bias.dim(0) != x.dim(static_cast<size_t>(axis)))
    throw ShapeError("bias_add: bias " + shape_str(bias.shape()) +
                     " does not match axis " + std::to_string(axis) + " of " +
                     shape_str(x.shape()));
  const int64_t extent = x.dim(static_cast<size_t>(axis));
  int64_t inner = 1;
  for (size_t i = static_cast<size_t>(axis) + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const int64_t outer = x.numel() / (extent * inner);

  Tensor out = detail::make_op_output(
      x.shape(), "bias_add", {x, bias},
      [x, bias, outer, extent, inner](const TensorImpl& self) {
        const float* g = self.grad.data();
        if (x.impl()->requires_grad) x.impl()->accumulate_grad(self.grad);
        if (bias.impl()->requires_grad) {
          auto& db = bias.impl()->ensure_grad();
          for (int64_t j = 0; j < extent; ++j) {
            double acc = db[j];
            for (int64_t o = 0; o < outer; ++o) {
              const float* row = g + (o * extent + j) * inner;
              for (int64_t i = 0; i < inner; ++i) acc += row[i];
            }
            db[j] = static_cast<float>(acc);
          }
        }
      });
  const float* xv = x.data().data();
  const float* bv = bias.data().data();
  float* yv = out.mut_data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < extent; ++j) {
      const float b = bv[j];
      const int64_t base = (o * extent + j) * inner;
      for (int64_t i = 0; i < inner; ++i) yv[base + i] = xv[base + i] + b;
    }
  return out;
}

Tensor dropout(const Tensor& x, float p, bool training, Rng& rng) {
  if (p < 0.0f || p >= 1.0f)
    throw ValueError("dropout: p must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0f) {
    // identity in eval mode, but still a graph node so gradients pass through
    return scale(x, 1.0f);
  }
  const float keep_scale = 1.0f / (1.0f - p);
  auto mask = std::make_shared<std::vector<float>>(static_cast<size_t>(x.numel()));
  for (auto& m : *mask) m = rng.uniform() < p ? 0.0f : keep_scale;

  Tensor out = detail::make_op_output(
      x.shape(), "dropout", {x},
      [x, mask](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float* g = self.grad.data();
        for (size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * (*mask)[i];
      });
  const float* xv = x.data().data();
  float* yv = out.mut_data().data();
  for (int64_t i = 0; i < x.numel(); ++i) yv[i] = xv[i] * (*mask)[i];
  return out;
}

}  // namespace tristream
