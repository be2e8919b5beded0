#include <algorithm>
#include <cstring>
#include <limits>
#include <numeric>

#include "tristream/ops.hpp"

namespace tristream {

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  Tensor out = detail::make_op_output(
      std::move(shape), "reshape", {x},
      [x](const TensorImpl& self) {
        if (x.impl()->requires_grad) x.impl()->accumulate_grad(self.grad);
      });
  std::memcpy(out.mut_data().data(), x.data().data(), sizeof(float) * x.numel());
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ValueError("concat: empty input list");
  const Shape& first = xs[0].shape();
  if (axis < 0 || static_cast<size_t>(axis) >= first.size())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range");
  Shape out_shape = first;
  int64_t total = first[static_cast<size_t>(axis)];
  for (size_t i = 1; i < xs.size(); ++i) {
    const Shape& s = xs[i].shape();
    if (s.size() != first.size())
      throw ShapeError("concat: rank mismatch at input " + std::to_string(i));
    for (size_t a = 0; a < s.size(); ++a)
      if (a != static_cast<size_t>(axis) && s[a] != first[a])
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(a) +
                         " at input " + std::to_string(i));
    total += s[static_cast<size_t>(axis)];
  }
  out_shape[static_cast<size_t>(axis)] = total;

  int64_t inner = 1;
  for (size_t a = static_cast<size_t>(axis) + 1; a < first.size(); ++a) inner *= first[a];
  int64_t outer = 1;
  for (int a = 0; a < axis; ++a) outer *= first[static_cast<size_t>(a)];

  Tensor out = detail::make_op_output(
      out_shape, "concat", {xs.begin(), xs.end()},
      [xs, axis, outer, inner, total](const TensorImpl& self) {
        const float* g = self.grad.data();
        int64_t offset = 0;
        for (const Tensor& x : xs) {
          const int64_t extent = x.shape()[static_cast<size_t>(axis)];
          if (x.impl()->requires_grad) {
            auto& dx = x.impl()->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
              const float* src = g + (o * total + offset) * inner;
              float* dst = dx.data() + o * extent * inner;
              for (int64_t i = 0; i < extent * inner; ++i) dst[i] += src[i];
            }
          }
          offset += extent;
        }
      });

  float* y = out.mut_data().data();
  int64_t offset = 0;
  for (const Tensor& x : xs) {
    const int64_t extent = x.shape()[static_cast<size_t>(axis)];
    const float* src = x.data().data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(y + (o * total + offset) * inner, src + o * extent * inner,
                  sizeof(float) * extent * inner);
    offset += extent;
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  const Shape& s = x.shape();
  if (axis < 0 || static_cast<size_t>(axis) >= s.size())
    throw ShapeError("slice: axis " + std::to_string(axis) + " out of range");
  const int64_t extent = s[static_cast<size_t>(axis)];
  if (start < 0 || len < 1 || start + len > extent)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") exceeds extent " +
                     std::to_string(extent));
  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = len;
  int64_t inner = 1;
  for (size_t a = static_cast<size_t>(axis) + 1; a < s.size(); ++a) inner *= s[a];
  int64_t outer = 1;
  for (int a = 0; a < axis; ++a) outer *= s[static_cast<size_t>(a)];

  Tensor out = detail::make_op_output(
      out_shape, "slice", {x},
      [x, start, len, extent, outer, inner](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float* g = self.grad.data();
        for (int64_t o = 0; o < outer; ++o) {
          float* dst = dx.data() + (o * extent + start) * inner;
          const float* src = g + o * len * inner;
          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      });
  float* y = out.mut_data().data();
  const float* xv = x.data().data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(y + o * len * inner, xv + (o * extent + start) * inner,
                sizeof(float) * len * inner);
  return out;
}

Tensor repeat_interleave(const Tensor& x, int64_t repeats, int axis) {
  if (repeats < 1) throw ValueError("repeat_interleave: repeats must be >= 1");
  const Shape& s = x.shape();
  if (axis < 0 || static_cast<size_t>(axis) >= s.size())
    throw ShapeError("repeat_interleave: axis " + std::to_string(axis) + " out of range");
  const int64_t extent = s[static_cast<size_t>(axis)];
  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = extent * repeats;
  int64_t inner = 1;
  for (size_t a = static_cast<size_t>(axis) + 1; a < s.size(); ++a) inner *= s[a];
  int64_t outer = 1;
  for (int a = 0; a < axis; ++a) outer *= s[static_cast<size_t>(a)];

  Tensor out = detail::make_op_output(
      out_shape, "repeat_interleave", {x},
      [x, repeats, extent, outer, inner](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float* g = self.grad.data();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t j = 0; j < extent; ++j) {
            float* dst = dx.data() + (o * extent + j) * inner;
            for (int64_t r = 0; r < repeats; ++r) {
              const float* src = g + ((o * extent + j) * repeats + r) * inner;
              for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
            }
          }
      });
  float* y = out.mut_data().data();
  const float* xv = x.data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < extent; ++j) {
      const float* src = xv + (o * extent + j) * inner;
      for (int64_t r = 0; r < repeats; ++r)
        std::memcpy(y + ((o * extent + j) * repeats + r) * inner, src,
                    sizeof(float) * inner);
    }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = detail::make_op_output(
      {}, "sum", {x},
      [x](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float g = self.grad[0];
        for (auto& v : dx) v += g;
      });
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  out.mut_data()[0] = static_cast<float>(acc);
  return out;
}

Tensor mean_all(const Tensor& x) {
  const int64_t n = x.numel();
  Tensor out = detail::make_op_output(
      {}, "mean", {x},
      [x, n](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float g = self.grad[0] / static_cast<float>(n);
        for (auto& v : dx) v += g;
      });
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  out.mut_data()[0] = static_cast<float>(acc / static_cast<double>(n));
  return out;
}

Tensor mean_axes(const Tensor& x, std::vector<int> axes) {
  const Shape& s = x.shape();
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end())
    throw ShapeError("mean_axes: duplicate axis");
  std::vector<bool> reduced(s.size(), false);
  for (int a : axes) {
    if (a < 0 || static_cast<size_t>(a) >= s.size())
      throw ShapeError("mean_axes: axis " + std::to_string(a) + " out of range for " +
                       shape_str(s));
    reduced[static_cast<size_t>(a)] = true;
  }
  Shape out_shape;
  int64_t count = 1;
  for (size_t a = 0; a < s.size(); ++a) {
    if (reduced[a])
      count *= s[a];
    else
      out_shape.push_back(s[a]);
  }

  // Strides mapping each input element to its output slot.
  std::vector<int64_t> in_strides(s.size(), 1);
  for (size_t a = s.size(); a-- > 1;) in_strides[a - 1] = in_strides[a] * s[a];
  std::vector<int64_t> out_strides(s.size(), 0);
  {
    int64_t stride = 1;
    for (size_t a = s.size(); a-- > 0;) {
      if (!reduced[a]) {
        out_strides[a] = stride;
        stride *= s[a];
      }
    }
  }
  auto map_index = [shape = s, in_strides, out_strides](int64_t flat) {
    int64_t out_idx = 0;
    for (size_t a = 0; a < shape.size(); ++a) {
      const int64_t coord = (flat / in_strides[a]) % shape[a];
      out_idx += coord * out_strides[a];
    }
    return out_idx;
  };

  Tensor out = detail::make_op_output(
      out_shape, "mean_axes", {x},
      [x, map_index, count](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float* g = self.grad.data();
        const float inv = 1.0f / static_cast<float>(count);
        for (int64_t i = 0; i < static_cast<int64_t>(dx.size()); ++i)
          dx[i] += g[map_index(i)] * inv;
      });

  std::vector<double> acc(static_cast<size_t>(out.numel()), 0.0);
  const float* xv = x.data().data();
  for (int64_t i = 0; i < x.numel(); ++i) acc[static_cast<size_t>(map_index(i))] += xv[i];
  float* y = out.mut_data().data();
  for (int64_t i = 0; i < out.numel(); ++i)
    y[i] = static_cast<float>(acc[static_cast<size_t>(i)] / static_cast<double>(count));
  return out;
}

Tensor reduce_max_tail(const Tensor& x, int tail_axes) {
  const Shape& s = x.shape();
  if (tail_axes < 1 || static_cast<size_t>(tail_axes) > s.size())
    throw ShapeError("reduce_max_tail: invalid tail axis count");
  Shape out_shape(s.begin(), s.end() - tail_axes);
  int64_t inner = 1;
  for (size_t a = s.size() - static_cast<size_t>(tail_axes); a < s.size(); ++a) inner *= s[a];
  const int64_t outer = x.numel() / inner;

  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(outer));
  Tensor out = detail::make_op_output(
      out_shape, "reduce_max_tail", {x},
      [x, argmax, inner, outer](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float* g = self.grad.data();
        for (int64_t o = 0; o < outer; ++o) dx[o * inner + (*argmax)[o]] += g[o];
      });
  const float* xv = x.data().data();
  float* y = out.mut_data().data();
  for (int64_t o = 0; o < outer; ++o) {
    const float* row = xv + o * inner;
    float best = -std::numeric_limits<float>::infinity();
    int64_t best_idx = 0;
    for (int64_t i = 0; i < inner; ++i)
      if (row[i] > best) {
        best = row[i];
        best_idx = i;
      }
    y[o] = best;
    (*argmax)[o] = best_idx;
  }
  return out;
}

Tensor permute_copy(const Tensor& x, const std::vector<int>& perm) {
  const Shape& s = x.shape();
  if (perm.size() != s.size()) throw ShapeError("permute_copy: rank mismatch");
  Shape out_shape(s.size());
  for (size_t a = 0; a < perm.size(); ++a) out_shape[a] = s[static_cast<size_t>(perm[a])];

  std::vector<int64_t> in_strides(s.size(), 1);
  for (size_t a = s.size(); a-- > 1;) in_strides[a - 1] = in_strides[a] * s[a];

  Tensor out = Tensor::zeros(out_shape);
  float* y = out.mut_data().data();
  const float* xv = x.data().data();
  std::vector<int64_t> coord(s.size(), 0);
  for (int64_t i = 0; i < out.numel(); ++i) {
    int64_t src = 0;
    for (size_t a = 0; a < s.size(); ++a)
      src += coord[a] * in_strides[static_cast<size_t>(perm[a])];
    y[i] = xv[src];
    for (size_t a = s.size(); a-- > 0;) {
      if (++coord[a] < out_shape[a]) break;
      coord[a] = 0;
    }
  }
  return out;
}

Tensor stack_batch(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ValueError("stack_batch: empty input list");
  const Shape& s = xs[0].shape();
  for (const Tensor& x : xs)
    if (x.shape() != s) throw ShapeError("stack_batch: inputs must share a shape");
  Shape out_shape;
  out_shape.push_back(static_cast<int64_t>(xs.size()));
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor out = Tensor::zeros(out_shape);
  const int64_t stride = xs[0].numel();
  for (size_t i = 0; i < xs.size(); ++i)
    std::memcpy(out.mut_data().data() + static_cast<int64_t>(i) * stride,
                xs[i].data().data(), sizeof(float) * stride);
  return out;
}

}  // namespace tristream
