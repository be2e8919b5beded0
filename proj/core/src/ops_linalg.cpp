#include <cmath>
#include <memory>

#include "detail/gemm.hpp"
#include "tristream/ops.hpp"

namespace tristream {

namespace {

struct AxisSplit {
  int64_t outer, extent, inner;
};

AxisSplit split_at(const Shape& shape, int axis, const char* op) {
  if (axis < 0 || static_cast<size_t>(axis) >= shape.size())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(shape));
  AxisSplit s{1, shape[static_cast<size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(as) +
                     " and " + shape_str(bs));
  const bool shared_b = bs.size() == 2 && as.size() > 2;
  if (!shared_b && as.size() != bs.size())
    throw ShapeError("matmul: rank mismatch " + shape_str(as) + " vs " + shape_str(bs));
  if (!shared_b)
    for (size_t i = 0; i + 2 < as.size(); ++i)
      if (as[i] != bs[i])
        throw ShapeError("matmul: batch axis " + std::to_string(i) + " mismatch: " +
                         shape_str(as) + " vs " + shape_str(bs));
  const int64_t m = as[as.size() - 2];
  const int64_t k = as[as.size() - 1];
  const int64_t kb = bs[bs.size() - 2];
  const int64_t n = bs[bs.size() - 1];
  if (k != kb)
    throw ShapeError("matmul: inner axis mismatch, " + shape_str(as) + " x " + shape_str(bs));

  Shape out_shape(as.begin(), as.end() - 2);
  int64_t batch = 1;
  for (int64_t e : out_shape) batch *= e;
  out_shape.push_back(m);
  out_shape.push_back(n);

  Tensor out = detail::make_op_output(
      out_shape, "matmul", {a, b},
      [a, b, m, k, n, batch, shared_b](const TensorImpl& self) {
        const float* g = self.grad.data();
        const float* av = a.data().data();
        const float* bv = b.data().data();
        if (a.impl()->requires_grad) {
          float* da = a.impl()->ensure_grad().data();
          for (int64_t p = 0; p < batch; ++p)
            detail::gemm_nt(g + p * m * n, bv + (shared_b ? 0 : p * k * n),
                            da + p * m * k, m, n, k, /*accumulate=*/true);
        }
        if (b.impl()->requires_grad) {
          float* db = b.impl()->ensure_grad().data();
          for (int64_t p = 0; p < batch; ++p)
            detail::gemm_tn(av + p * m * k, g + p * m * n,
                            db + (shared_b ? 0 : p * k * n), m, k, n,
                            /*accumulate=*/true);
        }
      });

  const float* av = a.data().data();
  const float* bv = b.data().data();
  float* yv = out.mut_data().data();
  for (int64_t p = 0; p < batch; ++p)
    detail::gemm_nn(av + p * m * k, bv + (shared_b ? 0 : p * k * n), yv + p * m * n,
                    m, k, n);
  return out;
}

Tensor transpose_last2(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2)
    throw ShapeError("transpose_last2: rank >= 2 required, got " + shape_str(s));
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  const int64_t m = s[s.size() - 2];
  const int64_t n = s[s.size() - 1];
  const int64_t batch = x.numel() / (m * n);

  Tensor out = detail::make_op_output(
      out_shape, "transpose", {x},
      [x, m, n, batch](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float* g = self.grad.data();
        for (int64_t p = 0; p < batch; ++p) {
          const float* gp = g + p * m * n;
          float* dp = dx.data() + p * m * n;
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) dp[i * n + j] += gp[j * m + i];
        }
      });
  const float* xv = x.data().data();
  float* yv = out.mut_data().data();
  for (int64_t p = 0; p < batch; ++p) {
    const float* xp = xv + p * m * n;
    float* yp = yv + p * m * n;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) yp[j * m + i] = xp[i * n + j];
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const AxisSplit s = split_at(x.shape(), axis, "softmax");
  Tensor out = detail::make_op_output(
      x.shape(), "softmax", {x},
      [x, s](const TensorImpl& self) {
        if (!x.impl()->requires_grad) return;
        auto& dx = x.impl()->ensure_grad();
        const float* g = self.grad.data();
        const float* y = self.data.data();
        for (int64_t o = 0; o < s.outer; ++o)
          for (int64_t i = 0; i < s.inner; ++i) {
            const int64_t base = o * s.extent * s.inner + i;
            double dot = 0.0;
            for (int64_t j = 0; j < s.extent; ++j) {
              const int64_t idx = base + j * s.inner;
              dot += static_cast<double>(g[idx]) * y[idx];
            }
            for (int64_t j = 0; j < s.extent; ++j) {
              const int64_t idx = base + j * s.inner;
              dx[idx] += static_cast<float>(y[idx] * (g[idx] - dot));
            }
          }
      });
  const float* xv = x.data().data();
  float* yv = out.mut_data().data();
  for (int64_t o = 0; o < s.outer; ++o)
    for (int64_t i = 0; i < s.inner; ++i) {
      const int64_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < s.extent; ++j)
        mx = std::max(mx, static_cast<double>(xv[base + j * s.inner]));
      double denom = 0.0;
      for (int64_t j = 0; j < s.extent; ++j)
        denom += std::exp(static_cast<double>(xv[base + j * s.inner]) - mx);
      for (int64_t j = 0; j < s.extent; ++j) {
        const int64_t idx = base + j * s.inner;
        yv[idx] = static_cast<float>(std::exp(static_cast<double>(xv[idx]) - mx) / denom);
      }
    }
  return out;
}

namespace {

// Shared backward for layer/group norm: per-slice statistics, arbitrary
// affine granularity. `affine_of` maps a flat in-slice position plus slice
// id to the affine parameter index.
struct NormBuffers {
  std::vector<float> y_hat;     // normalized pre-affine values
  std::vector<float> inv_sigma; // per slice
};

}  // namespace

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, int axis,
                 float eps) {
  const AxisSplit s = split_at(x.shape(), axis, "layernorm");
  if (gain.rank() != 1 || gain.dim(0) != s.extent || shift.rank() != 1 ||
      shift.dim(0) != s.extent)
    throw ShapeError("layernorm: gain/shift must be [" + std::to_string(s.extent) +
                     "], got " + shape_str(gain.shape()) + " and " +
                     shape_str(shift.shape()));

  auto buf = std::make_shared<NormBuffers>();
  buf->y_hat.resize(static_cast<size_t>(x.numel()));
  buf->inv_sigma.resize(static_cast<size_t>(s.outer * s.inner));

  Tensor out = detail::make_op_output(
      x.shape(), "layernorm", {x, gain, shift},
      [x, gain, shift, s, buf](const TensorImpl& self) {
        const float* g = self.grad.data();
        const float* gv = gain.data().data();
        const double inv_n = 1.0 / static_cast<double>(s.extent);
        if (x.impl()->requires_grad) {
          auto& dx = x.impl()->ensure_grad();
          for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t i = 0; i < s.inner; ++i) {
              const int64_t base = o * s.extent * s.inner + i;
              const float is = buf->inv_sigma[o * s.inner + i];
              double m1 = 0.0, m2 = 0.0;
              for (int64_t j = 0; j < s.extent; ++j) {
                const int64_t idx = base + j * s.inner;
                const double gh = static_cast<double>(gv[j]) * g[idx];
                m1 += gh;
                m2 += gh * buf->y_hat[idx];
              }
              m1 *= inv_n;
              m2 *= inv_n;
              for (int64_t j = 0; j < s.extent; ++j) {
                const int64_t idx = base + j * s.inner;
                const double gh = static_cast<double>(gv[j]) * g[idx];
                dx[idx] += static_cast<float>((gh - m1 - buf->y_hat[idx] * m2) * is);
              }
            }
        }
        if (gain.impl()->requires_grad || shift.impl()->requires_grad) {
          std::vector<double> dg(static_cast<size_t>(s.extent), 0.0);
          std::vector<double> db(static_cast<size_t>(s.extent), 0.0);
          for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t j = 0; j < s.extent; ++j)
              for (int64_t i = 0; i < s.inner; ++i) {
                const int64_t idx = (o * s.extent + j) * s.inner + i;
                dg[j] += static_cast<double>(g[idx]) * buf->y_hat[idx];
                db[j] += g[idx];
              }
          if (gain.impl()->requires_grad) {
            auto& acc = gain.impl()->ensure_grad();
            for (int64_t j = 0; j < s.extent; ++j) acc[j] += static_cast<float>(dg[j]);
          }
          if (shift.impl()->requires_grad) {
            auto& acc = shift.impl()->ensure_grad();
            for (int64_t j = 0; j < s.extent; ++j) acc[j] += static_cast<float>(db[j]);
          }
        }
      });

  const float* xv = x.data().data();
  const float* gv = gain.data().data();
  const float* sv = shift.data().data();
  float* yv = out.mut_data().data();
  for (int64_t o = 0; o < s.outer; ++o)
    for (int64_t i = 0; i < s.inner; ++i) {
      const int64_t base = o * s.extent * s.inner + i;
      double mean = 0.0;
      for (int64_t j = 0; j < s.extent; ++j) mean += xv[base + j * s.inner];
      mean /= static_cast<double>(s.extent);
      double var = 0.0;
      for (int64_t j = 0; j < s.extent; ++j) {
        const double d = xv[base + j * s.inner] - mean;
        var += d * d;
      }
      var /= static_cast<double>(s.extent);
      const double inv_sigma = 1.0 / std::sqrt(var + eps);
      buf->inv_sigma[o * s.inner + i] = static_cast<float>(inv_sigma);
      for (int64_t j = 0; j < s.extent; ++j) {
        const int64_t idx = base + j * s.inner;
        const float yh = static_cast<float>((xv[idx] - mean) * inv_sigma);
        buf->y_hat[idx] = yh;
        yv[idx] = gv[j] * yh + sv[j];
      }
    }
  return out;
}

Tensor groupnorm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                 int64_t groups, float eps) {
  const Shape& s = x.shape();
  if (s.size() < 2)
    throw ShapeError("groupnorm: input must be [N,C,...], got " + shape_str(s));
  const int64_t n = s[0], c = s[1];
  if (groups < 1 || c % groups != 0)
    throw ShapeError("groupnorm: channels (" + std::to_string(c) +
                     ") not divisible by groups (" + std::to_string(groups) + ")");
  if (gain.rank() != 1 || gain.dim(0) != c || shift.rank() != 1 || shift.dim(0) != c)
    throw ShapeError("groupnorm: gain/shift must be [C=" + std::to_string(c) + "]");
  int64_t spatial = 1;
  for (size_t i = 2; i < s.size(); ++i) spatial *= s[i];
  const int64_t cg = c / groups;           // channels per group
  const int64_t slice = cg * spatial;      // elements per (n, group)

  auto buf = std::make_shared<NormBuffers>();
  buf->y_hat.resize(static_cast<size_t>(x.numel()));
  buf->inv_sigma.resize(static_cast<size_t>(n * groups));

  Tensor out = detail::make_op_output(
      x.shape(), "groupnorm", {x, gain, shift},
      [x, gain, shift, n, c, groups, cg, spatial, slice, buf](const TensorImpl& self) {
        const float* g = self.grad.data();
        const float* gv = gain.data().data();
        const double inv_cnt = 1.0 / static_cast<double>(slice);
        if (x.impl()->requires_grad) {
          auto& dx = x.impl()->ensure_grad();
          for (int64_t ni = 0; ni < n; ++ni)
            for (int64_t gi = 0; gi < groups; ++gi) {
              const int64_t base = (ni * c + gi * cg) * spatial;
              const float is = buf->inv_sigma[ni * groups + gi];
              double m1 = 0.0, m2 = 0.0;
              for (int64_t cc = 0; cc < cg; ++cc) {
                const double gain_c = gv[gi * cg + cc];
                const float* grow = g + base + cc * spatial;
                const float* yrow = buf->y_hat.data() + base + cc * spatial;
                for (int64_t j = 0; j < spatial; ++j) {
                  const double gh = gain_c * grow[j];
                  m1 += gh;
                  m2 += gh * yrow[j];
                }
              }
              m1 *= inv_cnt;
              m2 *= inv_cnt;
              for (int64_t cc = 0; cc < cg; ++cc) {
                const float gain_c = gv[gi * cg + cc];
                const float* grow = g + base + cc * spatial;
                const float* yrow = buf->y_hat.data() + base + cc * spatial;
                float* drow = dx.data() + base + cc * spatial;
                const float m1f = static_cast<float>(m1);
                const float m2f = static_cast<float>(m2);
                for (int64_t j = 0; j < spatial; ++j)
                  drow[j] += (gain_c * grow[j] - m1f - yrow[j] * m2f) * is;
              }
            }
        }
        if (gain.impl()->requires_grad || shift.impl()->requires_grad) {
          std::vector<double> dg(static_cast<size_t>(c), 0.0);
          std::vector<double> db(static_cast<size_t>(c), 0.0);
          for (int64_t ni = 0; ni < n; ++ni)
            for (int64_t ch = 0; ch < c; ++ch) {
              const int64_t base = (ni * c + ch) * spatial;
              for (int64_t j = 0; j < spatial; ++j) {
                dg[ch] += static_cast<double>(g[base + j]) * buf->y_hat[base + j];
                db[ch] += g[base + j];
              }
            }
          if (gain.impl()->requires_grad) {
            auto& acc = gain.impl()->ensure_grad();
            for (int64_t ch = 0; ch < c; ++ch) acc[ch] += static_cast<float>(dg[ch]);
          }
          if (shift.impl()->requires_grad) {
            auto& acc = shift.impl()->ensure_grad();
            for (int64_t ch = 0; ch < c; ++ch) acc[ch] += static_cast<float>(db[ch]);
          }
        }
      });

  const float* xv = x.data().data();
  const float* gv = gain.data().data();
  const float* sv = shift.data().data();
  float* yv = out.mut_data().data();
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t gi = 0; gi < groups; ++gi) {
      const int64_t base = (ni * c + gi * cg) * spatial;
      double mean = 0.0;
      for (int64_t j = 0; j < slice; ++j) mean += xv[base + j];
      mean /= static_cast<double>(slice);
      double var = 0.0;
      for (int64_t j = 0; j < slice; ++j) {
        const double d = xv[base + j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(slice);
      const double inv_sigma = 1.0 / std::sqrt(var + eps);
      buf->inv_sigma[ni * groups + gi] = static_cast<float>(inv_sigma);
      const float meanf = static_cast<float>(mean);
      const float isf = static_cast<float>(inv_sigma);
      for (int64_t cc = 0; cc < cg; ++cc) {
        const float gain_c = gv[gi * cg + cc];
        const float shift_c = sv[gi * cg + cc];
        const float* xrow = xv + base + cc * spatial;
        float* yrow = yv + base + cc * spatial;
        float* hrow = buf->y_hat.data() + base + cc * spatial;
        for (int64_t j = 0; j < spatial; ++j) {
          const float yh = (xrow[j] - meanf) * isf;
          hrow[j] = yh;
          yrow[j] = gain_c * yh + shift_c;
        }
      }
    }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2)
    throw ShapeError("cross_entropy: logits must be [N,K], got " + shape_str(s));
  const int64_t n = s[0], k = s[1];
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  for (int64_t y : labels)
    if (y < 0 || y >= k) throw ValueError("cross_entropy: label out of range");

  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(n * k));
  const float* z = logits.data().data();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(z[i * k + j]));
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z[i * k + j]) - mx);
    const double lse = mx + std::log(denom);
    loss += lse - static_cast<double>(z[i * k + labels[static_cast<size_t>(i)]]);
    for (int64_t j = 0; j < k; ++j)
      (*probs)[static_cast<size_t>(i * k + j)] =
          static_cast<float>(std::exp(static_cast<double>(z[i * k + j]) - lse));
  }
  loss /= static_cast<double>(n);

  auto labels_copy = std::make_shared<std::vector<int64_t>>(labels);
  Tensor out = detail::make_op_output(
      {}, "cross_entropy", {logits},
      [logits, probs, labels_copy, n, k](const TensorImpl& self) {
        if (!logits.impl()->requires_grad) return;
        auto& dz = logits.impl()->ensure_grad();
        const float g = self.grad[0] / static_cast<float>(n);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < k; ++j) {
            const float onehot = (j == (*labels_copy)[static_cast<size_t>(i)]) ? 1.0f : 0.0f;
            dz[i * k + j] += g * ((*probs)[static_cast<size_t>(i * k + j)] - onehot);
          }
      });
  out.mut_data()[0] = static_cast<float>(loss);
  return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    throw ShapeError("bce_with_logits: shape mismatch " + shape_str(logits.shape()) +
                     " vs " + shape_str(targets.shape()));
  const int64_t n = logits.numel();
  const float* z = logits.data().data();
  const float* t = targets.data().data();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double zi = z[i], ti = t[i];
    loss += std::max(zi, 0.0) - zi * ti + std::log1p(std::exp(-std::abs(zi)));
  }
  loss /= static_cast<double>(n);

  Tensor out = detail::make_op_output(
      {}, "bce_with_logits", {logits, targets},
      [logits, targets, n](const TensorImpl& self) {
        const float g = self.grad[0] / static_cast<float>(n);
        const float* z = logits.data().data();
        const float* t = targets.data().data();
        if (logits.impl()->requires_grad) {
          auto& dz = logits.impl()->ensure_grad();
          for (int64_t i = 0; i < n; ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
            dz[i] += g * static_cast<float>(sig - t[i]);
          }
        }
        if (targets.impl()->requires_grad) {
          auto& dt = targets.impl()->ensure_grad();
          for (int64_t i = 0; i < n; ++i) dt[i] += g * (-z[i]);
        }
      });
  out.mut_data()[0] = static_cast<float>(loss);
  return out;
}

}  // namespace tristream
