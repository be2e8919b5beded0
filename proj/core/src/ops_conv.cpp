#include <algorithm>
#include <cstring>
#include <limits>

#include "detail/gemm.hpp"
#include "tristream/ops.hpp"

namespace tristream {

namespace {

struct ConvDims {
  int64_t n, ci, t, h, w;
  int64_t co, kt, kh, kw;
  int64_t ot, oh, ow;
  int64_t cols;     // K = ci*kt*kh*kw
  int64_t outspat;  // M = ot*oh*ow
};

// two reusable per-thread f32 scratch slots (col and dcol can be live at once)
float* conv_scratch(int slot, size_t n) {
  thread_local std::vector<float> buf[2];
  if (buf[slot].size() < n) buf[slot].resize(n);
  return buf[slot].data();
}

int64_t out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad,
                   int64_t dil, const char* axis) {
  const int64_t eff = dil * (k - 1) + 1;
  if (in + 2 * pad < eff)
    throw ShapeError(std::string("conv3d: effective kernel exceeds padded input on ") +
                     axis + " axis (" + std::to_string(eff) + " > " +
                     std::to_string(in + 2 * pad) + ")");
  return (in + 2 * pad - eff) / stride + 1;
}

ConvDims conv_dims(const Shape& in, const Shape& wt, Triple stride, Triple pad,
                   Triple dil) {
  if (in.size() != 5) throw ShapeError("conv3d: input must be [N,C,T,H,W], got " + shape_str(in));
  if (wt.size() != 5) throw ShapeError("conv3d: weight must be [Co,C,kt,kh,kw], got " + shape_str(wt));
  if (dil.t < 1 || dil.h < 1 || dil.w < 1) throw ShapeError("conv3d: dilation must be >= 1");
  if (stride.t < 1 || stride.h < 1 || stride.w < 1) throw ShapeError("conv3d: stride must be >= 1");
  if (in[1] != wt[1])
    throw ShapeError("conv3d: channel axis (1) mismatch, input has " +
                     std::to_string(in[1]) + " channels but weight expects " +
                     std::to_string(wt[1]));
  ConvDims d;
  d.n = in[0]; d.ci = in[1]; d.t = in[2]; d.h = in[3]; d.w = in[4];
  d.co = wt[0]; d.kt = wt[2]; d.kh = wt[3]; d.kw = wt[4];
  d.ot = out_extent(d.t, d.kt, stride.t, pad.t, dil.t, "temporal");
  d.oh = out_extent(d.h, d.kh, stride.h, pad.h, dil.h, "height");
  d.ow = out_extent(d.w, d.kw, stride.w, pad.w, dil.w, "width");
  d.cols = d.ci * d.kt * d.kh * d.kw;
  d.outspat = d.ot * d.oh * d.ow;
  return d;
}

// col is [K, M] row-major, K = ci*kt*kh*kw, M = ot*oh*ow.
void im2col(const float* x, const ConvDims& d, Triple stride, Triple pad,
            Triple dil, float* col) {
  int64_t row = 0;
  for (int64_t c = 0; c < d.ci; ++c) {
    const float* xc = x + c * d.t * d.h * d.w;
    for (int64_t it = 0; it < d.kt; ++it)
      for (int64_t ih = 0; ih < d.kh; ++ih)
        for (int64_t iw = 0; iw < d.kw; ++iw, ++row) {
          float* dst = col + row * d.outspat;
          for (int64_t ot = 0; ot < d.ot; ++ot) {
            const int64_t st = ot * stride.t - pad.t + it * dil.t;
            const bool t_ok = st >= 0 && st < d.t;
            for (int64_t oh = 0; oh < d.oh; ++oh) {
              const int64_t sh = oh * stride.h - pad.h + ih * dil.h;
              const bool h_ok = sh >= 0 && sh < d.h;
              float* drow = dst + (ot * d.oh + oh) * d.ow;
              if (!t_ok || !h_ok) {
                std::memset(drow, 0, sizeof(float) * d.ow);
                continue;
              }
              const float* src = xc + (st * d.h + sh) * d.w;
              for (int64_t ow = 0; ow < d.ow; ++ow) {
                const int64_t sw = ow * stride.w - pad.w + iw * dil.w;
                drow[ow] = (sw >= 0 && sw < d.w) ? src[sw] : 0.0f;
              }
            }
          }
        }
  }
}

// Scatter-add of col [K, M] back into the input gradient volume.
void col2im_add(const float* col, const ConvDims& d, Triple stride, Triple pad,
                Triple dil, float* dx) {
  int64_t row = 0;
  for (int64_t c = 0; c < d.ci; ++c) {
    float* xc = dx + c * d.t * d.h * d.w;
    for (int64_t it = 0; it < d.kt; ++it)
      for (int64_t ih = 0; ih < d.kh; ++ih)
        for (int64_t iw = 0; iw < d.kw; ++iw, ++row) {
          const float* src = col + row * d.outspat;
          for (int64_t ot = 0; ot < d.ot; ++ot) {
            const int64_t st = ot * stride.t - pad.t + it * dil.t;
            if (st < 0 || st >= d.t) continue;
            for (int64_t oh = 0; oh < d.oh; ++oh) {
              const int64_t sh = oh * stride.h - pad.h + ih * dil.h;
              if (sh < 0 || sh >= d.h) continue;
              const float* srow = src + (ot * d.oh + oh) * d.ow;
              float* drow = xc + (st * d.h + sh) * d.w;
              for (int64_t ow = 0; ow < d.ow; ++ow) {
                const int64_t sw = ow * stride.w - pad.w + iw * dil.w;
                if (sw >= 0 && sw < d.w) drow[sw] += srow[ow];
              }
            }
          }
        }
  }
}

}  // namespace

Shape conv3d_output_shape(const Shape& input, const Shape& weight, Triple stride,
                          Triple padding, Triple dilation) {
  const ConvDims d = conv_dims(input, weight, stride, padding, dilation);
  return {d.n, d.co, d.ot, d.oh, d.ow};
}

namespace {
// pointwise channel mix: no im2col needed
bool is_pointwise(const ConvDims& d, Triple stride, Triple pad, Triple dil) {
  (void)dil;
  return d.kt == 1 && d.kh == 1 && d.kw == 1 && stride.t == 1 && stride.h == 1 &&
         stride.w == 1 && pad.t == 0 && pad.h == 0 && pad.w == 0;
}
}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Triple stride, Triple padding, Triple dilation) {
  const ConvDims d = conv_dims(input.shape(), weight.shape(), stride, padding, dilation);
  if (bias.rank() != 1 || bias.dim(0) != d.co)
    throw ShapeError("conv3d: bias must be [Co=" + std::to_string(d.co) + "], got " +
                     shape_str(bias.shape()));

  Tensor out = detail::make_op_output(
      {d.n, d.co, d.ot, d.oh, d.ow}, "conv3d", {input, weight, bias},
      [input, weight, bias, stride, padding, dilation, d](const TensorImpl& self) {
        const float* g = self.grad.data();
        const int64_t in_stride = d.ci * d.t * d.h * d.w;
        const int64_t out_stride = d.co * d.outspat;

        const bool need_dx = input.impl()->requires_grad;
        const bool need_dw = weight.impl()->requires_grad;
        const bool need_db = bias.impl()->requires_grad;

        // W^T as [K, Co] for the input-gradient GEMM.
        std::vector<float> wt;
        if (need_dx) {
          wt.resize(static_cast<size_t>(d.cols * d.co));
          const float* w = weight.data().data();
          for (int64_t o = 0; o < d.co; ++o)
            for (int64_t r = 0; r < d.cols; ++r) wt[r * d.co + o] = w[o * d.cols + r];
        }

        std::vector<float> dw_partial;
        if (need_dw) dw_partial.assign(static_cast<size_t>(d.n * d.co * d.cols), 0.0f);
        float* dx = need_dx ? input.impl()->ensure_grad().data() : nullptr;

        const bool pointwise = is_pointwise(d, stride, padding, dilation);
#pragma omp parallel if (d.n > 1)
        {
          const size_t col_size = static_cast<size_t>(d.cols * d.outspat);
#pragma omp for schedule(static)
          for (int64_t n = 0; n < d.n; ++n) {
            const float* gn = g + n * out_stride;
            const float* xn = input.data().data() + n * in_stride;
            if (need_dw) {
              const float* col = xn;
              if (!pointwise) {
                float* buf = conv_scratch(0, col_size);
                im2col(xn, d, stride, padding, dilation, buf);
                col = buf;
              }
              detail::gemm_nt(gn, col, dw_partial.data() + n * d.co * d.cols, d.co,
                              d.outspat, d.cols);
            }
            if (need_dx) {
              if (pointwise) {
                detail::gemm_nn(wt.data(), gn, dx + n * in_stride, d.cols, d.co,
                                d.outspat, /*accumulate=*/true);
              } else {
                float* dcol = conv_scratch(1, col_size);
                detail::gemm_nn(wt.data(), gn, dcol, d.cols, d.co, d.outspat);
                col2im_add(dcol, d, stride, padding, dilation, dx + n * in_stride);
              }
            }
          }
        }

        if (need_dw) {
          auto& dw = weight.impl()->ensure_grad();
          const int64_t wsz = d.co * d.cols;
          for (int64_t i = 0; i < wsz; ++i) {
            double acc = dw[i];
            for (int64_t n = 0; n < d.n; ++n) acc += dw_partial[n * wsz + i];
            dw[i] = static_cast<float>(acc);
          }
        }
        if (need_db) {
          auto& db = bias.impl()->ensure_grad();
          for (int64_t o = 0; o < d.co; ++o) {
            double acc = db[o];
            for (int64_t n = 0; n < d.n; ++n) {
              const float* row = g + n * out_stride + o * d.outspat;
              for (int64_t m = 0; m < d.outspat; ++m) acc += row[m];
            }
            db[o] = static_cast<float>(acc);
          }
        }
      });

  const float* x = input.data().data();
  const float* w = weight.data().data();
  const float* b = bias.data().data();
  float* y = out.mut_data().data();
  const int64_t in_stride = d.ci * d.t * d.h * d.w;
  const int64_t out_stride = d.co * d.outspat;

  const bool pointwise = is_pointwise(d, stride, padding, dilation);
#pragma omp parallel if (d.n > 1)
  {
    const size_t col_size = static_cast<size_t>(d.cols * d.outspat);
#pragma omp for schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
      const float* col = x + n * in_stride;
      if (!pointwise) {
        float* buf = conv_scratch(0, col_size);
        im2col(x + n * in_stride, d, stride, padding, dilation, buf);
        col = buf;
      }
      float* yn = y + n * out_stride;
      detail::gemm_nn(w, col, yn, d.co, d.cols, d.outspat);
      for (int64_t o = 0; o < d.co; ++o) {
        const float bo = b[o];
        float* row = yn + o * d.outspat;
        for (int64_t m = 0; m < d.outspat; ++m) row[m] += bo;
      }
    }
  }
  return out;
}

Tensor maxpool3d(const Tensor& input, Triple kernel, Triple stride) {
  const Shape& in = input.shape();
  if (in.size() != 5)
    throw ShapeError("maxpool3d: input must be [N,C,T,H,W], got " + shape_str(in));
  if (stride.t < 1 || stride.h < 1 || stride.w < 1)
    throw ShapeError("maxpool3d: stride must be >= 1");
  const int64_t n = in[0], c = in[1], t = in[2], h = in[3], w = in[4];
  auto out_ext = [](int64_t e, int64_t k, int64_t s, const char* axis) {
    if (k < 1 || k > e)
      throw ShapeError(std::string("maxpool3d: kernel exceeds input on ") + axis + " axis");
    return (e - k) / s + 1;
  };
  const int64_t ot = out_ext(t, kernel.t, stride.t, "temporal");
  const int64_t oh = out_ext(h, kernel.h, stride.h, "height");
  const int64_t ow = out_ext(w, kernel.w, stride.w, "width");

  const int64_t planes = n * c;
  const int64_t in_plane = t * h * w;
  const int64_t out_plane = ot * oh * ow;
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(planes * out_plane));

  Tensor out = detail::make_op_output(
      {n, c, ot, oh, ow}, "maxpool3d", {input},
      [input, argmax, planes, out_plane, in_plane](const TensorImpl& self) {
        if (!input.impl()->requires_grad) return;
        auto& dx = input.impl()->ensure_grad();
        const float* g = self.grad.data();
        for (int64_t p = 0; p < planes; ++p)
          for (int64_t m = 0; m < out_plane; ++m)
            dx[p * in_plane + (*argmax)[p * out_plane + m]] += g[p * out_plane + m];
      });

  const float* x = input.data().data();
  float* y = out.mut_data().data();
  for (int64_t p = 0; p < planes; ++p) {
    const float* xp = x + p * in_plane;
    float* yp = y + p * out_plane;
    int64_t* ap = argmax->data() + p * out_plane;
    int64_t m = 0;
    for (int64_t it = 0; it < ot; ++it)
      for (int64_t ih = 0; ih < oh; ++ih)
        for (int64_t iw = 0; iw < ow; ++iw, ++m) {
          float best = -std::numeric_limits<float>::infinity();
          int64_t best_idx = 0;
          // strict > keeps the first (lowest flat index) maximum
          for (int64_t kt = 0; kt < kernel.t; ++kt)
            for (int64_t kh = 0; kh < kernel.h; ++kh)
              for (int64_t kw = 0; kw < kernel.w; ++kw) {
                const int64_t st = it * stride.t + kt;
                const int64_t sh = ih * stride.h + kh;
                const int64_t sw = iw * stride.w + kw;
                const int64_t idx = (st * h + sh) * w + sw;
                if (xp[idx] > best) {
                  best = xp[idx];
                  best_idx = idx;
                }
              }
          yp[m] = best;
          ap[m] = best_idx;
        }
  }
  return out;
}

}  // namespace tristream
