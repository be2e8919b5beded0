#pragma once

// Brute-force reference implementations used across the unit and acceptance
// suites. Deliberately written as direct loops over definitions, independent
// of the op implementations they check.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tristream/metrics.hpp"
#include "tristream/ops.hpp"

namespace oracle {

using tristream::Shape;
using tristream::Tensor;
using tristream::Triple;

// Six nested loops over the cross-correlation definition.
inline Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, Triple stride,
                     Triple pad, Triple dil) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const int64_t N = xs[0], C = xs[1], T = xs[2], H = xs[3], W = xs[4];
  const int64_t Co = ws[0], kt = ws[2], kh = ws[3], kw = ws[4];
  const int64_t ot = (T + 2 * pad.t - dil.t * (kt - 1) - 1) / stride.t + 1;
  const int64_t oh = (H + 2 * pad.h - dil.h * (kh - 1) - 1) / stride.h + 1;
  const int64_t ow = (W + 2 * pad.w - dil.w * (kw - 1) - 1) / stride.w + 1;
  Tensor out = Tensor::zeros({N, Co, ot, oh, ow});
  auto X = x.data();
  auto Wd = w.data();
  auto B = b.data();
  auto Y = out.mut_data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t t = 0; t < ot; ++t)
        for (int64_t y = 0; y < oh; ++y)
          for (int64_t z = 0; z < ow; ++z) {
            double acc = B[co];
            for (int64_t c = 0; c < C; ++c)
              for (int64_t a = 0; a < kt; ++a)
                for (int64_t i = 0; i < kh; ++i)
                  for (int64_t j = 0; j < kw; ++j) {
                    const int64_t st = t * stride.t - pad.t + a * dil.t;
                    const int64_t sy = y * stride.h - pad.h + i * dil.h;
                    const int64_t sz = z * stride.w - pad.w + j * dil.w;
                    if (st < 0 || st >= T || sy < 0 || sy >= H || sz < 0 || sz >= W)
                      continue;
                    acc += static_cast<double>(
                               X[((n * C + c) * T + st) * H * W + sy * W + sz]) *
                           Wd[(((co * C + c) * kt + a) * kh + i) * kw + j];
                  }
            Y[(((n * Co + co) * ot + t) * oh + y) * ow + z] = static_cast<float>(acc);
          }
  return out;
}

// Exhaustive window scan.
inline Tensor maxpool3d(const Tensor& x, Triple kernel, Triple stride) {
  const Shape& xs = x.shape();
  const int64_t N = xs[0], C = xs[1], T = xs[2], H = xs[3], W = xs[4];
  const int64_t ot = (T - kernel.t) / stride.t + 1;
  const int64_t oh = (H - kernel.h) / stride.h + 1;
  const int64_t ow = (W - kernel.w) / stride.w + 1;
  Tensor out = Tensor::zeros({N, C, ot, oh, ow});
  auto X = x.data();
  auto Y = out.mut_data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t t = 0; t < ot; ++t)
        for (int64_t y = 0; y < oh; ++y)
          for (int64_t z = 0; z < ow; ++z) {
            float best = -std::numeric_limits<float>::infinity();
            for (int64_t a = 0; a < kernel.t; ++a)
              for (int64_t i = 0; i < kernel.h; ++i)
                for (int64_t j = 0; j < kernel.w; ++j)
                  best = std::max(best,
                                  X[((n * C + c) * T + t * stride.t + a) * H * W +
                                    (y * stride.h + i) * W + (z * stride.w + j)]);
            Y[(((n * C + c) * ot + t) * oh + y) * ow + z] = best;
          }
  return out;
}

// Triple loop.
inline Tensor matmul2d(const Tensor& a, const Tensor& b) {
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n});
  auto A = a.data();
  auto B = b.data();
  auto Y = out.mut_data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t l = 0; l < k; ++l)
        acc += static_cast<double>(A[i * k + l]) * B[l * n + j];
      Y[i * n + j] = static_cast<float>(acc);
    }
  return out;
}

// Definitional layer norm over the middle axis of [outer, extent, inner].
inline Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                        double eps) {
  const int64_t outer = x.shape()[0], extent = x.shape()[1], inner = x.shape()[2];
  Tensor out = Tensor::zeros(x.shape());
  auto X = x.data();
  auto Y = out.mut_data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      double mean = 0.0;
      for (int64_t j = 0; j < extent; ++j) mean += X[(o * extent + j) * inner + i];
      mean /= static_cast<double>(extent);
      double var = 0.0;
      for (int64_t j = 0; j < extent; ++j) {
        const double d = X[(o * extent + j) * inner + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(extent);
      for (int64_t j = 0; j < extent; ++j) {
        const double yh = (X[(o * extent + j) * inner + i] - mean) / std::sqrt(var + eps);
        Y[(o * extent + j) * inner + i] =
            static_cast<float>(gain.data()[j] * yh + shift.data()[j]);
      }
    }
  return out;
}

// Per-query-position loop over the attention definition.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const int64_t T = q.shape()[0], dk = q.shape()[1], dv = v.shape()[1];
  Tensor out = Tensor::zeros({T, dv});
  auto Q = q.data();
  auto K = k.data();
  auto V = v.data();
  auto Y = out.mut_data();
  for (int64_t i = 0; i < T; ++i) {
    std::vector<double> logits(static_cast<size_t>(T));
    for (int64_t j = 0; j < T; ++j) {
      double dot = 0.0;
      for (int64_t d = 0; d < dk; ++d)
        dot += static_cast<double>(Q[i * dk + d]) * K[j * dk + d];
      logits[static_cast<size_t>(j)] = dot / std::sqrt(static_cast<double>(dk));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      denom += l;
    }
    for (int64_t d = 0; d < dv; ++d) {
      double acc = 0.0;
      for (int64_t j = 0; j < T; ++j)
        acc += logits[static_cast<size_t>(j)] / denom * V[j * dv + d];
      Y[i * dv + d] = static_cast<float>(acc);
    }
  }
  return out;
}

// Scalar-by-scalar LSTM cell over the canonical equations.
struct LstmOracleOut {
  std::vector<double> h, c;
};

inline LstmOracleOut lstm_cell(const std::vector<double>& x, const std::vector<double>& h_prev,
                               const std::vector<double>& c_prev,
                               const Tensor& wx, const Tensor& wh, const Tensor& b,
                               int64_t hidden) {
  const int64_t din = static_cast<int64_t>(x.size());
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> gates(static_cast<size_t>(4 * hidden), 0.0);
  for (int64_t g = 0; g < 4 * hidden; ++g) {
    double acc = b.data()[g];
    for (int64_t i = 0; i < din; ++i)
      acc += x[static_cast<size_t>(i)] * wx.data()[i * 4 * hidden + g];
    for (int64_t i = 0; i < hidden; ++i)
      acc += h_prev[static_cast<size_t>(i)] * wh.data()[i * 4 * hidden + g];
    gates[static_cast<size_t>(g)] = acc;
  }
  LstmOracleOut out;
  out.h.resize(static_cast<size_t>(hidden));
  out.c.resize(static_cast<size_t>(hidden));
  for (int64_t j = 0; j < hidden; ++j) {
    const double i_g = sig(gates[static_cast<size_t>(j)]);
    const double f_g = sig(gates[static_cast<size_t>(hidden + j)]);
    const double o_g = sig(gates[static_cast<size_t>(2 * hidden + j)]);
    const double g_g = std::tanh(gates[static_cast<size_t>(3 * hidden + j)]);
    out.c[static_cast<size_t>(j)] = f_g * c_prev[static_cast<size_t>(j)] + i_g * g_g;
    out.h[static_cast<size_t>(j)] = o_g * std::tanh(out.c[static_cast<size_t>(j)]);
  }
  return out;
}

// Direct bilinear sampling of an ROI grid (same half-pixel convention the
// implementation documents), written against the definition.
inline std::vector<double> roi_bilinear(const Tensor& feat, int64_t n,
                                        const tristream::Box& box, int out_h,
                                        int out_w) {
  const Shape& s = feat.shape();
  const int64_t C = s[1], T = s[2], H = s[3], W = s[4];
  const double fy1 = box.y1 * H, fy2 = box.y2 * H;
  const double fx1 = box.x1 * W, fx2 = box.x2 * W;
  std::vector<double> out;
  auto sample = [&](int64_t c, int64_t t, double py, double px) {
    py = std::clamp(py, 0.0, static_cast<double>(H - 1));
    px = std::clamp(px, 0.0, static_cast<double>(W - 1));
    const int64_t y0 = static_cast<int64_t>(py), x0 = static_cast<int64_t>(px);
    const int64_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
    const double wy = py - y0, wx = px - x0;
    auto at = [&](int64_t y, int64_t x) {
      return static_cast<double>(
          feat.data()[((n * C + c) * T + t) * H * W + y * W + x]);
    };
    return (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
           wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
  };
  for (int64_t c = 0; c < C; ++c)
    for (int64_t t = 0; t < T; ++t)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          const double py = fy1 + (i + 0.5) * (fy2 - fy1) / out_h - 0.5;
          const double px = fx1 + (j + 0.5) * (fx2 - fx1) / out_w - 0.5;
          out.push_back(sample(c, t, py, px));
        }
  return out;
}

// Threshold-enumeration AP: for every score cutoff, rerun greedy matching
// from scratch, then integrate the max-precision envelope on a dense grid.
inline double average_precision(const std::vector<tristream::Detection>& dets,
                                const std::vector<tristream::BoxAnnotation>& gts,
                                int class_id, double iou_thresh) {
  std::vector<size_t> gt_idx;
  for (size_t i = 0; i < gts.size(); ++i)
    if (gts[i].has_class(class_id)) gt_idx.push_back(i);
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return dets[a].scores[static_cast<size_t>(class_id)] >
           dets[b].scores[static_cast<size_t>(class_id)];
  });

  auto greedy_prefix = [&](size_t prefix) {
    std::vector<bool> used(gt_idx.size(), false);
    int tp = 0;
    for (size_t oi = 0; oi < prefix; ++oi) {
      const auto& det = dets[order[oi]];
      double best = 0.0;
      int best_g = -1;
      for (size_t g = 0; g < gt_idx.size(); ++g) {
        if (used[g] || gts[gt_idx[g]].group != det.group) continue;
        const double v = tristream::iou(det.box, gts[gt_idx[g]].box);
        if (v >= iou_thresh && v > best) {
          best = v;
          best_g = static_cast<int>(g);
        }
      }
      if (best_g >= 0) {
        used[static_cast<size_t>(best_g)] = true;
        ++tp;
      }
    }
    return tp;
  };

  std::vector<double> precision, recall;
  for (size_t prefix = 1; prefix <= order.size(); ++prefix) {
    const int tp = greedy_prefix(prefix);
    precision.push_back(static_cast<double>(tp) / static_cast<double>(prefix));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_idx.size()));
  }
  // dense-grid integral of the interpolated envelope p(r) = max_{r' >= r} p(r')
  const int grid = 2'000'000;
  double area = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double r = (i + 0.5) / grid;
    double best = 0.0;
    for (size_t k = 0; k < recall.size(); ++k)
      if (recall[k] >= r) best = std::max(best, precision[k]);
    area += best / grid;
  }
  return area;
}

}  // namespace oracle
