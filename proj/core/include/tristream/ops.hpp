#pragma once

#include <vector>

#include "tristream/rng.hpp"
#include "tristream/tensor.hpp"

namespace tristream {

struct Triple {
  int64_t t = 1;
  int64_t h = 1;
  int64_t w = 1;
};

// --- convolution / pooling -------------------------------------------------

// Cross-correlation of input [N,C,T,H,W] with weight [Co,C,kt,kh,kw] plus
// per-channel bias [Co]. Output extent per axis:
//   floor((in + 2*pad - dil*(k-1) - 1) / stride) + 1
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Triple stride = {1, 1, 1}, Triple padding = {0, 0, 0},
              Triple dilation = {1, 1, 1});

// Max pooling over [N,C,T,H,W] windows; backward routes each window's
// gradient to its max, ties broken by lowest flat index.
Tensor maxpool3d(const Tensor& input, Triple kernel, Triple stride);

// --- linear algebra ---------------------------------------------------------

// a [..,m,k] x b [..,k,n] -> [..,m,n]. Leading dims must match exactly, or
// b may omit them entirely (shared right operand across the batch).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose_last2(const Tensor& x);

// --- normalization / activation ---------------------------------------------

Tensor softmax(const Tensor& x, int axis);

// Normalizes each 1-D slice along `axis` to zero mean / unit variance
// (population variance, eps floor), then applies per-position affine
// gain/shift of shape [extent(axis)].
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                 int axis, float eps = 1e-5f);

// Group normalization over [N,C,...]: statistics per (sample, group of
// channels), per-channel affine. groups=1 normalizes the whole feature map
// of each sample.
Tensor groupnorm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                 int64_t groups = 1, float eps = 1e-5f);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

// --- elementwise / broadcast ------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float c);
// alpha is a learnable scalar tensor; d_alpha = sum(g * x).
Tensor scale(const Tensor& x, const Tensor& alpha);
// Adds bias of shape [extent(axis)] along `axis`.
Tensor bias_add(const Tensor& x, const Tensor& bias, int axis);

// Inverted dropout: training zeroes with probability p and scales survivors
// by 1/(1-p); eval is the identity.
Tensor dropout(const Tensor& x, float p, bool training, Rng& rng);

// --- shape ops ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);
// [.., d, ..] -> [.., d*repeats, ..], each index repeated `repeats` times
// consecutively (nearest-neighbor upsampling along the axis).
Tensor repeat_interleave(const Tensor& x, int64_t repeats, int axis);

// --- reductions ---------------------------------------------------------------

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// Removes the given axes, averaging over them. Axes must be distinct.
Tensor mean_axes(const Tensor& x, std::vector<int> axes);
// Max over the trailing `tail_axes` axes; first-index tie-break.
Tensor reduce_max_tail(const Tensor& x, int tail_axes);

// --- losses --------------------------------------------------------------------

// Mean softmax cross-entropy over rows of logits [N,K].
Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels);
// Mean binary cross-entropy with logits; targets in [0,1], same shape.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// --- non-differentiating helpers -----------------------------------------------

// Permutes raw data (no graph); `perm` maps output axis -> input axis.
Tensor permute_copy(const Tensor& x, const std::vector<int>& perm);
// Stacks equal-shape tensors along a fresh leading axis (no graph).
Tensor stack_batch(const std::vector<Tensor>& xs);

Shape conv3d_output_shape(const Shape& input, const Shape& weight, Triple stride,
                          Triple padding, Triple dilation);

}  // namespace tristream
