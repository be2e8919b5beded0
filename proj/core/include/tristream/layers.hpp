#pragma once

#include <string>
#include <vector>

#include "tristream/ops.hpp"
#include "tristream/rng.hpp"
#include "tristream/tensor.hpp"

namespace tristream {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

// Per-step forward context: training toggles dropout, rng feeds it.
struct ForwardCtx {
  bool training = false;
  float dropout_p = 0.0f;
  Rng* rng = nullptr;
};

struct Conv3dLayer {
  Tensor w;  // [Co,Ci,kt,kh,kw]
  Tensor b;  // [Co]
  Triple stride{1, 1, 1};
  Triple pad{0, 0, 0};
  Triple dil{1, 1, 1};

  static Conv3dLayer make(int64_t cin, int64_t cout, Triple kernel, Triple stride,
                          Triple pad, Triple dil, Rng& rng);

  Tensor forward(const Tensor& x) const { return conv3d(x, w, b, stride, pad, dil); }
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t macs_per_output_element() const;
};

// Group normalization with a single group: per-sample statistics over the
// whole feature map, per-channel affine.
struct NormLayer {
  Tensor gain;   // [C]
  Tensor shift;  // [C]

  static NormLayer make(int64_t channels);
  Tensor forward(const Tensor& x) const { return groupnorm(x, gain, shift, 1); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LinearLayer {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  static LinearLayer make(int64_t in, int64_t out, Rng& rng);

  // x [.., in] -> [.., out]
  Tensor forward(const Tensor& x) const {
    return bias_add(matmul(x, w), b, static_cast<int>(x.rank()) - 1);
  }
  void collect(const std::string& prefix, ParamList& out) const;
};

// Square orthogonal matrix via Gram-Schmidt on a Gaussian draw.
Tensor orthogonal_matrix(int64_t n, Rng& rng);

}  // namespace tristream
