#include "tristream/layers.hpp"

#include <cmath>

namespace tristream {

Conv3dLayer Conv3dLayer::make(int64_t cin, int64_t cout, Triple kernel, Triple stride,
                              Triple pad, Triple dil, Rng& rng) {
  Conv3dLayer layer;
  const int64_t fan_in = cin * kernel.t * kernel.h * kernel.w;
  const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
  layer.w = Tensor::randn({cout, cin, kernel.t, kernel.h, kernel.w}, rng, stddev, true);
  layer.b = Tensor::zeros({cout}, true);
  layer.stride = stride;
  layer.pad = pad;
  layer.dil = dil;
  return layer;
}

void Conv3dLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

int64_t Conv3dLayer::macs_per_output_element() const {
  return w.dim(1) * w.dim(2) * w.dim(3) * w.dim(4);
}

NormLayer NormLayer::make(int64_t channels) {
  NormLayer layer;
  layer.gain = Tensor::full({channels}, 1.0f, true);
  layer.shift = Tensor::zeros({channels}, true);
  return layer;
}

void NormLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".shift", shift});
}

LinearLayer LinearLayer::make(int64_t in, int64_t out, Rng& rng) {
  LinearLayer layer;
  const float bound = std::sqrt(6.0f / static_cast<float>(in + out));
  layer.w = Tensor::rand_uniform({in, out}, rng, -bound, bound, true);
  layer.b = Tensor::zeros({out}, true);
  return layer;
}

void LinearLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

Tensor orthogonal_matrix(int64_t n, Rng& rng) {
  std::vector<std::vector<double>> rows(static_cast<size_t>(n),
                                        std::vector<double>(static_cast<size_t>(n)));
  for (auto& row : rows)
    for (auto& v : row) v = rng.normal();
  // modified Gram-Schmidt with re-draw on near-degenerate rows
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (size_t k = 0; k < rows[i].size(); ++k) dot += rows[i][k] * rows[j][k];
      for (size_t k = 0; k < rows[i].size(); ++k) rows[i][k] -= dot * rows[j][k];
    }
    double norm = 0.0;
    for (double v : rows[i]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-8) {
      for (auto& v : rows[i]) v = rng.normal();
      --i;
      continue;
    }
    for (auto& v : rows[i]) v /= norm;
  }
  Tensor out = Tensor::zeros({n, n});
  float* d = out.mut_data().data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      d[i * n + j] = static_cast<float>(rows[static_cast<size_t>(i)][static_cast<size_t>(j)]);
  return out;
}

}  // namespace tristream
