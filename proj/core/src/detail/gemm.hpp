#pragma once

#include <cstdint>
#include <vector>

namespace tristream::detail {

// Row-major f32 GEMM kernels with f64 accumulation. Every output element is
// produced by exactly one thread with a fixed-order inner loop, so results
// are bit-identical for any thread count. Scratch buffers are thread_local
// and reused across calls; the kernels run on many small matrices.

inline std::vector<double>& gemm_scratch(size_t n) {
  thread_local std::vector<double> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

// C[m,n] = A[m,k] * B[k,n]  (+ C if accumulate)
inline void gemm_nn(const float* a, const float* b, float* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate = false) {
#pragma omp parallel for schedule(static) if (m > 8)
  for (int64_t i = 0; i < m; ++i) {
    double* acc = gemm_scratch(static_cast<size_t>(n)).data();
    for (int64_t j = 0; j < n; ++j) acc[j] = 0.0;
    const float* arow = a + i * k;
    for (int64_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const float* brow = b + l * n;
#pragma omp simd
      for (int64_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    float* crow = c + i * n;
    if (accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<float>(crow[j] + acc[j]);
    } else {
      for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
    }
  }
}

// C[m,n] = A[m,k] * B[n,k]^T  (+ C if accumulate)
inline void gemm_nt(const float* a, const float* b, float* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate = false) {
#pragma omp parallel for schedule(static) if (m > 8)
  for (int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int64_t l = 0; l < k; ++l) acc += static_cast<double>(arow[l]) * brow[l];
      crow[j] = static_cast<float>(accumulate ? crow[j] + acc : acc);
    }
  }
}

// C[k,n] = A[m,k]^T * B[m,n]  (+ C if accumulate). Output is typically
// weight-sized, so the double staging buffer stays small.
inline void gemm_tn(const float* a, const float* b, float* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate = false) {
  double* acc = gemm_scratch(static_cast<size_t>(k * n)).data();
  for (int64_t i = 0; i < k * n; ++i) acc[i] = 0.0;
  for (int64_t l = 0; l < m; ++l) {
    const float* arow = a + l * k;
    const float* brow = b + l * n;
    for (int64_t i = 0; i < k; ++i) {
      const double av = arow[i];
      double* crow = acc + i * n;
#pragma omp simd
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  for (int64_t i = 0; i < k * n; ++i)
    c[i] = static_cast<float>(accumulate ? c[i] + acc[i] : acc[i]);
}

}  // namespace tristream::detail
