#pragma once

#include <array>
#include <utility>
#include <vector>

#include "tristream/layers.hpp"

namespace tristream {

// softmax(Q K^T / sqrt(d_k)) V for Q,K [..,T,d_k], V [..,T,d_v].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Post-norm transformer block: h-way self-attention with concatenated head
// outputs projected back to the input width, residual + layer norm, then a
// relu FFN (hidden 4*D) with its own residual + norm. No positional
// encoding, so the block is permutation-equivariant over T.
class AttentionHead {
 public:
  static AttentionHead make(int64_t dim, int heads, Rng& rng);

  Tensor forward(const Tensor& x) const;  // [N,T,D] -> [N,T,D]
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t output_dim() const { return dim_; }
  int heads() const { return heads_; }

  std::vector<Tensor> wq, wk, wv;  // per head, [D, d_k] / [D, d_v]
  LinearLayer out_proj;            // [h*d_v, D]
  LinearLayer ffn1, ffn2;
  Tensor ln1_gain, ln1_shift, ln2_gain, ln2_shift;

 private:
  int heads_ = 1;
  int64_t dim_ = 0, d_k_ = 0, d_v_ = 0;
};

struct LstmCellParams {
  Tensor wx;  // [in, 4H], gate order i,f,o,g
  Tensor wh;  // [H, 4H]
  Tensor b;   // [4H]
  int64_t hidden = 0;

  // Xavier input weights, orthogonal recurrent blocks, forget bias 1.
  static LstmCellParams make(int64_t input_dim, int64_t hidden, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// Canonical gates: i,f,o sigmoid, g tanh; c' = f*c + i*g; h' = o*tanh(c').
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmCellParams& p);

// Two stacked layers per direction; per-timestep outputs of the top forward
// and top backward layers are concatenated to [N,T,2H].
class BiLstmHead {
 public:
  static BiLstmHead make(int64_t input_dim, int64_t hidden, Rng& rng);

  Tensor forward(const Tensor& x) const;  // [N,T,D] -> [N,T,2H]
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t output_dim() const { return 2 * hidden_; }

  std::array<LstmCellParams, 2> fwd;
  std::array<LstmCellParams, 2> bwd;

 private:
  int64_t hidden_ = 0;
};

// Temporal mean pool followed by an affine map to class logits; dropout on
// the pooled feature during training.
struct Classifier {
  LinearLayer fc;

  static Classifier make(int64_t input_dim, int64_t num_classes, Rng& rng);
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) const;  // [N,T,D'] -> [N,K]
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace tristream
