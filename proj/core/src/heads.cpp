#include "tristream/heads.hpp"

#include <cmath>

namespace tristream {

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() < 2 || k.rank() < 2 || v.rank() < 2)
    throw ShapeError("scaled_dot_attention: operands must have rank >= 2");
  const int64_t d_k = q.dim(q.rank() - 1);
  if (k.dim(k.rank() - 1) != d_k)
    throw ShapeError("scaled_dot_attention: query/key dimension mismatch (" +
                     std::to_string(d_k) + " vs " +
                     std::to_string(k.dim(k.rank() - 1)) + ")");
  if (k.dim(k.rank() - 2) != v.dim(v.rank() - 2))
    throw ShapeError("scaled_dot_attention: key/value length mismatch");
  Tensor scores = scale(matmul(q, transpose_last2(k)),
                        1.0f / std::sqrt(static_cast<float>(d_k)));
  Tensor weights = softmax(scores, static_cast<int>(scores.rank()) - 1);
  return matmul(weights, v);
}

AttentionHead AttentionHead::make(int64_t dim, int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0)
    throw ValueError("attention head: dim " + std::to_string(dim) +
                     " not divisible by heads " + std::to_string(heads));
  AttentionHead head;
  head.heads_ = heads;
  head.dim_ = dim;
  head.d_k_ = dim / heads;
  head.d_v_ = dim / heads;
  const float bound = std::sqrt(6.0f / static_cast<float>(dim + head.d_k_));
  for (int i = 0; i < heads; ++i) {
    head.wq.push_back(Tensor::rand_uniform({dim, head.d_k_}, rng, -bound, bound, true));
    head.wk.push_back(Tensor::rand_uniform({dim, head.d_k_}, rng, -bound, bound, true));
    head.wv.push_back(Tensor::rand_uniform({dim, head.d_v_}, rng, -bound, bound, true));
  }
  head.out_proj = LinearLayer::make(static_cast<int64_t>(heads) * head.d_v_, dim, rng);
  head.ffn1 = LinearLayer::make(dim, 4 * dim, rng);
  head.ffn2 = LinearLayer::make(4 * dim, dim, rng);
  head.ln1_gain = Tensor::full({dim}, 1.0f, true);
  head.ln1_shift = Tensor::zeros({dim}, true);
  head.ln2_gain = Tensor::full({dim}, 1.0f, true);
  head.ln2_shift = Tensor::zeros({dim}, true);
  return head;
}

Tensor AttentionHead::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != dim_)
    throw ShapeError("attention head: expected [N,T," + std::to_string(dim_) +
                     "], got " + shape_str(x.shape()));
  std::vector<Tensor> head_outs;
  head_outs.reserve(wq.size());
  for (size_t i = 0; i < wq.size(); ++i) {
    Tensor q = matmul(x, wq[i]);
    Tensor k = matmul(x, wk[i]);
    Tensor v = matmul(x, wv[i]);
    head_outs.push_back(scaled_dot_attention(q, k, v));
  }
  Tensor concat_heads = head_outs.size() == 1 ? head_outs[0] : concat(head_outs, 2);
  Tensor mha = out_proj.forward(concat_heads);
  Tensor y = layernorm(add(x, mha), ln1_gain, ln1_shift, 2);
  Tensor f = ffn2.forward(relu(ffn1.forward(y)));
  return layernorm(add(y, f), ln2_gain, ln2_shift, 2);
}

void AttentionHead::collect(const std::string& prefix, ParamList& out) const {
  for (size_t i = 0; i < wq.size(); ++i) {
    const std::string h = prefix + ".h" + std::to_string(i);
    out.push_back({h + ".wq", wq[i]});
    out.push_back({h + ".wk", wk[i]});
    out.push_back({h + ".wv", wv[i]});
  }
  out_proj.collect(prefix + ".out", out);
  ffn1.collect(prefix + ".ffn1", out);
  ffn2.collect(prefix + ".ffn2", out);
  out.push_back({prefix + ".ln1.gain", ln1_gain});
  out.push_back({prefix + ".ln1.shift", ln1_shift});
  out.push_back({prefix + ".ln2.gain", ln2_gain});
  out.push_back({prefix + ".ln2.shift", ln2_shift});
}

LstmCellParams LstmCellParams::make(int64_t input_dim, int64_t hidden, Rng& rng) {
  LstmCellParams p;
  p.hidden = hidden;
  const float bound = std::sqrt(6.0f / static_cast<float>(input_dim + hidden));
  p.wx = Tensor::rand_uniform({input_dim, 4 * hidden}, rng, -bound, bound, true);
  p.wh = Tensor::zeros({hidden, 4 * hidden}, true);
  {
    auto wh = p.wh.mut_data();
    for (int gate = 0; gate < 4; ++gate) {
      Tensor q = orthogonal_matrix(hidden, rng);
      const float* qd = q.data().data();
      for (int64_t r = 0; r < hidden; ++r)
        for (int64_t c = 0; c < hidden; ++c)
          wh[r * 4 * hidden + gate * hidden + c] = qd[r * hidden + c];
    }
  }
  p.b = Tensor::zeros({4 * hidden}, true);
  {
    // forget gate bias 1 (gate order i,f,o,g)
    auto b = p.b.mut_data();
    for (int64_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0f;
  }
  return p;
}

void LstmCellParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".wx", wx});
  out.push_back({prefix + ".wh", wh});
  out.push_back({prefix + ".b", b});
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmCellParams& p) {
  const int64_t hidden = p.hidden;
  if (x.rank() != 2 || h_prev.rank() != 2 || c_prev.rank() != 2)
    throw ShapeError("lstm_cell: inputs must be [N,*]");
  if (x.dim(1) != p.wx.dim(0))
    throw ShapeError("lstm_cell: input dim " + std::to_string(x.dim(1)) +
                     " does not match weights (" + std::to_string(p.wx.dim(0)) + ")");
  Tensor gates = bias_add(add(matmul(x, p.wx), matmul(h_prev, p.wh)), p.b, 1);
  Tensor i = sigmoid(slice(gates, 1, 0, hidden));
  Tensor f = sigmoid(slice(gates, 1, hidden, hidden));
  Tensor o = sigmoid(slice(gates, 1, 2 * hidden, hidden));
  Tensor g = tanh(slice(gates, 1, 3 * hidden, hidden));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

BiLstmHead BiLstmHead::make(int64_t input_dim, int64_t hidden, Rng& rng) {
  BiLstmHead head;
  head.hidden_ = hidden;
  head.fwd[0] = LstmCellParams::make(input_dim, hidden, rng);
  head.fwd[1] = LstmCellParams::make(hidden, hidden, rng);
  head.bwd[0] = LstmCellParams::make(input_dim, hidden, rng);
  head.bwd[1] = LstmCellParams::make(hidden, hidden, rng);
  return head;
}

namespace {

// Runs a 2-layer stack over the given timestep order; returns top-layer
// outputs indexed by position in `order`.
std::vector<Tensor> run_stack(const Tensor& x, const std::array<LstmCellParams, 2>& stack,
                              const std::vector<int64_t>& order) {
  const int64_t n = x.dim(0);
  const int64_t hidden = stack[0].hidden;
  Tensor h0 = Tensor::zeros({n, hidden});
  Tensor c0 = Tensor::zeros({n, hidden});
  Tensor h1 = Tensor::zeros({n, hidden});
  Tensor c1 = Tensor::zeros({n, hidden});
  std::vector<Tensor> out;
  out.reserve(order.size());
  for (int64_t t : order) {
    Tensor x_t = reshape(slice(x, 1, t, 1), {n, x.dim(2)});
    auto [h0n, c0n] = lstm_cell(x_t, h0, c0, stack[0]);
    h0 = h0n;
    c0 = c0n;
    auto [h1n, c1n] = lstm_cell(h0, h1, c1, stack[1]);
    h1 = h1n;
    c1 = c1n;
    out.push_back(h1);
  }
  return out;
}

}  // namespace

Tensor BiLstmHead::forward(const Tensor& x) const {
  if (x.rank() != 3) throw ShapeError("bilstm head: expected [N,T,D]");
  const int64_t n = x.dim(0), t = x.dim(1);
  std::vector<int64_t> fwd_order(static_cast<size_t>(t));
  std::vector<int64_t> bwd_order(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) {
    fwd_order[static_cast<size_t>(i)] = i;
    bwd_order[static_cast<size_t>(i)] = t - 1 - i;
  }
  std::vector<Tensor> f_out = run_stack(x, fwd, fwd_order);
  std::vector<Tensor> b_out = run_stack(x, bwd, bwd_order);

  std::vector<Tensor> per_step;
  per_step.reserve(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) {
    Tensor fo = f_out[static_cast<size_t>(i)];
    Tensor bo = b_out[static_cast<size_t>(t - 1 - i)];  // align to original time
    per_step.push_back(reshape(concat({fo, bo}, 1), {n, 1, 2 * hidden_}));
  }
  return per_step.size() == 1 ? per_step[0] : concat(per_step, 1);
}

void BiLstmHead::collect(const std::string& prefix, ParamList& out) const {
  fwd[0].collect(prefix + ".fwd0", out);
  fwd[1].collect(prefix + ".fwd1", out);
  bwd[0].collect(prefix + ".bwd0", out);
  bwd[1].collect(prefix + ".bwd1", out);
}

Classifier Classifier::make(int64_t input_dim, int64_t num_classes, Rng& rng) {
  Classifier c;
  c.fc = LinearLayer::make(input_dim, num_classes, rng);
  return c;
}

Tensor Classifier::forward(const Tensor& x, const ForwardCtx& ctx) const {
  if (x.rank() != 3) throw ShapeError("classifier: expected [N,T,D]");
  Tensor pooled = mean_axes(x, {1});  // [N,D]
  if (ctx.training && ctx.dropout_p > 0.0f) {
    if (!ctx.rng) throw ValueError("classifier: training forward needs an rng");
    pooled = dropout(pooled, ctx.dropout_p, true, *ctx.rng);
  }
  return fc.forward(pooled);
}

void Classifier::collect(const std::string& prefix, ParamList& out) const {
  fc.collect(prefix + ".fc", out);
}

}  // namespace tristream
