#include <algorithm>
#include <functional>
#include <numeric>

#include "tristream/gradcheck.hpp"
#include "tristream/heads.hpp"
#include "tristream/ops.hpp"

namespace tristream {

namespace {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct OpCase {
  ScalarFn fn;
  std::vector<Tensor> inputs;
  double tolerance = 1e-3;
};

Tensor rand_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  return Tensor::rand_uniform(std::move(shape), rng, lo, hi);
}

// Values drawn from a shuffled even grid: pairwise gaps >= step, so max/pool
// argmaxes cannot flip under the FD perturbation.
Tensor separated_tensor(Shape shape, Rng& rng, float step = 0.02f) {
  const int64_t n = numel_of(shape);
  std::vector<int64_t> grid(static_cast<size_t>(n));
  std::iota(grid.begin(), grid.end(), 0);
  std::shuffle(grid.begin(), grid.end(), rng.engine());
  std::vector<float> vals(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    vals[static_cast<size_t>(i)] =
        step * static_cast<float>(grid[static_cast<size_t>(i)] - n / 2);
  return Tensor::from_vec(std::move(shape), std::move(vals));
}

// Keeps relu inputs off the kink by `margin`.
Tensor away_from_zero(Shape shape, Rng& rng, float margin = 0.01f) {
  Tensor t = rand_tensor(std::move(shape), rng);
  for (auto& v : t.mut_data())
    if (std::abs(v) < 2 * margin) v = v < 0 ? v - 2 * margin : v + 2 * margin;
  return t;
}

// Scalarizes an output so every element contributes with a distinct weight.
ScalarFn weighted(std::function<Tensor(const std::vector<Tensor>&)> op, Rng& rng) {
  auto weights = std::make_shared<std::vector<float>>();
  return [op = std::move(op), weights, seed = rng.next_u64()](const std::vector<Tensor>& in) {
    Tensor out = op(in);
    if (weights->empty()) {
      Rng wrng(seed);
      weights->resize(static_cast<size_t>(out.numel()));
      for (auto& w : *weights) w = static_cast<float>(wrng.uniform(-1.0, 1.0));
    }
    Tensor w = Tensor::from_vec(out.shape(), *weights);
    return sum_all(mul(out, w));
  };
}

int64_t ri(Rng& rng, int64_t lo, int64_t hi) { return rng.uniform_int(lo, hi); }

OpCase make_conv3d(Rng& rng) {
  const int64_t n = ri(rng, 1, 2), c = ri(rng, 1, 2), co = ri(rng, 1, 3);
  const int64_t t = ri(rng, 2, 5), h = ri(rng, 3, 6), w = ri(rng, 3, 6);
  const Triple stride{ri(rng, 1, 2), ri(rng, 1, 2), ri(rng, 1, 2)};
  const Triple pad{ri(rng, 0, 1), ri(rng, 0, 1), ri(rng, 0, 1)};
  const Triple dil{1, ri(rng, 1, 2), 1};
  const int64_t kt = std::min<int64_t>(ri(rng, 1, 3), t + 2 * pad.t);
  const int64_t kh = std::min<int64_t>(ri(rng, 1, 3), (h + 2 * pad.h - 1) / dil.h + 1);
  const int64_t kw = std::min<int64_t>(ri(rng, 1, 3), w + 2 * pad.w);
  OpCase oc;
  oc.inputs = {rand_tensor({n, c, t, h, w}, rng), rand_tensor({co, c, kt, kh, kw}, rng),
               rand_tensor({co}, rng)};
  oc.fn = weighted(
      [stride, pad, dil](const std::vector<Tensor>& in) {
        return conv3d(in[0], in[1], in[2], stride, pad, dil);
      },
      rng);
  return oc;
}

OpCase make_maxpool3d(Rng& rng) {
  const int64_t n = ri(rng, 1, 2), c = ri(rng, 1, 2);
  const int64_t t = ri(rng, 2, 4), h = ri(rng, 2, 5), w = ri(rng, 2, 5);
  const Triple kernel{ri(rng, 1, t), ri(rng, 1, h), ri(rng, 1, w)};
  const Triple stride{ri(rng, 1, 2), ri(rng, 1, 2), ri(rng, 1, 2)};
  OpCase oc;
  oc.inputs = {separated_tensor({n, c, t, h, w}, rng)};
  oc.fn = weighted(
      [kernel, stride](const std::vector<Tensor>& in) {
        return maxpool3d(in[0], kernel, stride);
      },
      rng);
  return oc;
}

OpCase make_matmul(Rng& rng) {
  const int64_t m = ri(rng, 1, 4), k = ri(rng, 1, 4), n = ri(rng, 1, 4);
  OpCase oc;
  if (rng.bernoulli(0.5)) {
    oc.inputs = {rand_tensor({m, k}, rng), rand_tensor({k, n}, rng)};
  } else {
    const int64_t b = ri(rng, 1, 3);
    oc.inputs = {rand_tensor({b, m, k}, rng),
                 rng.bernoulli(0.5) ? rand_tensor({b, k, n}, rng)
                                    : rand_tensor({k, n}, rng)};
  }
  oc.fn = weighted(
      [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); }, rng);
  return oc;
}

OpCase make_softmax(Rng& rng) {
  const size_t rank = static_cast<size_t>(ri(rng, 1, 3));
  Shape shape;
  for (size_t i = 0; i < rank; ++i) shape.push_back(ri(rng, 1, 4));
  const int axis = static_cast<int>(ri(rng, 0, static_cast<int64_t>(rank) - 1));
  OpCase oc;
  oc.inputs = {rand_tensor(shape, rng, -2.0f, 2.0f)};
  oc.fn = weighted(
      [axis](const std::vector<Tensor>& in) { return softmax(in[0], axis); }, rng);
  return oc;
}

OpCase make_layernorm(Rng& rng) {
  const int64_t outer = ri(rng, 1, 3), extent = ri(rng, 2, 5), inner = ri(rng, 1, 3);
  OpCase oc;
  // separated values keep per-slice variance away from zero, where the FD
  // quotient is dominated by curvature
  oc.inputs = {separated_tensor({outer, extent, inner}, rng, 0.05f),
               rand_tensor({extent}, rng, 0.5f, 1.5f), rand_tensor({extent}, rng)};
  oc.fn = weighted(
      [](const std::vector<Tensor>& in) {
        return layernorm(in[0], in[1], in[2], 1, 1e-5f);
      },
      rng);
  return oc;
}

OpCase make_groupnorm(Rng& rng) {
  const int64_t n = ri(rng, 1, 2), groups = ri(rng, 1, 2);
  const int64_t c = groups * ri(rng, 1, 3);
  const int64_t t = ri(rng, 1, 3), hw = ri(rng, 2, 3);
  OpCase oc;
  oc.inputs = {separated_tensor({n, c, t, hw, hw}, rng, 0.05f),
               rand_tensor({c}, rng, 0.5f, 1.5f), rand_tensor({c}, rng)};
  oc.fn = weighted(
      [groups](const std::vector<Tensor>& in) {
        return groupnorm(in[0], in[1], in[2], groups, 1e-5f);
      },
      rng);
  return oc;
}

Shape small_shape(Rng& rng) {
  const size_t rank = static_cast<size_t>(ri(rng, 1, 3));
  Shape shape;
  for (size_t i = 0; i < rank; ++i) shape.push_back(ri(rng, 1, 4));
  return shape;
}

OpCase make_unary(Rng& rng, const char* which) {
  Shape shape = small_shape(rng);
  OpCase oc;
  const std::string name(which);
  if (name == "relu") {
    oc.inputs = {away_from_zero(shape, rng)};
    oc.tolerance = 3e-3;
  } else {
    oc.inputs = {rand_tensor(shape, rng)};
  }
  oc.fn = weighted(
      [name](const std::vector<Tensor>& in) {
        if (name == "relu") return relu(in[0]);
        if (name == "sigmoid") return sigmoid(in[0]);
        return tanh(in[0]);
      },
      rng);
  return oc;
}

OpCase make_binary(Rng& rng, const char* which) {
  Shape shape = small_shape(rng);
  OpCase oc;
  oc.inputs = {rand_tensor(shape, rng), rand_tensor(shape, rng)};
  const std::string name(which);
  oc.fn = weighted(
      [name](const std::vector<Tensor>& in) {
        if (name == "add") return add(in[0], in[1]);
        if (name == "sub") return sub(in[0], in[1]);
        return mul(in[0], in[1]);
      },
      rng);
  return oc;
}

OpCase make_scale(Rng& rng) {
  OpCase oc;
  oc.inputs = {rand_tensor(small_shape(rng), rng), rand_tensor({}, rng)};
  oc.fn = weighted(
      [](const std::vector<Tensor>& in) { return scale(in[0], in[1]); }, rng);
  return oc;
}

OpCase make_bias_add(Rng& rng) {
  const size_t rank = static_cast<size_t>(ri(rng, 1, 4));
  Shape shape;
  for (size_t i = 0; i < rank; ++i) shape.push_back(ri(rng, 1, 4));
  const int axis = static_cast<int>(ri(rng, 0, static_cast<int64_t>(rank) - 1));
  OpCase oc;
  oc.inputs = {rand_tensor(shape, rng),
               rand_tensor({shape[static_cast<size_t>(axis)]}, rng)};
  oc.fn = weighted(
      [axis](const std::vector<Tensor>& in) { return bias_add(in[0], in[1], axis); },
      rng);
  return oc;
}

OpCase make_dropout(Rng& rng) {
  OpCase oc;
  oc.inputs = {rand_tensor(small_shape(rng), rng)};
  const uint64_t mask_seed = rng.next_u64();
  oc.fn = weighted(
      [mask_seed](const std::vector<Tensor>& in) {
        Rng mask_rng(mask_seed);  // frozen mask across FD evaluations
        return dropout(in[0], 0.3f, true, mask_rng);
      },
      rng);
  return oc;
}

OpCase make_reshape(Rng& rng) {
  const int64_t a = ri(rng, 1, 3), b = ri(rng, 1, 3), c = ri(rng, 1, 3);
  OpCase oc;
  oc.inputs = {rand_tensor({a, b, c}, rng)};
  oc.fn = weighted(
      [a, b, c](const std::vector<Tensor>& in) {
        return reshape(in[0], {a * b * c});
      },
      rng);
  return oc;
}

OpCase make_transpose(Rng& rng) {
  Shape shape{ri(rng, 1, 3), ri(rng, 1, 4), ri(rng, 1, 4)};
  OpCase oc;
  oc.inputs = {rand_tensor(shape, rng)};
  oc.fn = weighted(
      [](const std::vector<Tensor>& in) { return transpose_last2(in[0]); }, rng);
  return oc;
}

OpCase make_concat(Rng& rng) {
  const int64_t a = ri(rng, 1, 3), c = ri(rng, 1, 3);
  const int axis = 1;
  OpCase oc;
  oc.inputs = {rand_tensor({a, ri(rng, 1, 3), c}, rng),
               rand_tensor({a, ri(rng, 1, 3), c}, rng),
               rand_tensor({a, ri(rng, 1, 3), c}, rng)};
  oc.fn = weighted(
      [axis](const std::vector<Tensor>& in) {
        return concat({in[0], in[1], in[2]}, axis);
      },
      rng);
  return oc;
}

OpCase make_slice(Rng& rng) {
  Shape shape{ri(rng, 2, 4), ri(rng, 2, 5), ri(rng, 1, 3)};
  const int axis = static_cast<int>(ri(rng, 0, 2));
  const int64_t extent = shape[static_cast<size_t>(axis)];
  const int64_t len = ri(rng, 1, extent);
  const int64_t start = ri(rng, 0, extent - len);
  OpCase oc;
  oc.inputs = {rand_tensor(shape, rng)};
  oc.fn = weighted(
      [axis, start, len](const std::vector<Tensor>& in) {
        return slice(in[0], axis, start, len);
      },
      rng);
  return oc;
}

OpCase make_repeat(Rng& rng) {
  Shape shape{ri(rng, 1, 3), ri(rng, 1, 3), ri(rng, 1, 3)};
  const int axis = static_cast<int>(ri(rng, 0, 2));
  const int64_t repeats = ri(rng, 1, 3);
  OpCase oc;
  oc.inputs = {rand_tensor(shape, rng)};
  oc.fn = weighted(
      [axis, repeats](const std::vector<Tensor>& in) {
        return repeat_interleave(in[0], repeats, axis);
      },
      rng);
  return oc;
}

OpCase make_mean_axes(Rng& rng) {
  Shape shape{ri(rng, 1, 3), ri(rng, 2, 4), ri(rng, 2, 4)};
  std::vector<int> axes;
  if (rng.bernoulli(0.5))
    axes = {1, 2};
  else
    axes = {static_cast<int>(ri(rng, 0, 2))};
  OpCase oc;
  oc.inputs = {rand_tensor(shape, rng)};
  oc.fn = weighted(
      [axes](const std::vector<Tensor>& in) { return mean_axes(in[0], axes); }, rng);
  return oc;
}

OpCase make_reduce_max(Rng& rng) {
  Shape shape{ri(rng, 1, 3), ri(rng, 2, 4), ri(rng, 2, 4)};
  const int tail = static_cast<int>(ri(rng, 1, 2));
  OpCase oc;
  oc.inputs = {separated_tensor(shape, rng)};
  oc.fn = weighted(
      [tail](const std::vector<Tensor>& in) { return reduce_max_tail(in[0], tail); },
      rng);
  return oc;
}

OpCase make_mean_all(Rng& rng) {
  OpCase oc;
  oc.inputs = {rand_tensor(small_shape(rng), rng)};
  oc.fn = [](const std::vector<Tensor>& in) { return mean_all(in[0]); };
  return oc;
}

OpCase make_cross_entropy(Rng& rng) {
  const int64_t n = ri(rng, 1, 4), k = ri(rng, 2, 5);
  std::vector<int64_t> labels;
  for (int64_t i = 0; i < n; ++i) labels.push_back(ri(rng, 0, k - 1));
  OpCase oc;
  oc.inputs = {rand_tensor({n, k}, rng, -2.0f, 2.0f)};
  oc.fn = [labels](const std::vector<Tensor>& in) {
    return cross_entropy(in[0], labels);
  };
  return oc;
}

OpCase make_bce(Rng& rng) {
  Shape shape = small_shape(rng);
  OpCase oc;
  oc.inputs = {rand_tensor(shape, rng, -2.0f, 2.0f),
               rand_tensor(shape, rng, 0.05f, 0.95f)};
  oc.fn = [](const std::vector<Tensor>& in) { return bce_with_logits(in[0], in[1]); };
  return oc;
}

OpCase make_attention(Rng& rng) {
  const int64_t t = ri(rng, 1, 4), dk = ri(rng, 1, 3), dv = ri(rng, 1, 3);
  OpCase oc;
  oc.inputs = {rand_tensor({t, dk}, rng), rand_tensor({t, dk}, rng),
               rand_tensor({t, dv}, rng)};
  oc.fn = weighted(
      [](const std::vector<Tensor>& in) {
        return scaled_dot_attention(in[0], in[1], in[2]);
      },
      rng);
  return oc;
}

OpCase make_multi_head_attention(Rng& rng) {
  const int heads = static_cast<int>(ri(rng, 1, 2));
  const int64_t dim = heads * ri(rng, 1, 3);
  const int64_t n = ri(rng, 1, 2), t = ri(rng, 1, 3);
  auto head = std::make_shared<AttentionHead>(AttentionHead::make(dim, heads, rng));
  OpCase oc;
  oc.tolerance = 3e-3;  // relu inside the FFN
  oc.inputs = {rand_tensor({n, t, dim}, rng)};
  ParamList params;
  head->collect("attn", params);
  for (auto& p : params) oc.inputs.push_back(p.tensor);
  oc.fn = weighted(
      [head](const std::vector<Tensor>& in) { return head->forward(in[0]); }, rng);
  return oc;
}

OpCase make_lstm_cell(Rng& rng) {
  const int64_t n = ri(rng, 1, 2), din = ri(rng, 1, 3), hidden = ri(rng, 1, 3);
  auto params = std::make_shared<LstmCellParams>(LstmCellParams::make(din, hidden, rng));
  OpCase oc;
  oc.inputs = {rand_tensor({n, din}, rng), rand_tensor({n, hidden}, rng),
               rand_tensor({n, hidden}, rng), params->wx, params->wh, params->b};
  oc.fn = weighted(
      [params](const std::vector<Tensor>& in) {
        auto [h, c] = lstm_cell(in[0], in[1], in[2], *params);
        return concat({h, c}, 1);
      },
      rng);
  return oc;
}

OpCase make_bilstm(Rng& rng) {
  const int64_t n = ri(rng, 1, 2), t = ri(rng, 1, 3), d = ri(rng, 1, 3);
  const int64_t hidden = ri(rng, 1, 2);
  auto head = std::make_shared<BiLstmHead>(BiLstmHead::make(d, hidden, rng));
  OpCase oc;
  oc.inputs = {rand_tensor({n, t, d}, rng)};
  ParamList params;
  head->collect("bilstm", params);
  for (auto& p : params) oc.inputs.push_back(p.tensor);
  oc.fn = weighted(
      [head](const std::vector<Tensor>& in) { return head->forward(in[0]); }, rng);
  return oc;
}

OpCase make_classify(Rng& rng) {
  const int64_t n = ri(rng, 1, 2), t = ri(rng, 1, 3), d = ri(rng, 1, 4);
  const int64_t k = ri(rng, 2, 4);
  auto cls = std::make_shared<Classifier>(Classifier::make(d, k, rng));
  OpCase oc;
  oc.inputs = {rand_tensor({n, t, d}, rng), cls->fc.w, cls->fc.b};
  oc.fn = weighted(
      [cls](const std::vector<Tensor>& in) {
        return cls->forward(in[0], ForwardCtx{});
      },
      rng);
  return oc;
}

// conv3d -> relu -> maxpool3d -> reshape -> matmul -> softmax cross-entropy,
// with inputs redrawn until no relu input sits near the kink and no pooling
// window has a close runner-up.
OpCase make_composite(Rng& rng) {
  const int64_t n = 1, c = ri(rng, 1, 2), co = 2;
  const int64_t t = 3, h = 4, w = 4;
  const int64_t k = ri(rng, 2, 3);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Tensor x = rand_tensor({n, c, t, h, w}, rng);
    Tensor cw = rand_tensor({co, c, 2, 2, 2}, rng);
    Tensor cb = rand_tensor({co}, rng);
    Tensor conv_out;
    {
      NoGradGuard no_grad;
      conv_out = conv3d(x, cw, cb, {1, 1, 1}, {0, 0, 0});
    }
    bool ok = true;
    for (float v : conv_out.data())
      if (std::abs(v) < 0.01f) ok = false;
    // pooled windows cover the full extent; demand separated values
    std::vector<float> vals(conv_out.data().begin(), conv_out.data().end());
    std::sort(vals.begin(), vals.end());
    for (size_t i = 0; i + 1 < vals.size(); ++i)
      if (vals[i + 1] - vals[i] < 3e-3f) ok = false;
    if (!ok) continue;

    const Shape pooled_shape =
        conv3d_output_shape(conv_out.shape(), {co, co, 2, 2, 2}, {1, 2, 2}, {0, 0, 0},
                            {1, 1, 1});
    const int64_t flat = numel_of(pooled_shape);
    Tensor mw = rand_tensor({flat, k}, rng);
    std::vector<int64_t> labels{ri(rng, 0, k - 1)};
    OpCase oc;
    oc.tolerance = 3e-3;
    oc.inputs = {x, cw, cb, mw};
    oc.fn = [labels](const std::vector<Tensor>& in) {
      Tensor conv_y = conv3d(in[0], in[1], in[2], {1, 1, 1}, {0, 0, 0});
      Tensor act = relu(conv_y);
      Tensor pooled = maxpool3d(act, {2, 2, 2}, {1, 2, 2});
      Tensor flat_t = reshape(pooled, {1, pooled.numel()});
      Tensor logits = matmul(flat_t, in[3]);
      return cross_entropy(logits, labels);
    };
    return oc;
  }
  throw NumericError("composite gradcheck: could not find a kink-free instance");
}

struct OpEntry {
  const char* name;
  std::function<OpCase(Rng&)> make;
};

const std::vector<OpEntry>& registry() {
  static const std::vector<OpEntry> entries{
      {"conv3d", make_conv3d},
      {"maxpool3d", make_maxpool3d},
      {"matmul", make_matmul},
      {"softmax", make_softmax},
      {"layernorm", make_layernorm},
      {"groupnorm", make_groupnorm},
      {"relu", [](Rng& r) { return make_unary(r, "relu"); }},
      {"sigmoid", [](Rng& r) { return make_unary(r, "sigmoid"); }},
      {"tanh", [](Rng& r) { return make_unary(r, "tanh"); }},
      {"add", [](Rng& r) { return make_binary(r, "add"); }},
      {"sub", [](Rng& r) { return make_binary(r, "sub"); }},
      {"mul", [](Rng& r) { return make_binary(r, "mul"); }},
      {"scale", make_scale},
      {"bias_add", make_bias_add},
      {"dropout", make_dropout},
      {"reshape", make_reshape},
      {"transpose", make_transpose},
      {"concat", make_concat},
      {"slice", make_slice},
      {"repeat_interleave", make_repeat},
      {"mean_axes", make_mean_axes},
      {"reduce_max_tail", make_reduce_max},
      {"mean_all", make_mean_all},
      {"cross_entropy", make_cross_entropy},
      {"bce_with_logits", make_bce},
      {"scaled_dot_attention", make_attention},
      {"multi_head_attention", make_multi_head_attention},
      {"lstm_cell", make_lstm_cell},
      {"bilstm_head", make_bilstm},
      {"classify", make_classify},
      {"composite_graph", make_composite},
  };
  return entries;
}

}  // namespace

std::vector<OpCheckReport> run_gradcheck_suite(uint64_t seed, int cases_per_op) {
  std::vector<OpCheckReport> reports;
  for (const auto& entry : registry()) {
    Rng rng(seed ^ std::hash<std::string>{}(entry.name));
    OpCheckReport report;
    report.op = entry.name;
    for (int i = 0; i < cases_per_op; ++i) {
      OpCase oc = entry.make(rng);
      const GradCheckResult res = gradcheck(oc.fn, oc.inputs, oc.tolerance);
      ++report.cases;
      report.max_rel_err = std::max(report.max_rel_err, res.max_rel_err);
      if (!res.passed) {
        ++report.failures;
        if (report.first_failure.empty()) report.first_failure = res.detail;
      }
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace tristream
