#include <benchmark/benchmark.h>

#include "tristream/heads.hpp"
#include "tristream/model.hpp"
#include "tristream/synthetic.hpp"
#include "tristream/trainer.hpp"

using namespace tristream;

namespace {

Tensor rand5(Shape shape, uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng);
}

void BM_Conv3dForward(benchmark::State& state) {
  NoGradGuard no_grad;
  const int64_t c = state.range(0);
  Tensor x = rand5({8, c, 4, 16, 16}, 1);
  Tensor w = rand5({2 * c, c, 3, 3, 3}, 2);
  Tensor b = rand5({2 * c}, 3);
  for (auto _ : state) {
    Tensor y = conv3d(x, w, b, {1, 2, 2}, {1, 1, 1});
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv3dForward)->Arg(4)->Arg(8)->Arg(16);

void BM_Conv3dBackward(benchmark::State& state) {
  const int64_t c = state.range(0);
  for (auto _ : state) {
    state.PauseTiming();
    Rng rng(1);
    Tensor x = Tensor::randn({8, c, 4, 16, 16}, rng, 1.0f, true);
    Tensor w = Tensor::randn({2 * c, c, 3, 3, 3}, rng, 1.0f, true);
    Tensor b = Tensor::randn({2 * c}, rng, 1.0f, true);
    Tensor loss = mean_all(conv3d(x, w, b, {1, 2, 2}, {1, 1, 1}));
    state.ResumeTiming();
    loss.backward();
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv3dBackward)->Arg(4)->Arg(8);

void BM_Matmul(benchmark::State& state) {
  NoGradGuard no_grad;
  const int64_t n = state.range(0);
  Tensor a = rand5({n, n}, 1);
  Tensor b = rand5({n, n}, 2);
  for (auto _ : state) {
    Tensor y = matmul(a, b);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void BM_AttentionHead(benchmark::State& state) {
  NoGradGuard no_grad;
  Rng rng(1);
  AttentionHead head = AttentionHead::make(64, 4, rng);
  Tensor x = rand5({8, 8, 64}, 2);
  for (auto _ : state) {
    Tensor y = head.forward(x);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_AttentionHead);

void BM_BiLstmHead(benchmark::State& state) {
  NoGradGuard no_grad;
  Rng rng(1);
  BiLstmHead head = BiLstmHead::make(64, 32, rng);
  Tensor x = rand5({8, 8, 64}, 2);
  for (auto _ : state) {
    Tensor y = head.forward(x);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_BiLstmHead);

void BM_RoiExtract(benchmark::State& state) {
  NoGradGuard no_grad;
  Tensor feat = rand5({1, 64, 4, 8, 8}, 1);
  const Box box{0.2, 0.2, 0.8, 0.8};
  for (auto _ : state) {
    Tensor roi = roi_extract(feat, box, 7, 7);
    benchmark::DoNotOptimize(roi.data().data());
  }
}
BENCHMARK(BM_RoiExtract);

void BM_TrainStep(benchmark::State& state) {
  NetworkConfig cfg;
  cfg.stem_width = 4;
  cfg.slow_widths = {4, 8, 8, 16};
  cfg.blocks = {1, 1, 1, 1};
  cfg.beta = 0.25;
  auto model = ClassificationModel::make(cfg, 1);
  SyntheticSpec spec;
  auto data = gen_synthetic(spec, 8, 2);
  std::vector<Tensor> frames;
  std::vector<int64_t> labels;
  for (const auto& d : data) {
    frames.push_back(d.clip.frames);
    labels.push_back(d.label);
  }
  Sgd opt(model.parameters());
  TrainConfig tc;
  Rng rng(3);
  for (auto _ : state) {
    ForwardCtx ctx{true, 0.0f, &rng};
    Tensor loss = cross_entropy(model.forward_clips(frames, 8, ctx), labels);
    opt.zero_grad();
    loss.backward();
    opt.step(tc);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(state.iterations() * 8);  // samples per step
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
