#include <doctest.h>

#include <cmath>

#include "tristream/backbone.hpp"
#include "tristream/model.hpp"
#include "tristream/synthetic.hpp"

using namespace tristream;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.strides = {8, 4, 2};
  cfg.beta = 0.25;
  cfg.in_channels = 1;
  cfg.frames = 8;
  cfg.crop = 32;
  cfg.stem_width = 4;
  cfg.slow_widths = {4, 8, 8, 16};
  cfg.blocks = {1, 1, 1, 1};
  cfg.head = HeadKind::attention;
  cfg.num_classes = 4;
  cfg.attn_heads = 4;
  return cfg;
}

Conv3dLayer identity_conv(int64_t channels, Triple kernel, Triple stride, Triple pad) {
  Rng rng(0);
  Conv3dLayer layer = Conv3dLayer::make(channels, channels, kernel, stride, pad,
                                        {1, 1, 1}, rng);
  auto w = layer.w.mut_data();
  std::fill(w.begin(), w.end(), 0.0f);
  const int64_t kvol = kernel.t * kernel.h * kernel.w;
  const int64_t center = (kernel.t / 2) * kernel.h * kernel.w + (kernel.h / 2) * kernel.w +
                         kernel.w / 2;
  for (int64_t c = 0; c < channels; ++c)
    w[(c * channels + c) * kvol + center] = 1.0f;
  std::fill(layer.b.mut_data().begin(), layer.b.mut_data().end(), 0.0f);
  return layer;
}

}  // namespace

TEST_SUITE_BEGIN("backbone");

TEST_CASE("zero-weight residual block reduces to relu of the shortcut") {
  Rng rng(1);
  ResidualBlock block = ResidualBlock::make(4, 4, false, false, rng);
  for (auto* t : {&block.conv1.w, &block.conv1.b, &block.conv2.w, &block.conv2.b})
    std::fill(t->mut_data().begin(), t->mut_data().end(), 0.0f);
  REQUIRE(!block.proj);  // same channels, no downsample -> identity shortcut
  Tensor x = Tensor::randn({1, 4, 2, 6, 6}, rng);
  Tensor y = block.forward(x);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const float v = x.data()[static_cast<size_t>(i)];
    CHECK(y.data()[static_cast<size_t>(i)] == doctest::Approx(v > 0 ? v : 0.0f));
  }
}

TEST_CASE("residual block preserves T,H,W at stride 1 and equal channels") {
  Rng rng(2);
  ResidualBlock block = ResidualBlock::make(8, 8, false, false, rng);
  Tensor x = Tensor::randn({2, 8, 3, 5, 5}, rng);
  CHECK(block.forward(x).shape() == x.shape());
}

TEST_CASE("residual block forward equals the composed tensor ops") {
  Rng rng(3);
  ResidualBlock block = ResidualBlock::make(3, 6, true, false, rng);
  Tensor x = Tensor::randn({1, 3, 2, 8, 8}, rng);
  Tensor got = block.forward(x);
  Tensor h = relu(groupnorm(conv3d(x, block.conv1.w, block.conv1.b, {1, 2, 2},
                                   {1, 1, 1}),
                            block.norm1.gain, block.norm1.shift, 1));
  h = groupnorm(conv3d(h, block.conv2.w, block.conv2.b, {1, 1, 1}, {1, 1, 1}),
                block.norm2.gain, block.norm2.shift, 1);
  Tensor sc = conv3d(x, block.proj->w, block.proj->b, {1, 2, 2}, {0, 0, 0});
  Tensor want = relu(add(h, sc));
  REQUIRE(got.shape() == want.shape());
  for (int64_t i = 0; i < got.numel(); ++i)
    CHECK(std::abs(got.data()[static_cast<size_t>(i)] -
                   want.data()[static_cast<size_t>(i)]) <= 1e-5f);
}

TEST_CASE("pathway stage features halve spatially: 32 -> 16,8,4,2,1") {
  Rng rng(4);
  PathwayConfig pc{4, 4, {4, 8, 8, 16}, {1, 1, 1, 1}};
  Pathway p = Pathway::make(pc, 3, false, rng);
  Tensor x = Tensor::randn({1, 3, 4, 32, 32}, rng);
  auto feats = p.run(x);
  REQUIRE(feats.size() == 5);
  const int64_t want[5] = {16, 8, 4, 2, 1};
  for (size_t i = 0; i < 5; ++i) {
    CHECK(feats[i].dim(3) == want[i]);
    CHECK(feats[i].dim(4) == want[i]);
    CHECK(feats[i].dim(2) == 4);  // temporal extent preserved
  }
}

TEST_CASE("fast pathway widths are beta times slow widths at every stage") {
  NetworkConfig cfg = tiny_config();
  cfg.stem_width = 8;
  cfg.slow_widths = {8, 16, 32, 64};
  cfg.beta = 0.125;
  const PathwayConfig fast = cfg.fast_config();
  CHECK(fast.stem_width == 1);
  CHECK(fast.stage_widths[0] == 1);
  CHECK(fast.stage_widths[1] == 2);
  CHECK(fast.stage_widths[2] == 4);
  CHECK(fast.stage_widths[3] == 8);
  cfg.beta = 0.3;  // 0.3 * 8 is not an integer
  CHECK_THROWS_AS(cfg.fast_config(), ValueError);
}

TEST_CASE("zero input stays zero through a freshly initialized pathway") {
  Rng rng(5);
  PathwayConfig pc{4, 4, {4, 8, 8, 16}, {1, 1, 1, 1}};
  Pathway p = Pathway::make(pc, 1, false, rng);
  Tensor x = Tensor::zeros({1, 1, 2, 32, 32});
  auto feats = p.run(x);
  for (const auto& f : feats)
    for (float v : f.data()) CHECK(v == 0.0f);
}

TEST_CASE("pathway rejects inputs below the downsample budget") {
  Rng rng(6);
  PathwayConfig pc{4, 4, {4, 8, 8, 16}, {1, 1, 1, 1}};
  Pathway p = Pathway::make(pc, 1, false, rng);
  CHECK_THROWS_AS(p.run(Tensor::zeros({1, 1, 2, 16, 16})), ValueError);
}

TEST_CASE("lateral fuse with alpha 0 leaves the receiver unchanged") {
  Rng rng(7);
  LateralLink link = LateralLink::make(2, 4, 2, rng);
  std::fill(link.alpha.mut_data().begin(), link.alpha.mut_data().end(), 0.0f);
  Tensor donor = Tensor::randn({1, 2, 4, 5, 5}, rng);
  Tensor receiver = Tensor::randn({1, 4, 2, 5, 5}, rng);
  Tensor out = link.fuse(donor, receiver);
  for (int64_t i = 0; i < out.numel(); ++i)
    CHECK(out.data()[static_cast<size_t>(i)] ==
          receiver.data()[static_cast<size_t>(i)]);
}

TEST_CASE("lateral fuse with identity transforms and alpha 1 is elementwise sum") {
  Rng rng(8);
  LateralLink link = LateralLink::make(3, 3, 1, rng);
  link.tconv = identity_conv(3, {5, 1, 1}, {1, 1, 1}, {2, 0, 0});
  link.proj = identity_conv(3, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
  Tensor donor = Tensor::randn({1, 3, 4, 4, 4}, rng);
  Tensor receiver = Tensor::randn({1, 3, 4, 4, 4}, rng);
  Tensor out = link.fuse(donor, receiver);
  for (int64_t i = 0; i < out.numel(); ++i)
    CHECK(out.data()[static_cast<size_t>(i)] ==
          doctest::Approx(donor.data()[static_cast<size_t>(i)] +
                          receiver.data()[static_cast<size_t>(i)]));
}

TEST_CASE("lateral fuse output shape equals the receiver shape (Td=8 -> Tr=2)") {
  Rng rng(9);
  LateralLink link = LateralLink::make(2, 6, 4, rng);
  Tensor donor = Tensor::randn({2, 2, 8, 3, 3}, rng);
  Tensor receiver = Tensor::randn({2, 6, 2, 3, 3}, rng);
  CHECK(link.fuse(donor, receiver).shape() == receiver.shape());
}

TEST_CASE("lateral fuse rejects non-multiple temporal ratios") {
  Rng rng(10);
  LateralLink link = LateralLink::make(2, 2, 2, rng);  // built for ratio 2
  Tensor donor = Tensor::randn({1, 2, 3, 3, 3}, rng);  // ceil(3/2) = 2 != 1
  Tensor receiver = Tensor::randn({1, 2, 1, 3, 3}, rng);
  CHECK_THROWS_AS(link.fuse(donor, receiver), ShapeError);
  // the same constraint is a config error at build time
  NetworkConfig cfg = tiny_config();
  cfg.frames = 12;
  cfg.strides = {12, 6, 2};  // t_fast=6, t_slow=2: multiple, fine
  CHECK_NOTHROW(cfg.validate());
  cfg.strides = {12, 6, 4};  // t_fast=3, t_slow=2: 3 % 2 != 0
  CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("sequence features concatenate pathway channels and align to t_fast") {
  NetworkConfig cfg = tiny_config();
  auto model = ClassificationModel::make(cfg, 11);
  const int64_t d_single = cfg.slow_widths[3];
  const int64_t d_fast = cfg.fast_config().stage_widths[3];
  CHECK(cfg.feature_dim() == d_single * 2 + d_fast);
  CHECK(cfg.sequence_len() == cfg.t_fast());

  auto data = gen_synthetic(SyntheticSpec{}, 2, 1);
  std::vector<Tensor> frames{data[0].clip.frames, data[1].clip.frames};
  auto inputs = prepare_pathway_inputs(frames, cfg, 8);
  Tensor seq = model.backbone().forward_sequence(inputs);
  CHECK(seq.shape() == Shape{2, cfg.t_fast(), cfg.feature_dim()});
}

TEST_CASE("backbone forward is deterministic across identically seeded builds") {
  NetworkConfig cfg = tiny_config();
  auto a = ClassificationModel::make(cfg, 42);
  auto b = ClassificationModel::make(cfg, 42);
  auto data = gen_synthetic(SyntheticSpec{}, 1, 2);
  auto inputs = prepare_pathway_inputs({data[0].clip.frames}, cfg, 8);
  Tensor ya = a.backbone().forward_sequence(inputs);
  Tensor yb = b.backbone().forward_sequence(inputs);
  for (int64_t i = 0; i < ya.numel(); ++i)
    CHECK(ya.data()[static_cast<size_t>(i)] == yb.data()[static_cast<size_t>(i)]);
}

TEST_CASE("alpha=0 on every link equals fully independent pathways") {
  NetworkConfig cfg = tiny_config();
  auto model = ClassificationModel::make(cfg, 13);
  for (int i = 0; i < 4; ++i) {
    std::fill(model.backbone().fast_to_slow(i).alpha.mut_data().begin(),
              model.backbone().fast_to_slow(i).alpha.mut_data().end(), 0.0f);
    std::fill(model.backbone().slow_to_single(i).alpha.mut_data().begin(),
              model.backbone().slow_to_single(i).alpha.mut_data().end(), 0.0f);
  }
  auto data = gen_synthetic(SyntheticSpec{}, 1, 3);
  auto inputs = prepare_pathway_inputs({data[0].clip.frames}, cfg, 8);
  auto fused = model.backbone().forward_res5(inputs);
  // run each pathway standalone
  Tensor single = model.backbone().single_pathway().run(inputs.single).back();
  Tensor slow = model.backbone().slow_pathway().run(inputs.slow).back();
  Tensor fast = model.backbone().fast_pathway().run(inputs.fast).back();
  const Tensor* want[3] = {&single, &slow, &fast};
  for (int p = 0; p < 3; ++p) {
    REQUIRE(fused[static_cast<size_t>(p)].shape() == want[p]->shape());
    for (int64_t i = 0; i < want[p]->numel(); ++i)
      CHECK(fused[static_cast<size_t>(p)].data()[static_cast<size_t>(i)] ==
            want[p]->data()[static_cast<size_t>(i)]);
  }
}

TEST_CASE("gradient reaches the first layer of every pathway") {
  NetworkConfig cfg = tiny_config();
  auto model = ClassificationModel::make(cfg, 14);
  auto data = gen_synthetic(SyntheticSpec{}, 2, 4);
  std::vector<Tensor> frames{data[0].clip.frames, data[1].clip.frames};
  auto inputs = prepare_pathway_inputs(frames, cfg, 8);
  Tensor logits = model.forward(inputs, ForwardCtx{});
  cross_entropy(logits, {0, 1}).backward();
  for (const auto* pathway :
       {&model.backbone().single_pathway(), &model.backbone().slow_pathway(),
        &model.backbone().fast_pathway()}) {
    double norm = 0.0;
    REQUIRE(pathway->stem.w.has_grad());
    for (float g : pathway->stem.w.grad()) norm += static_cast<double>(g) * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("fast pathway needs fewer MACs than slow at beta <= 1/4, equal length") {
  NetworkConfig cfg = tiny_config();
  cfg.stem_width = 8;
  cfg.slow_widths = {8, 16, 32, 64};
  for (double beta : {0.25, 0.125}) {
    cfg.beta = beta;
    Rng rng(15);
    Pathway slow = Pathway::make(cfg.slow_config(), 1, false, rng);
    Pathway fast = Pathway::make(cfg.fast_config(), 1, false, rng);
    const Shape input{1, 1, 4, 32, 32};  // same temporal length for both
    CHECK(fast.count_macs(input) < slow.count_macs(input));
  }
}

TEST_CASE("single-only mode runs without slow/fast inputs") {
  NetworkConfig cfg = tiny_config();
  cfg.pathways = PathwaySet::single_only;
  auto model = ClassificationModel::make(cfg, 16);
  auto data = gen_synthetic(SyntheticSpec{}, 2, 5);
  std::vector<Tensor> frames{data[0].clip.frames, data[1].clip.frames};
  auto inputs = prepare_pathway_inputs(frames, cfg, 8);
  CHECK_FALSE(inputs.slow.defined());
  Tensor logits = model.forward(inputs, ForwardCtx{});
  CHECK(logits.shape() == Shape{2, 4});
}

TEST_SUITE_END();
