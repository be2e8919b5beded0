#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tristream/detector.hpp"
#include "tristream/synthetic.hpp"

using namespace tristream;

namespace {

NetworkConfig detect_config() {
  NetworkConfig cfg;
  cfg.strides = {8, 4, 2};
  cfg.beta = 0.25;
  cfg.in_channels = 1;
  cfg.frames = 8;
  cfg.crop = 32;
  cfg.stem_width = 4;
  cfg.slow_widths = {4, 8, 8, 16};
  cfg.blocks = {1, 1, 1, 1};
  cfg.num_classes = 4;
  cfg.roi_size = 3;
  return cfg;
}

SyntheticSpec detect_spec() {
  SyntheticSpec spec;
  spec.spatial = 40;
  spec.object_size = 6;
  spec.num_objects = 2;
  return spec;
}

}  // namespace

TEST_SUITE_BEGIN("detector");

TEST_CASE("dilated conv keeps spatial extent and equals a zero-inserted kernel") {
  Rng rng(1);
  Tensor x = Tensor::randn({1, 2, 2, 7, 7}, rng);
  Tensor w = Tensor::randn({3, 2, 1, 3, 3}, rng);
  Tensor b = Tensor::randn({3}, rng);
  Tensor dilated = conv3d(x, w, b, {1, 1, 1}, {0, 2, 2}, {1, 2, 2});
  CHECK(dilated.dim(3) == 7);
  CHECK(dilated.dim(4) == 7);

  // expand the 3x3 kernel to 5x5 with zeros between taps, run undilated
  Tensor w_expanded = Tensor::zeros({3, 2, 1, 5, 5});
  for (int64_t co = 0; co < 3; ++co)
    for (int64_t c = 0; c < 2; ++c)
      for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j)
          w_expanded.mut_data()[static_cast<size_t>(
              ((co * 2 + c) * 1 * 5 + i * 2) * 5 + j * 2)] = w.at({co, c, 0, i, j});
  Tensor plain = conv3d(x, w_expanded, b, {1, 1, 1}, {0, 2, 2}, {1, 1, 1});
  REQUIRE(plain.shape() == dilated.shape());
  for (int64_t i = 0; i < plain.numel(); ++i)
    CHECK(std::abs(plain.data()[static_cast<size_t>(i)] -
                   dilated.data()[static_cast<size_t>(i)]) <= 1e-5f);
}

TEST_CASE("dilated conv on zero input is a bias-only map") {
  Tensor x = Tensor::zeros({1, 2, 1, 5, 5});
  Tensor w = Tensor::zeros({2, 2, 1, 3, 3});
  Tensor b = Tensor::from_vec({2}, {0.5f, -1.0f});
  Tensor y = conv3d(x, w, b, {1, 1, 1}, {0, 2, 2}, {1, 2, 2});
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < 25; ++i)
      CHECK(y.data()[static_cast<size_t>(c * 25 + i)] == b.data()[static_cast<size_t>(c)]);
}

TEST_CASE("detection-mode res5 keeps the res4 resolution") {
  Rng rng(2);
  NetworkConfig cfg = detect_config();
  Backbone plain = Backbone::make(cfg, false, rng);
  Rng rng2(2);
  Backbone dilated = Backbone::make(cfg, true, rng2);
  auto data = gen_synthetic(SyntheticSpec{}, 1, 3);
  auto inputs = prepare_pathway_inputs({data[0].clip.frames}, cfg, 8);
  const auto f_plain = plain.forward_res5(inputs);
  const auto f_dilated = dilated.forward_res5(inputs);
  CHECK(f_plain[0].dim(3) == 1);
  CHECK(f_dilated[0].dim(3) == 2);  // stays at res4's 2x2 on a 32px input
  CHECK(f_dilated[0].dim(1) == f_plain[0].dim(1));
}

TEST_CASE("roi_extract of the full frame on constant features is all-constant") {
  Tensor feat = Tensor::full({1, 3, 2, 4, 4}, 2.75f);
  Tensor roi = roi_extract(feat, {0.0, 0.0, 1.0, 1.0}, 3, 3);
  CHECK(roi.shape() == Shape{3, 2, 3, 3});
  for (float v : roi.data()) CHECK(v == doctest::Approx(2.75f));
}

TEST_CASE("roi_extract with T=1 is plain 2D ROI extraction") {
  Rng rng(4);
  Tensor feat = Tensor::randn({1, 2, 1, 8, 8}, rng);
  const Box box{0.25, 0.25, 0.75, 0.75};
  Tensor roi = roi_extract(feat, box, 2, 2);
  CHECK(roi.shape() == Shape{2, 1, 2, 2});
  const auto want = oracle::roi_bilinear(feat, 0, box, 2, 2);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(std::abs(roi.data()[i] - want[i]) <= 1e-5);
}

TEST_CASE("roi_extract matches the bilinear sampling oracle") {
  Rng rng(5);
  for (int it = 0; it < 25; ++it) {
    Tensor feat = Tensor::randn({2, 2, 2, 8, 8}, rng);
    const double x1 = rng.uniform(0.0, 0.6), y1 = rng.uniform(0.0, 0.6);
    const Box box{x1, y1, x1 + rng.uniform(0.2, 0.4), y1 + rng.uniform(0.2, 0.4)};
    const int oh = static_cast<int>(rng.uniform_int(1, 3));
    const int ow = static_cast<int>(rng.uniform_int(1, 3));
    const int64_t n = rng.uniform_int(0, 1);
    Tensor roi = roi_extract(feat, box, oh, ow, n);
    const auto want = oracle::roi_bilinear(feat, n, box, oh, ow);
    REQUIRE(static_cast<size_t>(roi.numel()) == want.size());
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(std::abs(roi.data()[i] - want[i]) <= 1e-5);
  }
}

TEST_CASE("roi_extract is equivariant to whole-cell translations") {
  Rng rng(6);
  Tensor feat = Tensor::randn({1, 1, 1, 8, 8}, rng);
  // shift features one cell right
  Tensor shifted = Tensor::zeros({1, 1, 1, 8, 8});
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 1; x < 8; ++x)
      shifted.mut_data()[static_cast<size_t>(y * 8 + x)] = feat.at({0, 0, 0, y, x - 1});
  const Box box{0.25, 0.25, 0.625, 0.75};
  const Box moved{box.x1 + 0.125, box.y1, box.x2 + 0.125, box.y2};  // 1/8 = one cell
  Tensor a = roi_extract(feat, box, 3, 3);
  Tensor b = roi_extract(shifted, moved, 3, 3);
  for (int64_t i = 0; i < a.numel(); ++i)
    CHECK(a.data()[static_cast<size_t>(i)] ==
          doctest::Approx(b.data()[static_cast<size_t>(i)]).epsilon(1e-5));
}

TEST_CASE("degenerate boxes clamp to one cell and are counted") {
  reset_roi_degenerate_clamp_count();
  Rng rng(7);
  Tensor f = Tensor::randn({1, 1, 1, 4, 4}, rng);
  const Box thin{0.5, 0.1, 0.51, 0.9};  // 0.04 cells wide
  Tensor roi = roi_extract(f, thin, 2, 2);
  CHECK(roi.shape() == Shape{1, 1, 2, 2});
  CHECK(roi_degenerate_clamp_count() > 0);
  for (float v : roi.data()) CHECK(std::isfinite(v));
  reset_roi_degenerate_clamp_count();
  CHECK_THROWS_AS(roi_extract(f, {0.5, 0.5, 0.5, 0.9}, 2, 2), ValueError);
}

TEST_CASE("gradients flow through roi_extract into the features") {
  Rng rng(8);
  Tensor feat = Tensor::randn({1, 2, 2, 6, 6}, rng, 1.0f, true);
  Tensor roi = roi_extract(feat, {0.2, 0.2, 0.8, 0.8}, 3, 3);
  sum_all(roi).backward();
  double norm = 0.0;
  for (float g : feat.grad()) norm += static_cast<double>(g) * g;
  CHECK(norm > 0.0);
}

TEST_CASE("detect with zero final-layer weights scores sigmoid(bias) everywhere") {
  NetworkConfig cfg = detect_config();
  auto model = DetectionModel::make(cfg, 9);
  std::fill(model.roi_fc().w.mut_data().begin(), model.roi_fc().w.mut_data().end(), 0.0f);
  float* b = model.roi_fc().b.mut_data().data();
  for (int i = 0; i < 4; ++i) b[i] = 0.5f * static_cast<float>(i - 2);
  const auto data = gen_synthetic_detection(detect_spec(), 2, 10);
  const auto dets = model.detect(data[0].clip, data[0].boxes);
  REQUIRE(dets.size() == data[0].boxes.size());
  for (const auto& det : dets)
    for (int i = 0; i < 4; ++i)
      CHECK(det.scores[static_cast<size_t>(i)] ==
            doctest::Approx(1.0 / (1.0 + std::exp(-b[i]))).epsilon(1e-6));
}

TEST_CASE("score vector length equals num_classes (80 at the full config)") {
  NetworkConfig cfg = detect_config();
  cfg.num_classes = 80;
  auto model = DetectionModel::make(cfg, 11);
  const auto data = gen_synthetic_detection(detect_spec(), 1, 12);
  const auto dets = model.detect(data[0].clip, data[0].boxes);
  REQUIRE(!dets.empty());
  CHECK(dets[0].scores.size() == 80);
}

TEST_CASE("detections replay deterministically and permute with their boxes") {
  NetworkConfig cfg = detect_config();
  auto model = DetectionModel::make(cfg, 13);
  const auto data = gen_synthetic_detection(detect_spec(), 1, 14);
  REQUIRE(data[0].boxes.size() == 2);

  const auto a = model.detect(data[0].clip, data[0].boxes);
  const auto b = model.detect(data[0].clip, data[0].boxes);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t c = 0; c < a[i].scores.size(); ++c)
      CHECK(a[i].scores[c] == b[i].scores[c]);

  std::vector<BoxAnnotation> swapped{data[0].boxes[1], data[0].boxes[0]};
  const auto s = model.detect(data[0].clip, swapped);
  for (size_t c = 0; c < a[0].scores.size(); ++c) {
    CHECK(s[0].scores[c] == a[1].scores[c]);
    CHECK(s[1].scores[c] == a[0].scores[c]);
  }
}

TEST_CASE("sigmoid scores are monotone in the logits") {
  Rng rng(15);
  Tensor logits = Tensor::randn({1, 6}, rng);
  Tensor bumped = Tensor::zeros({1, 6});
  for (int64_t i = 0; i < 6; ++i)
    bumped.mut_data()[static_cast<size_t>(i)] = logits.data()[static_cast<size_t>(i)] + 0.5f;
  Tensor s0 = sigmoid(logits);
  Tensor s1 = sigmoid(bumped);
  for (int64_t i = 0; i < 6; ++i) {
    CHECK(s1.data()[static_cast<size_t>(i)] > s0.data()[static_cast<size_t>(i)]);
    CHECK(s0.data()[static_cast<size_t>(i)] > 0.0f);
    CHECK(s1.data()[static_cast<size_t>(i)] < 1.0f);
  }
}

TEST_CASE("gradients flow from box logits back to backbone weights") {
  NetworkConfig cfg = detect_config();
  auto model = DetectionModel::make(cfg, 16);
  const auto data = gen_synthetic_detection(detect_spec(), 2, 17);
  std::vector<Tensor> frames{data[0].clip.frames, data[1].clip.frames};
  std::vector<std::vector<Box>> boxes;
  for (const auto& clip : data) {
    std::vector<Box> bs;
    for (const auto& ann : clip.boxes) bs.push_back(ann.box);
    boxes.push_back(bs);
  }
  Tensor logits = model.box_logits(frames, boxes, 8, ForwardCtx{});
  Tensor targets = Tensor::zeros(logits.shape());
  bce_with_logits(logits, targets).backward();
  const Tensor& stem_w = model.backbone().single_pathway().stem.w;
  REQUIRE(stem_w.has_grad());
  double norm = 0.0;
  for (float g : stem_w.grad()) norm += static_cast<double>(g) * g;
  CHECK(norm > 0.0);
}

TEST_CASE("detection manifest round trip for ground truth and predictions") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "tristream_det_manifest";
  fs::create_directories(dir);
  std::vector<DetManifestRecord> records(2);
  records[0].path = (dir / "clip0.t3sr").string();
  records[0].fps = 8;
  records[0].keyframe = 0.5;
  records[0].box = {0.1, 0.2, 0.3, 0.4};
  records[0].class_ids = {1, 3};
  records[1].path = (dir / "clip0.t3sr").string();
  records[1].fps = 8;
  records[1].keyframe = 0.5;
  records[1].box = {0.5, 0.5, 0.9, 0.9};
  records[1].scores = {0.25, 0.5, 1.0, 0.125};
  write_detection_manifest(dir / "boxes.csv", records);
  const auto back = read_detection_manifest(dir / "boxes.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].class_ids == std::vector<int>{1, 3});
  CHECK(back[0].scores.empty());
  CHECK(back[1].class_ids.empty());
  REQUIRE(back[1].scores.size() == 4);
  CHECK(back[1].scores[2] == doctest::Approx(1.0));
  CHECK(back[1].box.x2 == doctest::Approx(0.9));
  fs::remove_all(dir);
}

TEST_SUITE_END();
