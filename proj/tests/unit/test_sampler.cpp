#include <doctest.h>

#include <filesystem>

#include "tristream/io.hpp"
#include "tristream/sampler.hpp"

using namespace tristream;

namespace {

VideoClip make_clip(int64_t t, int64_t h, int64_t w, int64_t c, int fps = 30) {
  Tensor frames = Tensor::zeros({t, h, w, c});
  float* d = frames.mut_data().data();
  for (int64_t i = 0; i < frames.numel(); ++i) d[i] = static_cast<float>(i % 251);
  return VideoClip{frames, fps};
}

// frame index encoded in pixel (0,0,0)
VideoClip indexed_clip(int64_t t) {
  Tensor frames = Tensor::zeros({t, 2, 2, 1});
  for (int64_t i = 0; i < t; ++i)
    frames.mut_data()[static_cast<size_t>(i * 4)] = static_cast<float>(i);
  return VideoClip{frames, 30};
}

}  // namespace

TEST_SUITE_BEGIN("sampler");

TEST_CASE("paper-anchored stride cases on a 30-frame clip") {
  VideoClip clip = indexed_clip(30);

  Tensor single = sample_pathway(clip, 30);
  CHECK(single.dim(0) == 1);
  CHECK(single.data()[0] == 0.0f);

  Tensor slow = sample_pathway(clip, 16);
  CHECK(slow.dim(0) == 2);
  CHECK(slow.data()[0] == 0.0f);
  CHECK(slow.data()[4] == 16.0f);

  Tensor fast = sample_pathway(clip, 2);
  CHECK(fast.dim(0) == 15);
  for (int64_t i = 0; i < 15; ++i)
    CHECK(fast.data()[static_cast<size_t>(i * 4)] == static_cast<float>(2 * i));
}

TEST_CASE("stride 1 returns the clip unchanged") {
  VideoClip clip = make_clip(7, 3, 3, 1);
  Tensor out = sample_pathway(clip, 1);
  REQUIRE(out.shape() == clip.frames.shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    CHECK(out.data()[static_cast<size_t>(i)] == clip.frames.data()[static_cast<size_t>(i)]);
}

TEST_CASE("sample_pathway length is ceil(T/theta) exhaustively") {
  for (int64_t t = 1; t <= 128; ++t) {
    VideoClip clip{Tensor::zeros({t, 1, 1, 1}), 30};
    for (int theta = 1; theta <= 64; ++theta) {
      Tensor out = sample_pathway(clip, theta);
      CHECK(out.dim(0) == (t + theta - 1) / theta);
    }
  }
}

TEST_CASE("pathway output is an ordered subsequence with correct indices") {
  Rng rng(3);
  for (int it = 0; it < 50; ++it) {
    const int64_t t = rng.uniform_int(1, 40);
    const int theta = static_cast<int>(rng.uniform_int(1, 12));
    VideoClip clip = indexed_clip(t);
    Tensor out = sample_pathway(clip, theta);
    for (int64_t i = 0; i < out.dim(0); ++i)
      CHECK(out.data()[static_cast<size_t>(i * 4)] == static_cast<float>(i * theta));
  }
}

TEST_CASE("stride triple ordering is enforced") {
  CHECK_NOTHROW((StrideTriple{8, 4, 2}.validate()));
  CHECK_THROWS_AS((StrideTriple{8, 8, 2}.validate()), ValueError);
  CHECK_THROWS_AS((StrideTriple{8, 2, 4}.validate()), ValueError);
  CHECK_THROWS_AS((StrideTriple{8, 4, 0}.validate()), ValueError);
}

TEST_CASE("train_crop on exactly crop-sized input is identity modulo flip") {
  VideoClip clip = make_clip(2, 8, 8, 1);
  Rng rng(4);
  for (int it = 0; it < 8; ++it) {
    Tensor out = train_crop(clip.frames, 8, rng);
    REQUIRE(out.shape() == clip.frames.shape());
    bool identity = true, flipped = true;
    for (int64_t t = 0; t < 2 && (identity || flipped); ++t)
      for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 0; x < 8; ++x) {
          const float v = out.at({t, y, x, 0});
          if (v != clip.frames.at({t, y, x, 0})) identity = false;
          if (v != clip.frames.at({t, y, 7 - x, 0})) flipped = false;
        }
    CHECK((identity || flipped));
  }
}

TEST_CASE("train_crop rejects inputs smaller than the crop") {
  VideoClip clip = make_clip(1, 16, 16, 1);
  Rng rng(5);
  CHECK_THROWS_AS(train_crop(clip.frames, 32, rng), ValueError);
}

TEST_CASE("train_crop replays exactly under a fixed seed") {
  VideoClip clip = make_clip(3, 64, 64, 1);
  Rng rng_a(77);
  Rng rng_b(77);
  for (int it = 0; it < 5; ++it) {
    Tensor a = train_crop(clip.frames, 32, rng_a);
    Tensor b = train_crop(clip.frames, 32, rng_b);
    REQUIRE(a.shape() == b.shape());
    for (int64_t i = 0; i < a.numel(); ++i)
      CHECK(a.data()[static_cast<size_t>(i)] == b.data()[static_cast<size_t>(i)]);
  }
}

TEST_CASE("resize_shorter_side identity when already at target") {
  VideoClip clip = make_clip(2, 16, 24, 1);
  Tensor out = resize_shorter_side(clip.frames, 16);
  CHECK(out.shape() == clip.frames.shape());
}

TEST_CASE("resize_shorter_side preserves constants under 2x downscale") {
  Tensor frames = Tensor::full({1, 8, 8, 1}, 3.25f);
  Tensor out = resize_shorter_side(frames, 4);
  REQUIRE(out.shape() == Shape{1, 4, 4, 1});
  for (float v : out.data()) CHECK(v == doctest::Approx(3.25f));
}

TEST_CASE("resize_shorter_side averages a checkerboard 2x downscale") {
  // 4x4 checkerboard of 0/1 -> every 2x2 block averages to 0.5
  std::vector<float> board(16);
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 4; ++x)
      board[static_cast<size_t>(y * 4 + x)] = static_cast<float>((x + y) % 2);
  Tensor frames = Tensor::from_vec({1, 4, 4, 1}, board);
  Tensor out = resize_shorter_side(frames, 2);
  REQUIRE(out.shape() == Shape{1, 2, 2, 1});
  for (float v : out.data()) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("resize_shorter_side keeps aspect ratio") {
  VideoClip clip = make_clip(1, 8, 16, 1);
  Tensor out = resize_shorter_side(clip.frames, 4);
  CHECK(out.dim(1) == 4);
  CHECK(out.dim(2) == 8);
}

TEST_CASE("inference_clips returns n_clips*3 entries at the crop size") {
  VideoClip clip = make_clip(40, 20, 36, 1);
  auto clips = inference_clips(clip, 10, 8, 16);
  CHECK(clips.size() == 30);
  for (const auto& c : clips) {
    CHECK(c.frames.dim(0) == 8);
    CHECK(c.frames.dim(1) == 16);
    CHECK(c.frames.dim(2) == 16);
  }
}

TEST_CASE("inference_clips on a crop-sized square video gives 3 identical crops") {
  VideoClip clip = make_clip(8, 16, 16, 1);
  auto clips = inference_clips(clip, 1, 8, 16);
  REQUIRE(clips.size() == 3);
  for (int k = 1; k < 3; ++k)
    for (int64_t i = 0; i < clips[0].frames.numel(); ++i)
      CHECK(clips[0].frames.data()[static_cast<size_t>(i)] ==
            clips[static_cast<size_t>(k)].frames.data()[static_cast<size_t>(i)]);
}

TEST_CASE("landscape 256x512 video crops at x offsets 0, 128, 256") {
  // shorter side (256) already at crop; mark columns so offsets are readable
  Tensor frames = Tensor::zeros({1, 4, 8, 1});  // scaled-down analogue 4x8, crop 4
  for (int64_t x = 0; x < 8; ++x)
    for (int64_t y = 0; y < 4; ++y)
      frames.mut_data()[static_cast<size_t>(y * 8 + x)] = static_cast<float>(x);
  VideoClip clip{frames, 30};
  auto clips = inference_clips(clip, 1, 1, 4);
  REQUIRE(clips.size() == 3);
  CHECK(clips[0].frames.at({0, 0, 0, 0}) == 0.0f);   // left crop starts at x=0
  CHECK(clips[1].frames.at({0, 0, 0, 0}) == 2.0f);   // center crop starts at (8-4)/2
  CHECK(clips[2].frames.at({0, 0, 0, 0}) == 4.0f);   // right crop starts at 8-4
}

TEST_CASE("inference_clips precondition: video must cover the window") {
  VideoClip clip = make_clip(4, 16, 16, 1);
  CHECK_THROWS_AS(inference_clips(clip, 2, 8, 16), ValueError);
}

TEST_CASE("class manifest round trip resolves paths relative to the manifest") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "tristream_manifest_test";
  fs::create_directories(dir / "clips");
  Tensor t = Tensor::zeros({2, 4, 4, 1});
  write_tensor(dir / "clips" / "a.t3sr", t);
  std::vector<ClassSample> samples{{(dir / "clips" / "a.t3sr").string(), 24, 3}};
  write_class_manifest(dir / "manifest.csv", samples);
  auto back = read_class_manifest(dir / "manifest.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].fps == 24);
  CHECK(back[0].label == 3);
  CHECK_NOTHROW(read_tensor(back[0].path));
  fs::remove_all(dir);
}

TEST_CASE("clip validation rejects bad channel counts and fps") {
  VideoClip bad{Tensor::zeros({2, 4, 4, 2}), 30};
  CHECK_THROWS_AS(bad.validate(), ValueError);
  VideoClip bad_fps{Tensor::zeros({2, 4, 4, 1}), 0};
  CHECK_THROWS_AS(bad_fps.validate(), ValueError);
  CHECK_THROWS_AS(sample_pathway(VideoClip{Tensor::zeros({2, 4, 4, 1}), 30}, 0),
                  ValueError);
}

TEST_SUITE_END();
