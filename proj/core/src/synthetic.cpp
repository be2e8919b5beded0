#include "tristream/synthetic.hpp"

#include <array>

namespace tristream {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// dy, dx per class: up, down, left, right
constexpr std::array<std::array<int, 2>, 4> kDirections{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 2 || num_classes > 4)
    throw ValueError("synthetic: num_classes must be 2..4 (motion directions)");
  if (frames < 2)
    throw ValueError("synthetic: at least 2 frames required for motion classes");
  if (speed < 1)
    throw ValueError("synthetic: speed must be >= 1, classes are indistinguishable "
                     "without motion");
  if (object_size < 1) throw ValueError("synthetic: object_size must be >= 1");
  if (channels != 1 && channels != 3)
    throw ValueError("synthetic: channels must be 1 or 3");
  if (noise_std < 0.0) throw ValueError("synthetic: noise_std must be >= 0");
  if (fps < 1) throw ValueError("synthetic: fps must be >= 1");
  if (num_objects < 1 || num_objects > 2)
    throw ValueError("synthetic: num_objects must be 1 or 2");
  if (2 * margin() + object_size > spatial)
    throw ValueError("synthetic: object (size " + std::to_string(object_size) +
                     ", travel " + std::to_string(margin()) +
                     ") does not stay in a " + std::to_string(spatial) + "px frame");
}

VideoClip render_moving_square(const SyntheticSpec& spec, int label, int start_x,
                               int start_y, Rng& noise_rng) {
  const int64_t t = spec.frames, s = spec.spatial, c = spec.channels;
  Tensor frames = Tensor::zeros({t, s, s, c});
  float* d = frames.mut_data().data();
  // noise first: identical drawing order for every class
  if (spec.noise_std > 0.0) {
    const int64_t n = frames.numel();
    for (int64_t i = 0; i < n; ++i)
      d[i] = static_cast<float>(spec.noise_std * noise_rng.normal());
  }
  const auto dir = kDirections[static_cast<size_t>(label)];
  for (int64_t ti = 0; ti < t; ++ti) {
    const int64_t y = start_y + dir[0] * spec.speed * ti;
    const int64_t x = start_x + dir[1] * spec.speed * ti;
    for (int64_t yy = y; yy < y + spec.object_size; ++yy)
      for (int64_t xx = x; xx < x + spec.object_size; ++xx)
        for (int64_t ci = 0; ci < c; ++ci) d[((ti * s + yy) * s + xx) * c + ci] += 1.0f;
  }
  return VideoClip{frames, spec.fps};
}

std::vector<LabeledClip> gen_synthetic(const SyntheticSpec& spec, int count,
                                       uint64_t seed) {
  spec.validate();
  const int lo = spec.margin();
  const int hi = spec.spatial - spec.object_size - spec.margin();
  std::vector<LabeledClip> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(splitmix64(seed ^ splitmix64(static_cast<uint64_t>(i))));
    const int label = i % spec.num_classes;
    const int sx = static_cast<int>(rng.uniform_int(lo, hi));
    const int sy = static_cast<int>(rng.uniform_int(lo, hi));
    out.push_back({render_moving_square(spec, label, sx, sy, rng), label});
  }
  return out;
}

std::vector<DetectionClip> gen_synthetic_detection(const SyntheticSpec& spec,
                                                   int count, uint64_t seed) {
  SyntheticSpec two = spec;
  two.num_objects = 2;
  two.validate();
  const int lo = two.margin();
  const int hi = two.spatial - two.object_size - two.margin();
  const int left_hi = two.spatial / 2 - two.object_size - 1;
  const int right_lo = two.spatial / 2 + 1;
  if (left_hi < lo || right_lo > hi)
    throw ValueError("synthetic detection: spatial " + std::to_string(two.spatial) +
                     " too small for two separated objects");
  const int kf = two.frames / 2;

  std::vector<DetectionClip> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(splitmix64(seed ^ splitmix64(static_cast<uint64_t>(i) + 0x5eedull)));
    int labels[2];
    int sx[2];
    int sy[2];
    Box kf_boxes[2];
    // resample until the keyframe boxes are disjoint
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      labels[0] = static_cast<int>(rng.uniform_int(0, two.num_classes - 1));
      labels[1] = static_cast<int>(rng.uniform_int(0, two.num_classes - 1));
      sx[0] = static_cast<int>(rng.uniform_int(lo, left_hi));
      sx[1] = static_cast<int>(rng.uniform_int(right_lo, hi));
      sy[0] = static_cast<int>(rng.uniform_int(lo, hi));
      sy[1] = static_cast<int>(rng.uniform_int(lo, hi));
      for (int b = 0; b < 2; ++b) {
        const auto dir = kDirections[static_cast<size_t>(labels[b])];
        const double y = sy[b] + dir[0] * two.speed * kf;
        const double x = sx[b] + dir[1] * two.speed * kf;
        const double s = two.spatial;
        kf_boxes[b] = {x / s, y / s, (x + two.object_size) / s,
                       (y + two.object_size) / s};
      }
      ok = iou(kf_boxes[0], kf_boxes[1]) == 0.0;
    }
    if (!ok) throw ValueError("synthetic detection: could not place disjoint boxes");

    // render both squares over a shared noise background
    const int64_t t = two.frames, s = two.spatial, c = two.channels;
    Tensor frames = Tensor::zeros({t, s, s, c});
    float* d = frames.mut_data().data();
    if (two.noise_std > 0.0) {
      const int64_t n = frames.numel();
      for (int64_t j = 0; j < n; ++j)
        d[j] = static_cast<float>(two.noise_std * rng.normal());
    }
    DetectionClip clip;
    for (int b = 0; b < 2; ++b) {
      const auto dir = kDirections[static_cast<size_t>(labels[b])];
      for (int64_t ti = 0; ti < t; ++ti) {
        const int64_t y = sy[b] + dir[0] * two.speed * ti;
        const int64_t x = sx[b] + dir[1] * two.speed * ti;
        for (int64_t yy = y; yy < y + two.object_size; ++yy)
          for (int64_t xx = x; xx < x + two.object_size; ++xx)
            for (int64_t ci = 0; ci < c; ++ci)
              d[((ti * s + yy) * s + xx) * c + ci] += 1.0f;
      }
      BoxAnnotation ann;
      ann.box = kf_boxes[b];
      ann.class_ids = {labels[b]};
      ann.keyframe_time = static_cast<double>(kf) / two.fps;
      ann.group = i;
      clip.boxes.push_back(std::move(ann));
    }
    clip.clip = VideoClip{frames, two.fps};
    out.push_back(std::move(clip));
  }
  return out;
}

}  // namespace tristream
