#pragma once

#include <vector>

#include "tristream/metrics.hpp"
#include "tristream/sampler.hpp"

namespace tristream {

// Moving-square dataset: class = motion direction of a bright square on a
// noisy background. The start position is drawn from the region valid for
// every direction and all noise is drawn before the class influences
// anything, so frame 0 is identically distributed across classes and a
// single-frame model is at chance by construction.
struct SyntheticSpec {
  int num_classes = 4;  // up, down, left, right (first num_classes of these)
  int frames = 8;
  int spatial = 32;
  int channels = 1;
  int object_size = 6;
  int speed = 1;  // pixels per frame
  double noise_std = 0.1;
  int fps = 8;
  int num_objects = 1;  // 2 for the detection variant

  // margin the square keeps from every border so all directions stay in frame
  int margin() const { return speed * (frames - 1); }
  void validate() const;
};

struct LabeledClip {
  VideoClip clip;
  int label = 0;
};

struct DetectionClip {
  VideoClip clip;
  std::vector<BoxAnnotation> boxes;
};

// Deterministic per (spec, seed, index); labels are balanced (index mod
// num_classes).
std::vector<LabeledClip> gen_synthetic(const SyntheticSpec& spec, int count,
                                       uint64_t seed);

// Renders one clip with explicit label/start; exposed so tests can hold the
// randomness fixed while varying only the class.
VideoClip render_moving_square(const SyntheticSpec& spec, int label, int start_x,
                               int start_y, Rng& noise_rng);

// Two squares per clip (left and right halves), one box annotation each at
// the center keyframe.
std::vector<DetectionClip> gen_synthetic_detection(const SyntheticSpec& spec,
                                                   int count, uint64_t seed);

}  // namespace tristream
