#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tristream/rng.hpp"
#include "tristream/tensor.hpp"

namespace tristream {

// Dense frame volume [T,H,W,C] plus frame-rate metadata.
struct VideoClip {
  Tensor frames;
  int fps = 30;

  int64_t num_frames() const { return frames.dim(0); }
  int64_t height() const { return frames.dim(1); }
  int64_t width() const { return frames.dim(2); }
  int64_t channels() const { return frames.dim(3); }
  void validate() const;
};

// Temporal strides of the three pathways; theta3 < theta2 < theta1.
struct StrideTriple {
  int theta1 = 8;
  int theta2 = 4;
  int theta3 = 2;
  void validate() const;
};

// Frames at indices 0, theta, 2*theta, ... — ceil(T/theta) of them.
Tensor sample_pathway(const VideoClip& clip, int theta);

// Random crop to crop x crop with a uniform top-left offset, then a
// horizontal flip with probability 0.5 (suppressible for label-sensitive
// data). Input must be at least crop-sized.
Tensor train_crop(const Tensor& frames, int crop, Rng& rng, bool hflip = true);

// Bilinear resize so the shorter spatial side equals `target`; aspect
// ratio preserved.
Tensor resize_shorter_side(const Tensor& frames, int target);

// n_clips temporal windows of clip_len frames at uniformly spaced starts,
// each resized (shorter side -> crop) and cropped 3x along the longer side
// (both ends + center). Returns n_clips*3 clips.
std::vector<VideoClip> inference_clips(const VideoClip& video, int n_clips,
                                       int clip_len, int crop);

// [T,H,W,C] -> [C,T,H,W] network layout (plain data, no graph).
Tensor clip_to_input(const Tensor& frames);

// --- dataset manifest -------------------------------------------------------
// One record per line: <clip path>,<fps>,<label id>. Paths are resolved
// relative to the manifest's directory.
struct ClassSample {
  std::string path;
  int fps = 30;
  int label = 0;
};

std::vector<ClassSample> read_class_manifest(const std::filesystem::path& path);
void write_class_manifest(const std::filesystem::path& path,
                          const std::vector<ClassSample>& samples);

}  // namespace tristream
