#include "tristream/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tristream/ops.hpp"

namespace tristream {

void VideoClip::validate() const {
  if (!frames.defined() || frames.rank() != 4)
    throw ValueError("VideoClip: frames must be a [T,H,W,C] tensor");
  const int64_t c = frames.dim(3);
  if (c != 1 && c != 3)
    throw ValueError("VideoClip: channel count must be 1 or 3, got " + std::to_string(c));
  if (fps < 1) throw ValueError("VideoClip: fps must be positive");
}

void StrideTriple::validate() const {
  if (theta3 < 1 || theta2 < 1 || theta1 < 1)
    throw ValueError("StrideTriple: all strides must be >= 1");
  if (!(theta3 < theta2 && theta2 < theta1))
    throw ValueError("StrideTriple: need theta3 < theta2 < theta1, got " +
                     std::to_string(theta1) + "/" + std::to_string(theta2) + "/" +
                     std::to_string(theta3));
}

Tensor sample_pathway(const VideoClip& clip, int theta) {
  clip.validate();
  if (theta < 1) throw ValueError("sample_pathway: theta must be >= 1");
  const int64_t t = clip.num_frames();
  const int64_t out_t = (t + theta - 1) / theta;
  const int64_t frame_elems = clip.height() * clip.width() * clip.channels();
  Tensor out = Tensor::zeros({out_t, clip.height(), clip.width(), clip.channels()});
  const float* src = clip.frames.data().data();
  float* dst = out.mut_data().data();
  for (int64_t i = 0; i < out_t; ++i)
    std::memcpy(dst + i * frame_elems, src + i * theta * frame_elems,
                sizeof(float) * frame_elems);
  return out;
}

Tensor train_crop(const Tensor& frames, int crop, Rng& rng, bool hflip) {
  if (frames.rank() != 4)
    throw ValueError("train_crop: frames must be [T,H,W,C]");
  const int64_t t = frames.dim(0), h = frames.dim(1), w = frames.dim(2), c = frames.dim(3);
  if (h < crop || w < crop)
    throw ValueError("train_crop: input " + std::to_string(h) + "x" + std::to_string(w) +
                     " smaller than crop " + std::to_string(crop));
  const int64_t y0 = rng.uniform_int(0, h - crop);
  const int64_t x0 = rng.uniform_int(0, w - crop);
  const bool flip = hflip && rng.bernoulli(0.5);

  Tensor out = Tensor::zeros({t, crop, crop, c});
  const float* src = frames.data().data();
  float* dst = out.mut_data().data();
  for (int64_t ti = 0; ti < t; ++ti)
    for (int64_t y = 0; y < crop; ++y)
      for (int64_t x = 0; x < crop; ++x) {
        const int64_t sx = flip ? (x0 + crop - 1 - x) : (x0 + x);
        const float* s = src + ((ti * h + y0 + y) * w + sx) * c;
        float* d = dst + ((ti * crop + y) * crop + x) * c;
        for (int64_t ci = 0; ci < c; ++ci) d[ci] = s[ci];
      }
  return out;
}

Tensor resize_shorter_side(const Tensor& frames, int target) {
  if (frames.rank() != 4)
    throw ValueError("resize_shorter_side: frames must be [T,H,W,C]");
  if (target < 1) throw ValueError("resize_shorter_side: target must be positive");
  const int64_t t = frames.dim(0), h = frames.dim(1), w = frames.dim(2), c = frames.dim(3);
  const int64_t shorter = std::min(h, w);
  if (shorter == target) return frames;
  const double ratio = static_cast<double>(target) / static_cast<double>(shorter);
  const int64_t oh = (h == shorter) ? target
                                    : std::max<int64_t>(1, std::llround(h * ratio));
  const int64_t ow = (w == shorter) ? target
                                    : std::max<int64_t>(1, std::llround(w * ratio));

  Tensor out = Tensor::zeros({t, oh, ow, c});
  const float* src = frames.data().data();
  float* dst = out.mut_data().data();
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  for (int64_t ti = 0; ti < t; ++ti) {
    const float* plane = src + ti * h * w * c;
    for (int64_t y = 0; y < oh; ++y) {
      // half-pixel centers, borders clamped
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const int64_t y0 = static_cast<int64_t>(fy);
      const int64_t y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int64_t x = 0; x < ow; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        const int64_t x0 = static_cast<int64_t>(fx);
        const int64_t x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        float* d = dst + ((ti * oh + y) * ow + x) * c;
        for (int64_t ci = 0; ci < c; ++ci) {
          const double v00 = plane[(y0 * w + x0) * c + ci];
          const double v01 = plane[(y0 * w + x1) * c + ci];
          const double v10 = plane[(y1 * w + x0) * c + ci];
          const double v11 = plane[(y1 * w + x1) * c + ci];
          d[ci] = static_cast<float>((1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                     wy * ((1 - wx) * v10 + wx * v11));
        }
      }
    }
  }
  return out;
}

namespace {

Tensor crop_at(const Tensor& frames, int64_t y0, int64_t x0, int64_t crop) {
  const int64_t t = frames.dim(0), h = frames.dim(1), w = frames.dim(2), c = frames.dim(3);
  (void)h;
  Tensor out = Tensor::zeros({t, crop, crop, c});
  const float* src = frames.data().data();
  float* dst = out.mut_data().data();
  for (int64_t ti = 0; ti < t; ++ti)
    for (int64_t y = 0; y < crop; ++y)
      std::memcpy(dst + ((ti * crop + y) * crop) * c,
                  src + ((ti * frames.dim(1) + y0 + y) * w + x0) * c,
                  sizeof(float) * crop * c);
  return out;
}

}  // namespace

std::vector<VideoClip> inference_clips(const VideoClip& video, int n_clips,
                                       int clip_len, int crop) {
  video.validate();
  if (n_clips < 1) throw ValueError("inference_clips: n_clips must be >= 1");
  if (clip_len < 1) throw ValueError("inference_clips: clip_len must be >= 1");
  const int64_t t = video.num_frames();
  if (t < clip_len)
    throw ValueError("inference_clips: video has " + std::to_string(t) +
                     " frames, need " + std::to_string(clip_len));

  std::vector<int64_t> starts;
  if (n_clips == 1) {
    starts.push_back((t - clip_len) / 2);
  } else {
    for (int k = 0; k < n_clips; ++k)
      starts.push_back(std::llround(static_cast<double>(k) * (t - clip_len) /
                                    (n_clips - 1)));
  }

  std::vector<VideoClip> out;
  out.reserve(static_cast<size_t>(n_clips) * 3);
  for (int64_t start : starts) {
    Tensor window = Tensor::zeros({clip_len, video.height(), video.width(), video.channels()});
    const int64_t frame_elems = video.height() * video.width() * video.channels();
    std::memcpy(window.mut_data().data(),
                video.frames.data().data() + start * frame_elems,
                sizeof(float) * clip_len * frame_elems);
    Tensor resized = resize_shorter_side(window, crop);
    const int64_t h = resized.dim(1), w = resized.dim(2);
    const bool landscape = w >= h;
    const int64_t span = (landscape ? w : h) - crop;
    for (int64_t off : {static_cast<int64_t>(0), span / 2, span}) {
      Tensor cropped = landscape ? crop_at(resized, 0, off, crop)
                                 : crop_at(resized, off, 0, crop);
      out.push_back(VideoClip{cropped, video.fps});
    }
  }
  return out;
}

Tensor clip_to_input(const Tensor& frames) {
  if (frames.rank() != 4)
    throw ValueError("clip_to_input: frames must be [T,H,W,C]");
  const int64_t t = frames.dim(0), h = frames.dim(1), w = frames.dim(2), c = frames.dim(3);
  Tensor out = Tensor::zeros({c, t, h, w});
  const float* src = frames.data().data();
  float* dst = out.mut_data().data();
  const int64_t plane = h * w;
  for (int64_t ti = 0; ti < t; ++ti) {
    const float* tp = src + ti * plane * c;
    for (int64_t ci = 0; ci < c; ++ci) {
      float* dp = dst + (ci * t + ti) * plane;
      for (int64_t p = 0; p < plane; ++p) dp[p] = tp[p * c + ci];
    }
  }
  return out;
}

std::vector<ClassSample> read_class_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("read_class_manifest: cannot open " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<ClassSample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string p, fps_s, label_s;
    if (!std::getline(ss, p, ',') || !std::getline(ss, fps_s, ',') ||
        !std::getline(ss, label_s))
      throw ValueError("read_class_manifest: malformed line " + std::to_string(line_no) +
                       " in " + path.string());
    ClassSample s;
    s.path = (base / p).string();
    try {
      s.fps = std::stoi(fps_s);
      s.label = std::stoi(label_s);
    } catch (const std::exception&) {
      throw ValueError("read_class_manifest: bad number on line " + std::to_string(line_no));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_class_manifest(const std::filesystem::path& path,
                          const std::vector<ClassSample>& samples) {
  std::ofstream out(path);
  if (!out) throw ValueError("write_class_manifest: cannot open " + path.string());
  const std::filesystem::path base = path.parent_path();
  for (const auto& s : samples) {
    const auto rel = std::filesystem::proximate(s.path, base);
    out << rel.generic_string() << ',' << s.fps << ',' << s.label << '\n';
  }
}

}  // namespace tristream
