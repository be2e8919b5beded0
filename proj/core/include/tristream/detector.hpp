#pragma once

#include <filesystem>

#include "tristream/backbone.hpp"
#include "tristream/heads.hpp"
#include "tristream/metrics.hpp"

namespace tristream {

// ROI-align-style extraction: the 2D box is applied identically at every
// temporal index; each out_h x out_w cell is bilinearly sampled at its
// center. Returns [C,T,out_h,out_w] for the given batch entry,
// differentiable through `feat`. Boxes thinner than one feature cell are
// clamped to a 1x1-cell span (counted, see below).
Tensor roi_extract(const Tensor& feat, const Box& box, int out_h, int out_w,
                   int64_t batch_index = 0);

int64_t roi_degenerate_clamp_count();
void reset_roi_degenerate_clamp_count();

// Detection pipeline: backbone with stride-1, dilation-2 res5, fused res5
// map, per-box ROI features max-pooled over grid and time, one linear
// layer, per-class sigmoid. Proposals come from ground truth (or an
// external detections manifest).
class DetectionModel {
 public:
  static DetectionModel make(const NetworkConfig& cfg, uint64_t seed);

  // [sum(boxes), num_classes] logits for one batch of clips.
  Tensor box_logits(const std::vector<Tensor>& clip_frames,
                    const std::vector<std::vector<Box>>& boxes_per_clip, int fps,
                    const ForwardCtx& ctx) const;
  std::vector<Detection> detect(const VideoClip& clip,
                                const std::vector<BoxAnnotation>& proposals) const;

  ParamList parameters() const;
  const NetworkConfig& config() const { return cfg_; }
  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  LinearLayer& roi_fc() { return roi_fc_; }

 private:
  NetworkConfig cfg_;
  Backbone backbone_;
  LinearLayer roi_fc_;
};

// --- detection manifest ------------------------------------------------------
// One record per (clip, box):
//   <clip path>,<fps>,<keyframe seconds>,<x1>,<y1>,<x2>,<y2>,<ids or scores>
// where ids are ';'-separated class ids (ground truth) and scores are
// ';'-separated per-class scores (predictions).
struct DetManifestRecord {
  std::string path;
  int fps = 30;
  double keyframe = 0.0;
  Box box;
  std::vector<int> class_ids;     // ground truth
  std::vector<double> scores;     // predictions
};

std::vector<DetManifestRecord> read_detection_manifest(const std::filesystem::path& path);
void write_detection_manifest(const std::filesystem::path& path,
                              const std::vector<DetManifestRecord>& records);

}  // namespace tristream
