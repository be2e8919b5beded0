#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tristream {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double area() const { return (x2 - x1) * (y2 - y1); }
  bool valid() const { return x1 < x2 && y1 < y2; }
};

// Intersection over union; disjoint or degenerate union -> 0.
double iou(const Box& a, const Box& b);

// Ground-truth box: normalized coords, multi-label class set, keyframe in
// seconds. `group` scopes matching (one group per clip/keyframe).
struct BoxAnnotation {
  Box box;
  std::vector<int> class_ids;
  double keyframe_time = 0.0;
  int group = 0;

  bool has_class(int c) const;
};

struct Detection {
  Box box;
  std::vector<double> scores;  // one sigmoid score per class
  double keyframe_time = 0.0;
  int group = 0;
};

// Fraction of samples whose label is among the k top scores; ties broken
// in favor of the lower class index.
double topk_accuracy(const std::vector<std::vector<double>>& scores,
                     const std::vector<int>& labels, int k);

// counts[label][prediction]
std::vector<std::vector<int64_t>> confusion_matrix(const std::vector<int>& preds,
                                                   const std::vector<int>& labels,
                                                   int num_classes);

// Pascal-VOC-2010-style AP (all-point interpolation) for one class.
// Detections sorted by score descending (stable), greedily matched to the
// highest-IoU unmatched ground truth of the same group at IoU >= thresh.
// No ground truth for the class -> nullopt (undefined).
std::optional<double> average_precision(const std::vector<Detection>& dets,
                                        const std::vector<BoxAnnotation>& gts,
                                        int class_id, double iou_thresh = 0.5);

struct MeanApResult {
  double map = 0.0;
  std::vector<std::optional<double>> per_class;
  int defined_classes = 0;
};

// Unweighted mean over classes with defined AP.
MeanApResult mean_ap(const std::vector<Detection>& dets,
                     const std::vector<BoxAnnotation>& gts, int num_classes,
                     double iou_thresh = 0.5);

struct MetricsReport {
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<std::vector<int64_t>> confusion;
  std::vector<std::optional<double>> per_class_ap;
  std::optional<double> map;

  std::string to_json() const;
};

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);
void write_confusion_csv(const std::filesystem::path& path,
                         const std::vector<std::vector<int64_t>>& confusion);
void write_ap_csv(const std::filesystem::path& path,
                  const std::vector<std::optional<double>>& per_class_ap);

}  // namespace tristream
