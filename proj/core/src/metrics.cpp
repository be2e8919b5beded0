#include "tristream/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "tristream/tensor.hpp"

namespace tristream {

double iou(const Box& a, const Box& b) {
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1;
  const double ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

bool BoxAnnotation::has_class(int c) const {
  return std::find(class_ids.begin(), class_ids.end(), c) != class_ids.end();
}

double topk_accuracy(const std::vector<std::vector<double>>& scores,
                     const std::vector<int>& labels, int k) {
  if (scores.size() != labels.size())
    throw ValueError("topk_accuracy: scores/labels length mismatch");
  if (scores.empty()) throw ValueError("topk_accuracy: no samples");
  if (k < 1) throw ValueError("topk_accuracy: k must be >= 1");
  int64_t hits = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const auto& row = scores[i];
    const int y = labels[i];
    if (y < 0 || y >= static_cast<int>(row.size()))
      throw ValueError("topk_accuracy: label out of range at sample " + std::to_string(i));
    // rank = classes strictly better, plus equal-scored ones with a lower index
    int rank = 0;
    for (int c = 0; c < static_cast<int>(row.size()); ++c) {
      if (row[c] > row[y]) ++rank;
      else if (row[c] == row[y] && c < y) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

std::vector<std::vector<int64_t>> confusion_matrix(const std::vector<int>& preds,
                                                   const std::vector<int>& labels,
                                                   int num_classes) {
  if (preds.size() != labels.size())
    throw ValueError("confusion_matrix: preds/labels length mismatch");
  std::vector<std::vector<int64_t>> counts(
      static_cast<size_t>(num_classes),
      std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || preds[i] < 0 ||
        preds[i] >= num_classes)
      throw ValueError("confusion_matrix: class id out of range at sample " +
                       std::to_string(i));
    ++counts[static_cast<size_t>(labels[i])][static_cast<size_t>(preds[i])];
  }
  return counts;
}

std::optional<double> average_precision(const std::vector<Detection>& dets,
                                        const std::vector<BoxAnnotation>& gts,
                                        int class_id, double iou_thresh) {
  std::vector<size_t> gt_idx;
  for (size_t i = 0; i < gts.size(); ++i)
    if (gts[i].has_class(class_id)) gt_idx.push_back(i);
  if (gt_idx.empty()) return std::nullopt;

  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return dets[a].scores.at(static_cast<size_t>(class_id)) >
           dets[b].scores.at(static_cast<size_t>(class_id));
  });

  std::vector<bool> matched(gt_idx.size(), false);
  std::vector<int> is_tp;
  is_tp.reserve(order.size());
  for (size_t oi : order) {
    const Detection& det = dets[oi];
    double best = 0.0;
    int best_g = -1;
    for (size_t g = 0; g < gt_idx.size(); ++g) {
      if (matched[g]) continue;
      const BoxAnnotation& gt = gts[gt_idx[g]];
      if (gt.group != det.group) continue;
      const double v = iou(det.box, gt.box);
      if (v >= iou_thresh && v > best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0) {
      matched[static_cast<size_t>(best_g)] = true;
      is_tp.push_back(1);
    } else {
      is_tp.push_back(0);
    }
  }

  // precision-recall points, then the all-point interpolated area
  const double n_gt = static_cast<double>(gt_idx.size());
  std::vector<double> precision, recall;
  int64_t tp = 0;
  for (size_t i = 0; i < is_tp.size(); ++i) {
    tp += is_tp[i];
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  double max_right = 0.0;
  std::vector<double> envelope(precision.size());
  for (size_t i = precision.size(); i-- > 0;) {
    max_right = std::max(max_right, precision[i]);
    envelope[i] = max_right;
  }
  for (size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * envelope[i];
    prev_recall = recall[i];
  }
  return ap;
}

MeanApResult mean_ap(const std::vector<Detection>& dets,
                     const std::vector<BoxAnnotation>& gts, int num_classes,
                     double iou_thresh) {
  MeanApResult result;
  result.per_class.resize(static_cast<size_t>(num_classes));
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    result.per_class[static_cast<size_t>(c)] = average_precision(dets, gts, c, iou_thresh);
    if (result.per_class[static_cast<size_t>(c)]) {
      sum += *result.per_class[static_cast<size_t>(c)];
      ++result.defined_classes;
    }
  }
  if (result.defined_classes == 0)
    throw ValueError("mean_ap: no class has ground truth instances");
  result.map = sum / static_cast<double>(result.defined_classes);
  return result;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["top1"] = top1;
  j["top5"] = top5;
  j["confusion"] = confusion;
  if (!per_class_ap.empty()) {
    nlohmann::ordered_json ap = nlohmann::ordered_json::array();
    for (const auto& v : per_class_ap) {
      if (v)
        ap.push_back(*v);
      else
        ap.push_back(nullptr);
    }
    j["per_class_ap"] = ap;
  }
  if (map) j["map"] = *map;
  return j.dump(2);
}

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw ValueError("write_metrics_json: cannot open " + path.string());
  out << report.to_json() << '\n';
}

void write_confusion_csv(const std::filesystem::path& path,
                         const std::vector<std::vector<int64_t>>& confusion) {
  std::ofstream out(path);
  if (!out) throw ValueError("write_confusion_csv: cannot open " + path.string());
  out << "label";
  for (size_t c = 0; c < confusion.size(); ++c) out << ",pred_" << c;
  out << '\n';
  for (size_t r = 0; r < confusion.size(); ++r) {
    out << r;
    for (int64_t v : confusion[r]) out << ',' << v;
    out << '\n';
  }
}

void write_ap_csv(const std::filesystem::path& path,
                  const std::vector<std::optional<double>>& per_class_ap) {
  std::ofstream out(path);
  if (!out) throw ValueError("write_ap_csv: cannot open " + path.string());
  out << "class,ap,defined\n";
  for (size_t c = 0; c < per_class_ap.size(); ++c) {
    out << c << ',';
    if (per_class_ap[c])
      out << *per_class_ap[c] << ",1\n";
    else
      out << "," << "0\n";
  }
}

}  // namespace tristream
