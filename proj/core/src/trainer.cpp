#include "tristream/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace tristream {

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ValueError("train: lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ValueError("train: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ValueError("train: weight_decay must be >= 0");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ValueError("train: dropout must be in [0,1)");
  if (batch_size < 1) throw ValueError("train: batch_size must be >= 1");
  if (epochs < 1) throw ValueError("train: epochs must be >= 1");
}

void sgd_step(Tensor& param, std::span<const float> grad, std::vector<float>& velocity,
              const TrainConfig& cfg) {
  auto p = param.mut_data();
  if (velocity.size() != p.size()) velocity.assign(p.size(), 0.0f);
  const float m = static_cast<float>(cfg.momentum);
  const float wd = static_cast<float>(cfg.weight_decay);
  const float lr = static_cast<float>(cfg.lr);
  for (size_t i = 0; i < p.size(); ++i) {
    const float g = grad.empty() ? 0.0f : grad[i];
    velocity[i] = m * velocity[i] + g + wd * p[i];
    p[i] -= lr * velocity[i];
  }
}

Sgd::Sgd(ParamList params) : params_(std::move(params)) {
  velocity_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i)
    velocity_[i].assign(static_cast<size_t>(params_[i].tensor.numel()), 0.0f);
}

void Sgd::zero_grad() {
  for (auto& p : params_) {
    p.tensor.mut_grad();
    p.tensor.zero_grad();
  }
}

void Sgd::step(const TrainConfig& cfg) {
  for (size_t i = 0; i < params_.size(); ++i)
    sgd_step(params_[i].tensor,
             params_[i].tensor.has_grad() ? params_[i].tensor.grad()
                                          : std::span<const float>{},
             velocity_[i], cfg);
}

void write_epoch_csv(const std::filesystem::path& path,
                     const std::vector<EpochLog>& epochs) {
  std::ofstream out(path);
  if (!out) throw ValueError("write_epoch_csv: cannot open " + path.string());
  out << "epoch,loss,top1,top5\n";
  out.precision(9);
  for (const auto& e : epochs)
    out << e.epoch << ',' << e.loss << ',' << e.top1 << ',' << e.top5 << '\n';
}

namespace {

std::vector<std::vector<float>> snapshot_params(const ParamList& params) {
  std::vector<std::vector<float>> snap;
  snap.reserve(params.size());
  for (const auto& p : params)
    snap.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return snap;
}

void restore_params(ParamList& params, const std::vector<std::vector<float>>& snap) {
  for (size_t i = 0; i < params.size(); ++i)
    std::copy(snap[i].begin(), snap[i].end(), params[i].tensor.mut_data().begin());
}

std::vector<std::vector<double>> logits_to_rows(const Tensor& logits) {
  const int64_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::vector<double>> rows(static_cast<size_t>(n),
                                        std::vector<double>(static_cast<size_t>(k)));
  const float* d = logits.data().data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j)
      rows[static_cast<size_t>(i)][static_cast<size_t>(j)] = d[i * k + j];
  return rows;
}

}  // namespace

TrainResult train_classification(ClassificationModel& model,
                                 const std::vector<LabeledClip>& data,
                                 const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ValueError("train: empty dataset");
  const NetworkConfig& net = model.config();
  Rng rng(cfg.seed ^ 0x7261696e65723aull);
  ParamList params = model.parameters();
  Sgd opt(params);
  TrainResult result;
  auto last_good = snapshot_params(params);

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    int64_t seen = 0, top1_hits = 0, top5_hits = 0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> frames;
      std::vector<int64_t> labels;
      std::vector<int> labels_int;
      for (size_t i = start; i < end; ++i) {
        const LabeledClip& sample = data[order[i]];
        frames.push_back(train_crop(sample.clip.frames, net.crop, rng, cfg.hflip));
        labels.push_back(sample.label);
        labels_int.push_back(sample.label);
      }
      ForwardCtx ctx{true, static_cast<float>(cfg.dropout_p), &rng};
      Tensor logits = model.forward_clips(frames, data[0].clip.fps, ctx);
      Tensor loss = cross_entropy(logits, labels);
      if (!std::isfinite(loss.item())) {
        restore_params(params, last_good);
        result.diverged = true;
        return result;
      }
      opt.zero_grad();
      loss.backward();
      opt.step(cfg);

      const auto rows = logits_to_rows(logits);
      for (size_t i = 0; i < rows.size(); ++i) {
        const std::vector<std::vector<double>> one{rows[i]};
        const std::vector<int> lab{labels_int[i]};
        top1_hits += topk_accuracy(one, lab, 1) > 0.5 ? 1 : 0;
        top5_hits += topk_accuracy(one, lab, 5) > 0.5 ? 1 : 0;
      }
      loss_sum += loss.item() * static_cast<double>(end - start);
      seen += static_cast<int64_t>(end - start);
    }

    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(seen);
    log.top1 = static_cast<double>(top1_hits) / static_cast<double>(seen);
    log.top5 = static_cast<double>(top5_hits) / static_cast<double>(seen);
    result.epochs.push_back(log);
    last_good = snapshot_params(params);
  }
  return result;
}

std::vector<double> infer_video(const ClassificationModel& model, const VideoClip& video,
                                int n_clips, int crop) {
  NoGradGuard no_grad;
  const NetworkConfig& net = model.config();
  const std::vector<VideoClip> entries =
      inference_clips(video, n_clips, net.frames, crop);
  std::vector<Tensor> frames;
  frames.reserve(entries.size());
  for (const auto& e : entries) frames.push_back(e.frames);
  Tensor logits = model.forward_clips(frames, video.fps, ForwardCtx{});
  Tensor probs = softmax(logits, 1);
  const int64_t k = probs.dim(1);
  std::vector<double> mean(static_cast<size_t>(k), 0.0);
  const float* d = probs.data().data();
  for (int64_t i = 0; i < probs.dim(0); ++i)
    for (int64_t j = 0; j < k; ++j) mean[static_cast<size_t>(j)] += d[i * k + j];
  for (auto& v : mean) v /= static_cast<double>(probs.dim(0));
  return mean;
}

EvalResult evaluate_classification(const ClassificationModel& model,
                                   const std::vector<LabeledClip>& data, int n_clips,
                                   int crop) {
  if (data.empty()) throw ValueError("evaluate: empty dataset");
  EvalResult result;
  std::vector<int> labels;
  for (const auto& sample : data) {
    result.probs.push_back(infer_video(model, sample.clip, n_clips, crop));
    labels.push_back(sample.label);
  }
  for (const auto& p : result.probs)
    result.preds.push_back(static_cast<int>(
        std::max_element(p.begin(), p.end()) - p.begin()));
  const int num_classes = model.config().num_classes;
  result.report.top1 = topk_accuracy(result.probs, labels, 1);
  result.report.top5 = topk_accuracy(result.probs, labels, 5);
  result.report.confusion = confusion_matrix(result.preds, labels, num_classes);
  return result;
}

TrainResult train_detection(DetectionModel& model, const std::vector<DetectionClip>& data,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ValueError("train_detection: empty dataset");
  const int num_classes = model.config().num_classes;
  Rng rng(cfg.seed ^ 0x6465746563743aull);
  ParamList params = model.parameters();
  Sgd opt(params);
  TrainResult result;
  auto last_good = snapshot_params(params);

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    int64_t batches = 0, box_total = 0, box_hits = 0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> frames;
      std::vector<std::vector<Box>> boxes;
      std::vector<std::vector<int>> box_classes;
      for (size_t i = start; i < end; ++i) {
        const DetectionClip& sample = data[order[i]];
        frames.push_back(sample.clip.frames);
        std::vector<Box> bs;
        for (const auto& ann : sample.boxes) {
          bs.push_back(ann.box);
          box_classes.push_back(ann.class_ids);
        }
        boxes.push_back(std::move(bs));
      }
      ForwardCtx ctx{true, static_cast<float>(cfg.dropout_p), &rng};
      Tensor logits = model.box_logits(frames, boxes, data[0].clip.fps, ctx);

      Tensor targets = Tensor::zeros({logits.dim(0), num_classes});
      {
        auto t = targets.mut_data();
        for (size_t b = 0; b < box_classes.size(); ++b)
          for (int c : box_classes[b])
            t[static_cast<int64_t>(b) * num_classes + c] = 1.0f;
      }
      Tensor loss = bce_with_logits(logits, targets);
      if (!std::isfinite(loss.item())) {
        restore_params(params, last_good);
        result.diverged = true;
        return result;
      }
      opt.zero_grad();
      loss.backward();
      opt.step(cfg);

      // box-level accuracy: argmax score lies in the ground-truth label set
      const float* lg = logits.data().data();
      for (size_t b = 0; b < box_classes.size(); ++b) {
        int best = 0;
        for (int c = 1; c < num_classes; ++c)
          if (lg[static_cast<int64_t>(b) * num_classes + c] >
              lg[static_cast<int64_t>(b) * num_classes + best])
            best = c;
        if (std::find(box_classes[b].begin(), box_classes[b].end(), best) !=
            box_classes[b].end())
          ++box_hits;
        ++box_total;
      }
      loss_sum += loss.item();
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(batches);
    log.top1 = static_cast<double>(box_hits) / static_cast<double>(box_total);
    log.top5 = log.top1;
    result.epochs.push_back(log);
    last_good = snapshot_params(params);
  }
  return result;
}

DetectionEval evaluate_detection(const DetectionModel& model,
                                 const std::vector<DetectionClip>& data) {
  DetectionEval eval;
  for (size_t i = 0; i < data.size(); ++i) {
    std::vector<BoxAnnotation> proposals = data[i].boxes;
    for (auto& p : proposals) p.group = static_cast<int>(i);
    auto dets = model.detect(data[i].clip, proposals);
    eval.detections.insert(eval.detections.end(), dets.begin(), dets.end());
    eval.ground_truth.insert(eval.ground_truth.end(), proposals.begin(), proposals.end());
  }
  const MeanApResult map_result =
      mean_ap(eval.detections, eval.ground_truth, model.config().num_classes);
  eval.report.map = map_result.map;
  eval.report.per_class_ap = map_result.per_class;
  // box-level ranking accuracy doubles as top1/top5 in the report
  std::vector<std::vector<double>> scores;
  std::vector<int> labels;
  for (size_t i = 0; i < eval.detections.size(); ++i) {
    scores.push_back(eval.detections[i].scores);
    labels.push_back(eval.ground_truth[i].class_ids.front());
  }
  eval.report.top1 = topk_accuracy(scores, labels, 1);
  eval.report.top5 = topk_accuracy(scores, labels, 5);
  std::vector<int> preds;
  for (const auto& s : scores)
    preds.push_back(static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()));
  eval.report.confusion = confusion_matrix(preds, labels, model.config().num_classes);
  return eval;
}

}  // namespace tristream
