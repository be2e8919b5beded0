#pragma once

#include <filesystem>
#include <span>

#include "tristream/detector.hpp"
#include "tristream/model.hpp"
#include "tristream/synthetic.hpp"

namespace tristream {

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  double dropout_p = 0.5;
  int batch_size = 8;
  int epochs = 20;
  uint64_t seed = 0;
  bool hflip = true;

  void validate() const;
};

// v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
void sgd_step(Tensor& param, std::span<const float> grad, std::vector<float>& velocity,
              const TrainConfig& cfg);

class Sgd {
 public:
  explicit Sgd(ParamList params);
  void zero_grad();
  void step(const TrainConfig& cfg);

 private:
  ParamList params_;
  std::vector<std::vector<float>> velocity_;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  bool diverged = false;
};

void write_epoch_csv(const std::filesystem::path& path, const std::vector<EpochLog>& epochs);

// SGD over shuffled minibatches with softmax cross-entropy. Deterministic
// for a fixed config. On a non-finite loss the model is rolled back to the
// end of the previous epoch and the result is flagged diverged.
TrainResult train_classification(ClassificationModel& model,
                                 const std::vector<LabeledClip>& data,
                                 const TrainConfig& cfg);

// Mean softmax over the n_clips x 3 inference crops.
std::vector<double> infer_video(const ClassificationModel& model, const VideoClip& video,
                                int n_clips, int crop);

struct EvalResult {
  MetricsReport report;
  std::vector<std::vector<double>> probs;
  std::vector<int> preds;
};

EvalResult evaluate_classification(const ClassificationModel& model,
                                   const std::vector<LabeledClip>& data, int n_clips,
                                   int crop);

// Multi-label per-class BCE over ground-truth proposal boxes.
TrainResult train_detection(DetectionModel& model, const std::vector<DetectionClip>& data,
                            const TrainConfig& cfg);

struct DetectionEval {
  MetricsReport report;
  std::vector<Detection> detections;
  std::vector<BoxAnnotation> ground_truth;
};

DetectionEval evaluate_detection(const DetectionModel& model,
                                 const std::vector<DetectionClip>& data);

}  // namespace tristream
