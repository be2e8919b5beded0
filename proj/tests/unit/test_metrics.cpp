#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tristream/metrics.hpp"

using namespace tristream;

namespace {

Detection det(Box box, std::vector<double> scores, int group = 0) {
  Detection d;
  d.box = box;
  d.scores = std::move(scores);
  d.group = group;
  return d;
}

BoxAnnotation gt(Box box, std::vector<int> ids, int group = 0) {
  BoxAnnotation g;
  g.box = box;
  g.class_ids = std::move(ids);
  g.group = group;
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("topk: perfect one-hot predictions give 1.0") {
  std::vector<std::vector<double>> scores{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<int> labels{0, 1, 2};
  CHECK(topk_accuracy(scores, labels, 1) == 1.0);
}

TEST_CASE("topk with k = num_classes is always 1.0") {
  std::vector<std::vector<double>> scores{{0.1, 0.9, 0.0}, {0.3, 0.3, 0.4}};
  std::vector<int> labels{0, 1};
  CHECK(topk_accuracy(scores, labels, 3) == 1.0);
  CHECK(topk_accuracy(scores, labels, 10) == 1.0);  // k beyond classes saturates
}

TEST_CASE("topk 3-sample hand case matches exhaustive counting") {
  // sample 0: label 1, scores rank it 2nd -> in top2, not top1
  // sample 1: label 0, tie with class 1 at 0.5 -> lower index wins top1
  // sample 2: label 2, scores rank it last -> only top3
  std::vector<std::vector<double>> scores{{0.9, 0.8, 0.1}, {0.5, 0.5, 0.2},
                                          {0.6, 0.3, 0.1}};
  std::vector<int> labels{1, 0, 2};
  CHECK(topk_accuracy(scores, labels, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(topk_accuracy(scores, labels, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(topk_accuracy(scores, labels, 3) == doctest::Approx(1.0));
  // tie-break goes to the lower class index: label 1 at equal score loses
  std::vector<std::vector<double>> tie{{0.5, 0.5}};
  CHECK(topk_accuracy(tie, {1}, 1) == 0.0);
  CHECK(topk_accuracy(tie, {0}, 1) == 1.0);
}

TEST_CASE("topk is monotone non-decreasing in k") {
  Rng rng(1);
  std::vector<std::vector<double>> scores;
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> row(6);
    for (auto& v : row) v = rng.uniform();
    scores.push_back(row);
    labels.push_back(static_cast<int>(rng.uniform_int(0, 5)));
  }
  double prev = 0.0;
  for (int k = 1; k <= 6; ++k) {
    const double acc = topk_accuracy(scores, labels, k);
    CHECK(acc >= prev);
    prev = acc;
  }
}

TEST_CASE("confusion matrix basics") {
  CHECK(confusion_matrix({0, 1, 2}, {0, 1, 2}, 3) ==
        std::vector<std::vector<int64_t>>{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto single = confusion_matrix({2}, {1}, 3);
  CHECK(single[1][2] == 1);
  int64_t total = 0;
  for (const auto& row : single)
    for (int64_t v : row) total += v;
  CHECK(total == 1);
}

TEST_CASE("confusion matrix matches a counting oracle on random data") {
  Rng rng(2);
  std::vector<int> preds, labels;
  for (int i = 0; i < 200; ++i) {
    preds.push_back(static_cast<int>(rng.uniform_int(0, 4)));
    labels.push_back(static_cast<int>(rng.uniform_int(0, 4)));
  }
  const auto got = confusion_matrix(preds, labels, 5);
  for (int l = 0; l < 5; ++l)
    for (int p = 0; p < 5; ++p) {
      int64_t count = 0;
      for (size_t i = 0; i < preds.size(); ++i)
        if (labels[i] == l && preds[i] == p) ++count;
      CHECK(got[static_cast<size_t>(l)][static_cast<size_t>(p)] == count);
    }
  // row sums are per-class sample counts
  for (int l = 0; l < 5; ++l) {
    int64_t row_sum = 0;
    for (int64_t v : got[static_cast<size_t>(l)]) row_sum += v;
    CHECK(row_sum == std::count(labels.begin(), labels.end(), l));
  }
}

TEST_CASE("iou analytic cases") {
  const Box a{0, 0, 1, 1};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, {2, 2, 3, 3}) == 0.0);
  CHECK(iou(a, {0.5, 0.0, 1.5, 1.0}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("iou is symmetric, bounded, and 1 on identical boxes") {
  Rng rng(3);
  for (int it = 0; it < 100; ++it) {
    const double x1 = rng.uniform(0, 0.8), y1 = rng.uniform(0, 0.8);
    const Box a{x1, y1, x1 + rng.uniform(0.05, 0.2), y1 + rng.uniform(0.05, 0.2)};
    const double x2 = rng.uniform(0, 0.8), y2 = rng.uniform(0, 0.8);
    const Box b{x2, y2, x2 + rng.uniform(0.05, 0.2), y2 + rng.uniform(0.05, 0.2)};
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("AP: one matching detection per ground truth gives 1.0") {
  const auto ap = average_precision({det({0, 0, 0.2, 0.2}, {0.9})},
                                    {gt({0, 0, 0.2, 0.2}, {0})}, 0);
  REQUIRE(ap.has_value());
  CHECK(*ap == doctest::Approx(1.0));
}

TEST_CASE("AP: spatially disjoint detections give 0.0") {
  const auto ap = average_precision(
      {det({0.5, 0.5, 0.7, 0.7}, {0.9}), det({0.8, 0.8, 0.9, 0.9}, {0.8})},
      {gt({0, 0, 0.2, 0.2}, {0})}, 0);
  REQUIRE(ap.has_value());
  CHECK(*ap == doctest::Approx(0.0));
}

TEST_CASE("AP: the 3-det/2-gt hand case equals 5/6") {
  // ranked TP(0.9), FP(0.8), TP(0.7): precision envelope 1 on [0,1/2],
  // 2/3 on (1/2,1] -> 0.5 + 1/3
  const std::vector<BoxAnnotation> gts{gt({0.0, 0.0, 0.2, 0.2}, {0}),
                                       gt({0.5, 0.5, 0.7, 0.7}, {0})};
  const std::vector<Detection> dets{det({0.0, 0.0, 0.19, 0.2}, {0.9}),
                                    det({0.3, 0.3, 0.45, 0.45}, {0.8}),
                                    det({0.5, 0.5, 0.7, 0.7}, {0.7})};
  const auto ap = average_precision(dets, gts, 0);
  REQUIRE(ap.has_value());
  CHECK(*ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(std::abs(*ap - oracle::average_precision(dets, gts, 0, 0.5)) <= 1e-5);
}

TEST_CASE("AP matches the brute-force enumeration oracle on random instances") {
  Rng rng(4);
  for (int it = 0; it < 15; ++it) {
    std::vector<BoxAnnotation> gts;
    std::vector<Detection> dets;
    const int n_gt = static_cast<int>(rng.uniform_int(1, 4));
    const int n_det = static_cast<int>(rng.uniform_int(1, 6));
    for (int i = 0; i < n_gt; ++i) {
      const double x = rng.uniform(0, 0.7), y = rng.uniform(0, 0.7);
      gts.push_back(gt({x, y, x + rng.uniform(0.1, 0.3), y + rng.uniform(0.1, 0.3)},
                       {0}, static_cast<int>(rng.uniform_int(0, 1))));
    }
    for (int i = 0; i < n_det; ++i) {
      const double x = rng.uniform(0, 0.7), y = rng.uniform(0, 0.7);
      dets.push_back(det({x, y, x + rng.uniform(0.1, 0.3), y + rng.uniform(0.1, 0.3)},
                         {rng.uniform()}, static_cast<int>(rng.uniform_int(0, 1))));
    }
    const auto got = average_precision(dets, gts, 0);
    REQUIRE(got.has_value());
    CHECK(std::abs(*got - oracle::average_precision(dets, gts, 0, 0.5)) <= 1e-5);
  }
}

TEST_CASE("AP is invariant under strictly monotone score transforms") {
  Rng rng(5);
  std::vector<BoxAnnotation> gts{gt({0.1, 0.1, 0.3, 0.3}, {0}),
                                 gt({0.6, 0.6, 0.8, 0.8}, {0})};
  std::vector<Detection> dets;
  for (int i = 0; i < 6; ++i) {
    const double x = rng.uniform(0, 0.7);
    dets.push_back(det({x, x, x + 0.2, x + 0.2}, {rng.uniform(0.1, 0.9)}));
  }
  const auto base = average_precision(dets, gts, 0);
  auto transformed = dets;
  for (auto& d : transformed) d.scores[0] = std::exp(3.0 * d.scores[0]) + 7.0;
  const auto after = average_precision(transformed, gts, 0);
  REQUIRE(base.has_value());
  REQUIRE(after.has_value());
  CHECK(*base == doctest::Approx(*after).epsilon(1e-12));
}

TEST_CASE("inserting a non-matching detection above a match cannot raise AP") {
  const std::vector<BoxAnnotation> gts{gt({0.1, 0.1, 0.3, 0.3}, {0})};
  std::vector<Detection> dets{det({0.1, 0.1, 0.3, 0.3}, {0.5})};
  const double base = *average_precision(dets, gts, 0);
  dets.push_back(det({0.7, 0.7, 0.9, 0.9}, {0.8}));  // higher-ranked miss
  const double after = *average_precision(dets, gts, 0);
  CHECK(after <= base);
}

TEST_CASE("zero-ground-truth classes are undefined and excluded from mAP") {
  const std::vector<BoxAnnotation> gts{gt({0.1, 0.1, 0.3, 0.3}, {1})};
  const std::vector<Detection> dets{det({0.1, 0.1, 0.3, 0.3}, {0.2, 0.9, 0.1})};
  CHECK_FALSE(average_precision(dets, gts, 0).has_value());
  const auto result = mean_ap(dets, gts, 3);
  CHECK(result.defined_classes == 1);
  CHECK_FALSE(result.per_class[0].has_value());
  REQUIRE(result.per_class[1].has_value());
  CHECK(result.map == doctest::Approx(*result.per_class[1]));
}

TEST_CASE("mean_ap trivial cases") {
  const std::vector<BoxAnnotation> gts{gt({0.1, 0.1, 0.3, 0.3}, {0}),
                                       gt({0.5, 0.5, 0.7, 0.7}, {1})};
  const std::vector<Detection> dets{det({0.1, 0.1, 0.3, 0.3}, {0.9, 0.0}),
                                    det({0.5, 0.5, 0.7, 0.7}, {0.0, 0.9})};
  const auto result = mean_ap(dets, gts, 2);
  CHECK(result.map == doctest::Approx(1.0));
  // single class -> its AP
  const auto one = mean_ap(dets, {gts[0]}, 2);
  CHECK(one.defined_classes == 1);
  CHECK(one.map == doctest::Approx(*one.per_class[0]));
}

TEST_CASE("matching respects groups (per-clip scoping)") {
  // detection in group 0 cannot match the ground truth in group 1
  const std::vector<BoxAnnotation> gts{gt({0.1, 0.1, 0.3, 0.3}, {0}, 1)};
  const std::vector<Detection> dets{det({0.1, 0.1, 0.3, 0.3}, {0.9}, 0)};
  CHECK(*average_precision(dets, gts, 0) == doctest::Approx(0.0));
}

TEST_CASE("metrics report serializes to json with confusion and AP") {
  MetricsReport report;
  report.top1 = 0.75;
  report.top5 = 1.0;
  report.confusion = {{2, 0}, {1, 1}};
  report.per_class_ap = {0.5, std::nullopt};
  report.map = 0.5;
  const std::string json = report.to_json();
  CHECK(json.find("\"top1\": 0.75") != std::string::npos);
  CHECK(json.find("\"map\": 0.5") != std::string::npos);
  CHECK(json.find("null") != std::string::npos);
}

TEST_SUITE_END();
