#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "atdt/common/exact_sum.hpp"
#include "atdt/tensor/tensor.hpp"

namespace atdt::metrics {

// Rows = ground truth, cols = prediction. Mergeable by elementwise addition.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  // Adds one count per evaluated pixel; ignore_mask (optional, same shape,
  // nonzero = ignore) excludes pixels.
  void accumulate(const Tensor& pred_labels, const Tensor& gt_labels,
                  const Tensor* ignore_mask = nullptr);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return k_; }
  uint64_t at(int gt, int pred) const { return counts_[static_cast<size_t>(gt) * k_ + pred]; }
  uint64_t& at(int gt, int pred) { return counts_[static_cast<size_t>(gt) * k_ + pred]; }
  uint64_t total() const;

 private:
  int k_;
  std::vector<uint64_t> counts_;
};

struct SegMetrics {
  double miou = 0.0;
  double acc = 0.0;
  // One entry per class; empty when the class is absent from both ground
  // truth and predictions (excluded from the mean).
  std::vector<std::optional<double>> per_class_iou;
};

// IoU_c = TP/(TP+FP+FN); mIoU averages classes present in ground truth;
// Acc = trace/total. Throws on an empty matrix.
SegMetrics seg_metrics(const ConfusionMatrix& cm);

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
  uint64_t n_pixels = 0;
};

// Streaming accumulator over valid pixels. Predictions are clamped to
// [d_min, d_max] before evaluation; delta uses the strict inequality
// max(p/g, g/p) < 1.25^a. Exact summation makes chunked accumulation and
// pixel order irrelevant to the result.
class DepthAccumulator {
 public:
  DepthAccumulator(double d_min, double d_max);

  void add(const Tensor& pred, const Tensor& gt, const Tensor* valid_mask = nullptr);
  void add_pixel(double pred, double gt);
  void merge(const DepthAccumulator& other);

  DepthMetrics finalize() const;  // throws if no valid pixel was seen

 private:
  double d_min_, d_max_;
  uint64_t n_ = 0;
  uint64_t d1_ = 0, d2_ = 0, d3_ = 0;
  ExactSum abs_rel_, sq_rel_, sq_, sq_log_;
};

// One-call convenience over a single prediction/target pair.
DepthMetrics depth_metrics(const Tensor& pred, const Tensor& gt, const Tensor* valid_mask,
                           double d_min, double d_max);

// Pixelwise argmax over channel logits: [N,K,H,W] -> [N,1,H,W] class ids.
Tensor argmax_channels(const Tensor& logits);

}  // namespace atdt::metrics
