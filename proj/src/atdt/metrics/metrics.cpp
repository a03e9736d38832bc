#include "atdt/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "atdt/common/error.hpp"

namespace atdt::metrics {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  if (num_classes <= 0) throw ContractViolation("confusion matrix needs at least one class");
  counts_.assign(static_cast<size_t>(k_) * k_, 0);
}

void ConfusionMatrix::accumulate(const Tensor& pred_labels, const Tensor& gt_labels,
                                 const Tensor* ignore_mask) {
  if (pred_labels.shape() != gt_labels.shape())
    throw ContractViolation("accumulate: prediction/ground-truth shape mismatch");
  if (ignore_mask && ignore_mask->shape() != gt_labels.shape())
    throw ContractViolation("accumulate: ignore mask shape mismatch");
  const auto& pv = pred_labels.data();
  const auto& gv = gt_labels.data();
  for (size_t i = 0; i < pv.size(); ++i) {
    if (ignore_mask && ignore_mask->data()[i] != 0.0) continue;
    const int p = static_cast<int>(pv[i]);
    const int g = static_cast<int>(gv[i]);
    if (p < 0 || p >= k_ || g < 0 || g >= k_)
      throw ContractViolation("accumulate: label out of range [0," + std::to_string(k_ - 1) + "]");
    ++counts_[static_cast<size_t>(g) * k_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ContractViolation("merge: class count mismatch");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

uint64_t ConfusionMatrix::total() const {
  uint64_t t = 0;
  for (uint64_t c : counts_) t += c;
  return t;
}

SegMetrics seg_metrics(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  const uint64_t total = cm.total();
  if (total == 0) throw ContractViolation("seg_metrics: empty confusion matrix");

  SegMetrics m;
  m.per_class_iou.assign(k, std::nullopt);
  uint64_t diag = 0;
  double iou_sum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    uint64_t tp = cm.at(c, c), fp = 0, fn = 0, gt_total = 0;
    for (int o = 0; o < k; ++o) {
      gt_total += cm.at(c, o);
      if (o != c) {
        fn += cm.at(c, o);
        fp += cm.at(o, c);
      }
    }
    diag += tp;
    const uint64_t denom = tp + fp + fn;
    if (denom > 0) m.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
    if (gt_total > 0) {  // mean over classes present in ground truth
      iou_sum += m.per_class_iou[c].value_or(0.0);
      ++present;
    }
  }
  m.acc = static_cast<double>(diag) / static_cast<double>(total);
  m.miou = present > 0 ? iou_sum / present : 0.0;
  return m;
}

DepthAccumulator::DepthAccumulator(double d_min, double d_max) : d_min_(d_min), d_max_(d_max) {
  if (!(d_min > 0.0 && d_max > d_min)) throw ContractViolation("depth metrics: bad clamp range");
}

void DepthAccumulator::add_pixel(double pred, double gt) {
  if (!(gt > 0.0)) throw ContractViolation("depth metrics: ground truth must be positive");
  const double p = std::clamp(pred, d_min_, d_max_);
  const double diff = p - gt;
  abs_rel_.add(std::abs(diff) / gt);
  sq_rel_.add(diff * diff / gt);
  sq_.add(diff * diff);
  const double dlog = std::log(p) - std::log(gt);
  sq_log_.add(dlog * dlog);
  const double ratio = p > gt ? p / gt : gt / p;
  if (ratio < 1.25) ++d1_;
  if (ratio < 1.25 * 1.25) ++d2_;
  if (ratio < 1.25 * 1.25 * 1.25) ++d3_;
  ++n_;
}

void DepthAccumulator::add(const Tensor& pred, const Tensor& gt, const Tensor* valid_mask) {
  if (pred.shape() != gt.shape())
    throw ContractViolation("depth metrics: prediction/ground-truth shape mismatch");
  if (valid_mask && valid_mask->shape() != gt.shape())
    throw ContractViolation("depth metrics: mask shape mismatch");
  for (size_t i = 0; i < pred.data().size(); ++i) {
    if (valid_mask && valid_mask->data()[i] == 0.0) continue;
    add_pixel(pred.data()[i], gt.data()[i]);
  }
}

void DepthAccumulator::merge(const DepthAccumulator& other) {
  n_ += other.n_;
  d1_ += other.d1_;
  d2_ += other.d2_;
  d3_ += other.d3_;
  abs_rel_.merge(other.abs_rel_);
  sq_rel_.merge(other.sq_rel_);
  sq_.merge(other.sq_);
  sq_log_.merge(other.sq_log_);
}

DepthMetrics DepthAccumulator::finalize() const {
  if (n_ == 0) throw ContractViolation("depth metrics: no valid pixels");
  const double n = static_cast<double>(n_);
  DepthMetrics m;
  m.abs_rel = abs_rel_.value() / n;
  m.sq_rel = sq_rel_.value() / n;
  m.rmse = std::sqrt(sq_.value() / n);
  m.rmse_log = std::sqrt(sq_log_.value() / n);
  m.delta1 = static_cast<double>(d1_) / n;
  m.delta2 = static_cast<double>(d2_) / n;
  m.delta3 = static_cast<double>(d3_) / n;
  m.n_pixels = n_;
  return m;
}

DepthMetrics depth_metrics(const Tensor& pred, const Tensor& gt, const Tensor* valid_mask,
                           double d_min, double d_max) {
  DepthAccumulator acc(d_min, d_max);
  acc.add(pred, gt, valid_mask);
  return acc.finalize();
}

Tensor argmax_channels(const Tensor& logits) {
  const Shape& s = logits.shape();
  if (s.size() != 4) throw ContractViolation("argmax_channels: expected [N,K,H,W]");
  const int n = s[0], k = s[1];
  const int64_t plane = static_cast<int64_t>(s[2]) * s[3];
  std::vector<double> out(static_cast<size_t>(n) * plane);
  for (int b = 0; b < n; ++b) {
    const double* base = logits.data().data() + static_cast<int64_t>(b) * k * plane;
    for (int64_t i = 0; i < plane; ++i) {
      int best = 0;
      double best_v = base[i];
      for (int c = 1; c < k; ++c) {
        const double v = base[c * plane + i];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out[static_cast<size_t>(b) * plane + i] = best;
    }
  }
  return Tensor::from_vector({n, 1, s[2], s[3]}, std::move(out));
}

}  // namespace atdt::metrics
