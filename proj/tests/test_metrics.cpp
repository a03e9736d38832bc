#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "atdt/common/error.hpp"
#include "atdt/metrics/metrics.hpp"
#include "testutil.hpp"

using namespace atdt;
using namespace atdt::metrics;

namespace {

// Brute-force oracles: plain loops and naive double sums, no shared code
// with the streaming implementations.
struct SegOracle {
  double miou, acc;
};

SegOracle seg_oracle(const std::vector<int>& gt, const std::vector<int>& pred, int k) {
  double iou_sum = 0.0;
  int present = 0, correct = 0;
  for (int c = 0; c < k; ++c) {
    int tp = 0, fp = 0, fn = 0, in_gt = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
      in_gt += gt[i] == c;
      tp += gt[i] == c && pred[i] == c;
      fp += gt[i] != c && pred[i] == c;
      fn += gt[i] == c && pred[i] != c;
    }
    if (in_gt > 0) {
      iou_sum += tp + fp + fn > 0 ? static_cast<double>(tp) / (tp + fp + fn) : 0.0;
      ++present;
    }
  }
  for (size_t i = 0; i < gt.size(); ++i) correct += gt[i] == pred[i];
  return {iou_sum / present, static_cast<double>(correct) / static_cast<double>(gt.size())};
}

DepthMetrics depth_oracle(const std::vector<double>& pred, const std::vector<double>& gt,
                          const std::vector<double>* mask, double lo, double hi) {
  DepthMetrics m;
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
  int64_t n = 0, d1 = 0, d2 = 0, d3 = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (mask && (*mask)[i] == 0.0) continue;
    const double p = std::clamp(pred[i], lo, hi);
    abs_rel += std::abs(p - gt[i]) / gt[i];
    sq_rel += (p - gt[i]) * (p - gt[i]) / gt[i];
    sq += (p - gt[i]) * (p - gt[i]);
    const double dl = std::log(p) - std::log(gt[i]);
    sq_log += dl * dl;
    const double r = std::max(p / gt[i], gt[i] / p);
    d1 += r < 1.25;
    d2 += r < 1.25 * 1.25;
    d3 += r < 1.25 * 1.25 * 1.25;
    ++n;
  }
  m.abs_rel = abs_rel / n;
  m.sq_rel = sq_rel / n;
  m.rmse = std::sqrt(sq / n);
  m.rmse_log = std::sqrt(sq_log / n);
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  m.n_pixels = static_cast<uint64_t>(n);
  return m;
}

Tensor as_tensor(const std::vector<double>& v) {
  return Tensor::from_vector({1, 1, static_cast<int>(v.size())}, v);
}

}  // namespace

TEST_CASE("accumulate: perfect prediction fills the diagonal") {
  ConfusionMatrix cm(4);
  std::vector<double> labels = {0, 1, 2, 3, 2, 1, 0, 2};
  cm.accumulate(as_tensor(labels), as_tensor(labels));
  uint64_t diag = 0;
  for (int c = 0; c < 4; ++c) diag += cm.at(c, c);
  CHECK(diag == labels.size());
  CHECK(cm.total() == labels.size());
}

TEST_CASE("accumulate: fully ignored input leaves the matrix unchanged") {
  ConfusionMatrix cm(3);
  std::vector<double> labels = {0, 1, 2};
  std::vector<double> ignore = {1, 1, 1};
  const Tensor ignore_t = as_tensor(ignore);
  cm.accumulate(as_tensor(labels), as_tensor(labels), &ignore_t);
  CHECK(cm.total() == 0);
}

TEST_CASE("accumulate: additivity over batches") {
  Rng rng(42);
  std::vector<double> gt1(50), pr1(50), gt2(70), pr2(70);
  for (auto* v : {&gt1, &pr1, &gt2, &pr2})
    for (auto& x : *v) x = static_cast<double>(rng.uniform_int(0, 4));
  ConfusionMatrix split(5), joint(5);
  split.accumulate(as_tensor(pr1), as_tensor(gt1));
  split.accumulate(as_tensor(pr2), as_tensor(gt2));
  std::vector<double> gt_all = gt1, pr_all = pr1;
  gt_all.insert(gt_all.end(), gt2.begin(), gt2.end());
  pr_all.insert(pr_all.end(), pr2.begin(), pr2.end());
  joint.accumulate(as_tensor(pr_all), as_tensor(gt_all));
  for (int g = 0; g < 5; ++g)
    for (int p = 0; p < 5; ++p) CHECK(split.at(g, p) == joint.at(g, p));
}

TEST_CASE("accumulate rejects out-of-range labels") {
  ConfusionMatrix cm(3);
  std::vector<double> bad = {0, 3};
  std::vector<double> ok = {0, 1};
  CHECK_THROWS_AS(cm.accumulate(as_tensor(bad), as_tensor(ok)), ContractViolation);
  CHECK_THROWS_AS(cm.accumulate(as_tensor(ok), as_tensor(bad)), ContractViolation);
}

TEST_CASE("seg_metrics: perfect prediction scores 1.0 everywhere") {
  ConfusionMatrix cm(3);
  std::vector<double> labels = {0, 0, 1, 2, 2, 2};
  cm.accumulate(as_tensor(labels), as_tensor(labels));
  const auto m = seg_metrics(cm);
  CHECK(m.miou == 1.0);
  CHECK(m.acc == 1.0);
}

TEST_CASE("seg_metrics: hand-counted 2-class case") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 3;
  cm.at(0, 1) = 1;
  cm.at(1, 0) = 2;
  cm.at(1, 1) = 4;
  const auto m = seg_metrics(cm);
  CHECK(m.per_class_iou[0].value() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.per_class_iou[1].value() == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
  CHECK(m.miou == doctest::Approx(15.0 / 28.0).epsilon(1e-13));  // ~0.5357
  CHECK(m.acc == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("seg_metrics: class absent from GT and predictions is excluded") {
  ConfusionMatrix cm(3);
  std::vector<double> gt = {0, 0, 1, 1};
  std::vector<double> pred = {0, 1, 1, 1};
  cm.accumulate(as_tensor(pred), as_tensor(gt));
  const auto m = seg_metrics(cm);
  CHECK_FALSE(m.per_class_iou[2].has_value());
  // mean over the two present classes only
  const double iou0 = 1.0 / 2.0, iou1 = 2.0 / 3.0;
  CHECK(m.miou == doctest::Approx((iou0 + iou1) / 2.0).epsilon(1e-13));
}

TEST_CASE("seg_metrics rejects an empty matrix") {
  ConfusionMatrix cm(3);
  CHECK_THROWS_AS(seg_metrics(cm), ContractViolation);
}

TEST_CASE("depth_metrics: identity prediction is all-zero errors, all-one deltas") {
  std::vector<double> gt = {1.0, 5.0, 25.0, 99.0};
  const auto m = depth_metrics(as_tensor(gt), as_tensor(gt), nullptr, 1.0, 100.0);
  CHECK(m.abs_rel == 0.0);
  CHECK(m.sq_rel == 0.0);
  CHECK(m.rmse == 0.0);
  CHECK(m.rmse_log == 0.0);
  CHECK(m.delta1 == 1.0);
  CHECK(m.delta3 == 1.0);
}

TEST_CASE("depth_metrics: exact 1.25x ratio sits outside delta1 (strict <)") {
  std::vector<double> gt = {2.0, 4.0, 8.0};
  std::vector<double> pred = {2.5, 5.0, 10.0};  // exactly 1.25x
  const auto m = depth_metrics(as_tensor(pred), as_tensor(gt), nullptr, 1.0, 100.0);
  CHECK(m.delta1 == 0.0);
  CHECK(m.delta2 == 1.0);
  CHECK(m.delta3 == 1.0);
  CHECK(m.abs_rel == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("depth metrics delta monotonicity on random inputs") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 5 + static_cast<int>(rng.uniform_int(0, 60));
    std::vector<double> gt(n), pred(n);
    for (int i = 0; i < n; ++i) {
      gt[i] = rng.uniform(1.0, 100.0);
      pred[i] = rng.uniform(0.2, 130.0);
    }
    const auto m = depth_metrics(as_tensor(pred), as_tensor(gt), nullptr, 1.0, 100.0);
    CHECK(m.delta1 <= m.delta2);
    CHECK(m.delta2 <= m.delta3);
  }
}

TEST_CASE("oracle equivalence on 100+ random instances (both families)") {
  Rng rng(8);
  for (int rep = 0; rep < 60; ++rep) {
    const int k = 2 + static_cast<int>(rng.uniform_int(0, 4));
    const int n = 10 + static_cast<int>(rng.uniform_int(0, 300));
    std::vector<int> gt(n), pred(n);
    std::vector<double> gt_d(n), pred_d(n);
    for (int i = 0; i < n; ++i) {
      gt[i] = static_cast<int>(rng.uniform_int(0, k - 1));
      pred[i] = static_cast<int>(rng.uniform_int(0, k - 1));
      gt_d[i] = gt[i];
      pred_d[i] = pred[i];
    }
    ConfusionMatrix cm(k);
    cm.accumulate(as_tensor(pred_d), as_tensor(gt_d));
    const auto got = seg_metrics(cm);
    const auto want = seg_oracle(gt, pred, k);
    CHECK(got.miou == doctest::Approx(want.miou).epsilon(1e-12));
    CHECK(got.acc == doctest::Approx(want.acc).epsilon(1e-12));
  }
  for (int rep = 0; rep < 60; ++rep) {
    const int n = 5 + static_cast<int>(rng.uniform_int(0, 200));
    std::vector<double> gt(n), pred(n), mask(n);
    bool any = false;
    for (int i = 0; i < n; ++i) {
      gt[i] = rng.uniform(1.0, 100.0);
      pred[i] = rng.uniform(0.2, 140.0);
      mask[i] = rng.uniform() < 0.2 ? 0.0 : 1.0;
      any = any || mask[i] != 0.0;
    }
    if (!any) mask[0] = 1.0;
    const Tensor mask_t = as_tensor(mask);
    const auto got = depth_metrics(as_tensor(pred), as_tensor(gt), &mask_t, 1.0, 100.0);
    const auto want = depth_oracle(pred, gt, &mask, 1.0, 100.0);
    CHECK(got.abs_rel == doctest::Approx(want.abs_rel).epsilon(1e-12));
    CHECK(got.sq_rel == doctest::Approx(want.sq_rel).epsilon(1e-12));
    CHECK(got.rmse == doctest::Approx(want.rmse).epsilon(1e-12));
    CHECK(got.rmse_log == doctest::Approx(want.rmse_log).epsilon(1e-12));
    CHECK(got.delta1 == want.delta1);
    CHECK(got.delta2 == want.delta2);
    CHECK(got.delta3 == want.delta3);
  }
}

TEST_CASE("streaming equivalence and permutation invariance are exact") {
  Rng rng(9);
  const int n = 400;
  std::vector<double> gt(n), pred(n);
  for (int i = 0; i < n; ++i) {
    gt[i] = rng.uniform(1.0, 100.0);
    pred[i] = rng.uniform(0.5, 120.0);
  }

  DepthAccumulator one_shot(1.0, 100.0);
  for (int i = 0; i < n; ++i) one_shot.add_pixel(pred[i], gt[i]);

  DepthAccumulator chunked(1.0, 100.0);
  for (int i = 0; i < n; i += 37)
    for (int j = i; j < std::min(n, i + 37); ++j) chunked.add_pixel(pred[j], gt[j]);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  DepthAccumulator shuffled(1.0, 100.0);
  for (int i : order) shuffled.add_pixel(pred[i], gt[i]);

  const auto a = one_shot.finalize(), b = chunked.finalize(), c = shuffled.finalize();
  CHECK(a.abs_rel == b.abs_rel);
  CHECK(a.sq_rel == b.sq_rel);
  CHECK(a.rmse == b.rmse);
  CHECK(a.rmse_log == b.rmse_log);
  CHECK(a.abs_rel == c.abs_rel);
  CHECK(a.sq_rel == c.sq_rel);
  CHECK(a.rmse == c.rmse);
  CHECK(a.rmse_log == c.rmse_log);
  CHECK(a.delta1 == c.delta1);

  // The same holds for segmentation via integer counts.
  std::vector<double> gl(n), pl(n);
  for (int i = 0; i < n; ++i) {
    gl[i] = static_cast<double>(rng.uniform_int(0, 5));
    pl[i] = static_cast<double>(rng.uniform_int(0, 5));
  }
  ConfusionMatrix cm1(6), cm2(6);
  cm1.accumulate(as_tensor(pl), as_tensor(gl));
  std::vector<double> gl_s(n), pl_s(n);
  for (int i = 0; i < n; ++i) {
    gl_s[i] = gl[order[i]];
    pl_s[i] = pl[order[i]];
  }
  cm2.accumulate(as_tensor(pl_s), as_tensor(gl_s));
  const auto m1 = seg_metrics(cm1), m2 = seg_metrics(cm2);
  CHECK(m1.miou == m2.miou);
  CHECK(m1.acc == m2.acc);
}

TEST_CASE("depth_metrics rejects an empty valid set") {
  std::vector<double> gt = {5.0}, pred = {5.0}, mask = {0.0};
  const Tensor mask_t = as_tensor(mask);
  CHECK_THROWS_AS(depth_metrics(as_tensor(pred), as_tensor(gt), &mask_t, 1.0, 100.0),
                  ContractViolation);
}

TEST_CASE("argmax_channels picks the max logit per pixel") {
  const Tensor logits =
      Tensor::from_vector({1, 3, 1, 2}, {0.1, 5.0, /*c1*/ 2.0, 1.0, /*c2*/ -1.0, 7.0});
  const Tensor ids = argmax_channels(logits);
  CHECK(ids.data()[0] == 1.0);  // c1 wins at pixel 0
  CHECK(ids.data()[1] == 2.0);  // c2 wins at pixel 1
}
