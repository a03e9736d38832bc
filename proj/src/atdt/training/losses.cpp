#include "atdt/training/losses.hpp"

#include <cmath>

#include "atdt/common/error.hpp"

namespace atdt::training {

Tensor segmentation_loss(const Tensor& logits, const Tensor& labels) {
  const Shape& ls = logits.shape();
  if (ls.size() != 4) throw ContractViolation("segmentation_loss: logits must be [N,K,H,W]");
  const int n = ls[0], k = ls[1];
  const int64_t plane = static_cast<int64_t>(ls[2]) * ls[3];
  if (labels.shape() != Shape{n, 1, ls[2], ls[3]})
    throw ContractViolation("segmentation_loss: labels must be [N,1,H,W]");

  const int64_t count = static_cast<int64_t>(n) * plane;
  // Stable softmax cross entropy; keep the per-pixel probabilities for the
  // backward pass.
  std::vector<double> softmax(static_cast<size_t>(count) * k);
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const double* base = logits.data().data() + static_cast<int64_t>(b) * k * plane;
    for (int64_t i = 0; i < plane; ++i) {
      const int label = static_cast<int>(labels.data()[static_cast<int64_t>(b) * plane + i]);
      if (label < 0 || label >= k)
        throw ContractViolation("segmentation_loss: label " + std::to_string(label) +
                                " out of range [0," + std::to_string(k - 1) + "]");
      double mx = base[i];
      for (int c = 1; c < k; ++c) mx = std::max(mx, base[c * plane + i]);
      double denom = 0.0;
      for (int c = 0; c < k; ++c) denom += std::exp(base[c * plane + i] - mx);
      const double log_denom = std::log(denom);
      double* sm = softmax.data() + (static_cast<int64_t>(b) * plane + i) * k;
      for (int c = 0; c < k; ++c) sm[c] = std::exp(base[c * plane + i] - mx) / denom;
      loss += log_denom - (base[label * plane + i] - mx);
    }
  }
  loss /= static_cast<double>(count);

  return Tensor::make_op(
      {1}, {loss}, {logits, labels},
      [n, k, plane, count, softmax = std::move(softmax)](detail::Node& self) {
        auto& ln = *self.parents[0];
        auto& lbl = *self.parents[1];
        if (!ln.requires_grad) return;
        ln.ensure_grad();
        const double g = self.grad[0] / static_cast<double>(count);
        for (int b = 0; b < n; ++b) {
          double* dl = ln.grad.data() + static_cast<int64_t>(b) * k * plane;
          for (int64_t i = 0; i < plane; ++i) {
            const int label = static_cast<int>(lbl.value[static_cast<int64_t>(b) * plane + i]);
            const double* sm = softmax.data() + (static_cast<int64_t>(b) * plane + i) * k;
            for (int c = 0; c < k; ++c)
              dl[c * plane + i] += g * (sm[c] - (c == label ? 1.0 : 0.0));
          }
        }
      });
}

Tensor depth_loss(const Tensor& pred, const Tensor& target, const Tensor* valid_mask) {
  if (pred.shape() != target.shape())
    throw ContractViolation("depth_loss: prediction/target shape mismatch");
  if (valid_mask && valid_mask->shape() != pred.shape())
    throw ContractViolation("depth_loss: mask shape mismatch");

  double mask_sum = 0.0;
  double loss = 0.0;
  const size_t n = pred.data().size();
  for (size_t i = 0; i < n; ++i) {
    const double m = valid_mask ? valid_mask->data()[i] : 1.0;
    mask_sum += m;
    loss += m * std::abs(pred.data()[i] - target.data()[i]);
  }
  if (mask_sum <= 0.0) throw ContractViolation("depth_loss: mask selects no pixels");
  loss /= mask_sum;

  std::vector<Tensor> parents{pred, target};
  if (valid_mask) parents.push_back(*valid_mask);
  return Tensor::make_op({1}, {loss}, std::move(parents), [mask_sum](detail::Node& self) {
    auto& pn = *self.parents[0];
    auto& tn = *self.parents[1];
    const std::vector<double>* mask =
        self.parents.size() > 2 ? &self.parents[2]->value : nullptr;
    const double g = self.grad[0] / mask_sum;
    auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    if (pn.requires_grad) {
      pn.ensure_grad();
      for (size_t i = 0; i < pn.value.size(); ++i) {
        const double m = mask ? (*mask)[i] : 1.0;
        pn.grad[i] += g * m * sign(pn.value[i] - tn.value[i]);
      }
    }
    if (tn.requires_grad) {
      tn.ensure_grad();
      for (size_t i = 0; i < tn.value.size(); ++i) {
        const double m = mask ? (*mask)[i] : 1.0;
        tn.grad[i] -= g * m * sign(pn.value[i] - tn.value[i]);
      }
    }
  });
}

Tensor transfer_loss(const Tensor& g_out, const Tensor& target_feat) {
  if (g_out.shape() != target_feat.shape())
    throw ContractViolation("transfer_loss: shape mismatch " + shape_str(g_out.shape()) + " vs " +
                            shape_str(target_feat.shape()));
  if (target_feat.requires_grad())
    throw ContractViolation("transfer_loss: target features must be detached");

  const size_t n = g_out.data().size();
  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = g_out.data()[i] - target_feat.data()[i];
    loss += d * d;
  }
  loss /= static_cast<double>(n);

  return Tensor::make_op({1}, {loss}, {g_out, target_feat}, [n](detail::Node& self) {
    auto& gn = *self.parents[0];
    auto& tn = *self.parents[1];
    if (!gn.requires_grad) return;
    gn.ensure_grad();
    const double g = self.grad[0] * 2.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) gn.grad[i] += g * (gn.value[i] - tn.value[i]);
  });
}

}  // namespace atdt::training
