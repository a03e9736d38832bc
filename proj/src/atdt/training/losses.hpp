#pragma once

#include "atdt/tensor/tensor.hpp"

namespace atdt::training {

// Mean over all pixels of -log softmax(logits)[label]. logits [N,K,H,W],
// labels [N,1,H,W] with integer values in [0,K-1].
Tensor segmentation_loss(const Tensor& logits, const Tensor& labels);

// sum(|pred-target| * mask) / sum(mask); mask == nullptr means all-ones.
// pred/target are in normalized depth units. Throws when sum(mask) == 0.
Tensor depth_loss(const Tensor& pred, const Tensor& target, const Tensor* valid_mask);

// Mean squared error over all elements (element-count-normalized squared L2,
// the reconstruction objective for the transfer network). target must be
// detached: no gradient flows into the feature provider.
Tensor transfer_loss(const Tensor& g_out, const Tensor& target_feat);

}  // namespace atdt::training
