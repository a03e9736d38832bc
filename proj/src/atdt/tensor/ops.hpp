#pragma once

#include "atdt/tensor/tensor.hpp"

namespace atdt {

// "same" rule used by every convolution in the networks.
inline int same_padding(int kernel, int dilation) { return dilation * (kernel - 1) / 2; }

// Cross-correlation convention. x:[N,C,H,W], w:[F,C,k,k], b:[F].
// H' = (H + 2*padding - dilation*(k-1) - 1)/stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int dilation,
              int padding);

// Per-channel batch normalization over N,H,W. In train mode batch statistics
// are used and running stats updated in place (biased batch var for the
// output, unbiased for the running estimate); in eval mode running stats are
// used. gamma/beta: [C].
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    std::vector<double>& running_mean, std::vector<double>& running_var,
                    double momentum, double eps, bool training);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& x, const Tensor& y);
Tensor sub(const Tensor& x, const Tensor& y);
Tensor mul(const Tensor& x, const Tensor& y);
Tensor scale(const Tensor& x, double s);
Tensor sum(const Tensor& x);  // -> scalar [1]
Tensor reshape(const Tensor& x, Shape new_shape);

// align_corners=false; exact on constant inputs. x:[N,C,H,W] -> [N,C,2H,2W].
Tensor bilinear_upsample2x(const Tensor& x);

}  // namespace atdt
