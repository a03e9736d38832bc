#include "atdt/tensor/ops.hpp"

#include <cmath>
#include <cstring>

#include "atdt/common/error.hpp"
#include "atdt/tensor/gemm.hpp"

namespace atdt {
namespace {

struct ConvDims {
  int n, c, h, w, f, k, stride, dilation, padding, oh, ow;
  int ckk() const { return c * k * k; }
  int64_t ohw() const { return static_cast<int64_t>(oh) * ow; }
  int64_t cols() const { return n * ohw(); }
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int dilation, int padding) {
  if (xs.size() != 4 || ws.size() != 4)
    throw ContractViolation("conv2d: expected 4-d input and weight, got " + shape_str(xs) + " and " +
                            shape_str(ws));
  ConvDims d;
  d.n = xs[0];
  d.c = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.f = ws[0];
  d.k = ws[2];
  if (ws[1] != d.c)
    throw ContractViolation("conv2d: weight expects " + std::to_string(ws[1]) +
                            " input channels, input has " + std::to_string(d.c));
  if (ws[3] != d.k || d.k % 2 == 0) throw ContractViolation("conv2d: kernel must be square and odd");
  if (stride != 1 && stride != 2) throw ContractViolation("conv2d: stride must be 1 or 2");
  if (dilation != 1 && dilation != 2) throw ContractViolation("conv2d: dilation must be 1 or 2");
  if (padding < 0) throw ContractViolation("conv2d: negative padding");
  d.stride = stride;
  d.dilation = dilation;
  d.padding = padding;
  const int span = dilation * (d.k - 1) + 1;
  d.oh = (d.h + 2 * padding - span) / stride + 1;
  d.ow = (d.w + 2 * padding - span) / stride + 1;
  if (d.oh <= 0 || d.ow <= 0) throw ContractViolation("conv2d: empty output");
  return d;
}

struct ConvScratch {
  std::vector<double> col, ybuf, dcol;
};

ConvScratch& conv_scratch() {
  thread_local ConvScratch s;
  return s;
}

// col[ckk][n*oh*ow]; row = (c*k+ky)*k+kx, col index = (n*oh+oy)*ow+ox.
void im2col(const ConvDims& d, const double* x, double* col) {
  const int64_t plane = static_cast<int64_t>(d.h) * d.w;
  const int64_t ohw = d.ohw();
  const int64_t cols = d.cols();
  for (int c = 0; c < d.c; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        double* dst = col + (static_cast<int64_t>(c) * d.k * d.k + ky * d.k + kx) * cols;
        for (int n = 0; n < d.n; ++n) {
          const double* src = x + (static_cast<int64_t>(n) * d.c + c) * plane;
          double* drow = dst + n * ohw;
          for (int oy = 0; oy < d.oh; ++oy) {
            const int sy = oy * d.stride - d.padding + ky * d.dilation;
            double* out = drow + static_cast<int64_t>(oy) * d.ow;
            if (sy < 0 || sy >= d.h) {
              std::memset(out, 0, sizeof(double) * d.ow);
              continue;
            }
            const double* srow = src + static_cast<int64_t>(sy) * d.w;
            const int sx0 = -d.padding + kx * d.dilation;
            for (int ox = 0; ox < d.ow; ++ox) {
              const int sx = sx0 + ox * d.stride;
              out[ox] = (sx >= 0 && sx < d.w) ? srow[sx] : 0.0;
            }
          }
        }
      }
    }
  }
}

// Scatter-add the col-layout gradient back onto the input gradient.
void col2im_add(const ConvDims& d, const double* col, double* dx) {
  const int64_t plane = static_cast<int64_t>(d.h) * d.w;
  const int64_t ohw = d.ohw();
  const int64_t cols = d.cols();
  for (int c = 0; c < d.c; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const double* src = col + (static_cast<int64_t>(c) * d.k * d.k + ky * d.k + kx) * cols;
        for (int n = 0; n < d.n; ++n) {
          double* dst = dx + (static_cast<int64_t>(n) * d.c + c) * plane;
          const double* srow_base = src + n * ohw;
          for (int oy = 0; oy < d.oh; ++oy) {
            const int sy = oy * d.stride - d.padding + ky * d.dilation;
            if (sy < 0 || sy >= d.h) continue;
            const double* srow = srow_base + static_cast<int64_t>(oy) * d.ow;
            double* drow = dst + static_cast<int64_t>(sy) * d.w;
            const int sx0 = -d.padding + kx * d.dilation;
            for (int ox = 0; ox < d.ow; ++ox) {
              const int sx = sx0 + ox * d.stride;
              if (sx >= 0 && sx < d.w) drow[sx] += srow[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int dilation,
              int padding) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), stride, dilation, padding);
  if (b.shape() != Shape{d.f}) throw ContractViolation("conv2d: bias shape must be [out_channels]");

  auto& scratch = conv_scratch();
  const int64_t cols = d.cols();
  scratch.col.resize(static_cast<size_t>(d.ckk()) * cols);
  scratch.ybuf.resize(static_cast<size_t>(d.f) * cols);
  im2col(d, x.data().data(), scratch.col.data());
  gemm(false, false, d.f, static_cast<int>(cols), d.ckk(), w.data().data(), d.ckk(),
       scratch.col.data(), static_cast<int>(cols), 0.0, scratch.ybuf.data(), static_cast<int>(cols));

  const int64_t ohw = d.ohw();
  std::vector<double> y(static_cast<size_t>(d.n) * d.f * ohw);
  for (int f = 0; f < d.f; ++f) {
    const double bias = b.data()[f];
    for (int n = 0; n < d.n; ++n) {
      const double* src = scratch.ybuf.data() + f * cols + n * ohw;
      double* dst = y.data() + (static_cast<int64_t>(n) * d.f + f) * ohw;
      for (int64_t i = 0; i < ohw; ++i) dst[i] = src[i] + bias;
    }
  }

  return Tensor::make_op({d.n, d.f, d.oh, d.ow}, std::move(y), {x, w, b}, [d](detail::Node& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    auto& scratch = conv_scratch();
    const int64_t cols = d.cols();
    const int64_t ohw = d.ohw();

    // dY in [F][N*OH*OW] layout.
    scratch.ybuf.resize(static_cast<size_t>(d.f) * cols);
    for (int f = 0; f < d.f; ++f)
      for (int n = 0; n < d.n; ++n)
        std::memcpy(scratch.ybuf.data() + f * cols + n * ohw,
                    self.grad.data() + (static_cast<int64_t>(n) * d.f + f) * ohw,
                    sizeof(double) * ohw);

    if (bn.requires_grad) {
      bn.ensure_grad();
      for (int f = 0; f < d.f; ++f) {
        double s = 0.0;
        const double* row = scratch.ybuf.data() + f * cols;
        for (int64_t i = 0; i < cols; ++i) s += row[i];
        bn.grad[f] += s;
      }
    }
    if (wn.requires_grad) {
      scratch.col.resize(static_cast<size_t>(d.ckk()) * cols);
      im2col(d, xn.value.data(), scratch.col.data());
      wn.ensure_grad();
      gemm(false, true, d.f, d.ckk(), static_cast<int>(cols), scratch.ybuf.data(),
           static_cast<int>(cols), scratch.col.data(), static_cast<int>(cols), 1.0, wn.grad.data(),
           d.ckk());
    }
    if (xn.requires_grad) {
      scratch.dcol.resize(static_cast<size_t>(d.ckk()) * cols);
      gemm(true, false, d.ckk(), static_cast<int>(cols), d.f, wn.value.data(), d.ckk(),
           scratch.ybuf.data(), static_cast<int>(cols), 0.0, scratch.dcol.data(),
           static_cast<int>(cols));
      xn.ensure_grad();
      col2im_add(d, scratch.dcol.data(), xn.grad.data());
    }
  });
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    std::vector<double>& running_mean, std::vector<double>& running_var,
                    double momentum, double eps, bool training) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ContractViolation("batch_norm2d: expected 4-d input");
  const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw ContractViolation("batch_norm2d: gamma/beta must be [C]");
  if (running_mean.size() != static_cast<size_t>(c) || running_var.size() != static_cast<size_t>(c))
    throw ContractViolation("batch_norm2d: running stats must be [C]");
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t m = static_cast<int64_t>(n) * plane;  // samples per channel

  std::vector<double> mean(c), invstd(c);
  if (training) {
    if (m < 2)
      throw ContractViolation("batch_norm2d: train mode needs at least 2 values per channel "
                              "(degenerate variance)");
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int b0 = 0; b0 < n; ++b0) {
        const double* p = x.data().data() + (static_cast<int64_t>(b0) * c + ch) * plane;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (int b0 = 0; b0 < n; ++b0) {
        const double* p = x.data().data() + (static_cast<int64_t>(b0) * c + ch) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double dlt = p[i] - mu;
          v += dlt * dlt;
        }
      }
      v /= static_cast<double>(m);
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(v + eps);
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] =
          (1.0 - momentum) * running_var[ch] + momentum * v * static_cast<double>(m) / (m - 1);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = 1.0 / std::sqrt(running_var[ch] + eps);
    }
  }

  std::vector<double> y(x.data().size());
  for (int b0 = 0; b0 < n; ++b0) {
    for (int ch = 0; ch < c; ++ch) {
      const double* p = x.data().data() + (static_cast<int64_t>(b0) * c + ch) * plane;
      double* q = y.data() + (static_cast<int64_t>(b0) * c + ch) * plane;
      const double g = gamma.data()[ch], bb = beta.data()[ch], mu = mean[ch], is = invstd[ch];
      for (int64_t i = 0; i < plane; ++i) q[i] = g * (p[i] - mu) * is + bb;
    }
  }

  return Tensor::make_op(
      xs, std::move(y), {x, gamma, beta},
      [n, c, plane, m, mean = std::move(mean), invstd = std::move(invstd),
       training](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        // Per-channel reductions of dy and dy*xhat.
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (int b0 = 0; b0 < n; ++b0) {
          for (int ch = 0; ch < c; ++ch) {
            const int64_t off = (static_cast<int64_t>(b0) * c + ch) * plane;
            const double* dy = self.grad.data() + off;
            const double* xv = xn.value.data() + off;
            const double mu = mean[ch], is = invstd[ch];
            double s = 0.0, sx = 0.0;
            for (int64_t i = 0; i < plane; ++i) {
              s += dy[i];
              sx += dy[i] * (xv[i] - mu) * is;
            }
            sum_dy[ch] += s;
            sum_dy_xhat[ch] += sx;
          }
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (int ch = 0; ch < c; ++ch) bn.grad[ch] += sum_dy[ch];
        }
        if (gn.requires_grad) {
          gn.ensure_grad();
          for (int ch = 0; ch < c; ++ch) gn.grad[ch] += sum_dy_xhat[ch];
        }
        if (xn.requires_grad) {
          xn.ensure_grad();
          for (int b0 = 0; b0 < n; ++b0) {
            for (int ch = 0; ch < c; ++ch) {
              const int64_t off = (static_cast<int64_t>(b0) * c + ch) * plane;
              const double* dy = self.grad.data() + off;
              const double* xv = xn.value.data() + off;
              double* dx = xn.grad.data() + off;
              const double g = gn.value[ch], mu = mean[ch], is = invstd[ch];
              if (training) {
                const double k1 = sum_dy[ch] / static_cast<double>(m);
                const double k2 = sum_dy_xhat[ch] / static_cast<double>(m);
                for (int64_t i = 0; i < plane; ++i) {
                  const double xhat = (xv[i] - mu) * is;
                  dx[i] += g * is * (dy[i] - k1 - xhat * k2);
                }
              } else {
                for (int64_t i = 0; i < plane; ++i) dx[i] += g * is * dy[i];
              }
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  std::vector<double> y(x.data().size());
  const auto& v = x.data();
  for (size_t i = 0; i < v.size(); ++i) y[i] = v[i] > 0.0 ? v[i] : 0.0;
  return Tensor::make_op(x.shape(), std::move(y), {x}, [](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (xn.value[i] > 0.0) xn.grad[i] += self.grad[i];
  });
}

namespace {
void check_same_shape(const Tensor& x, const Tensor& y, const char* op) {
  if (x.shape() != y.shape())
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(x.shape()) + " vs " +
                            shape_str(y.shape()));
}
}  // namespace

Tensor add(const Tensor& x, const Tensor& y) {
  check_same_shape(x, y, "add");
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + y.data()[i];
  return Tensor::make_op(x.shape(), std::move(out), {x, y}, [](detail::Node& self) {
    for (int p = 0; p < 2; ++p) {
      auto& pn = *self.parents[p];
      if (!pn.requires_grad) continue;
      pn.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pn.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& x, const Tensor& y) {
  check_same_shape(x, y, "sub");
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] - y.data()[i];
  return Tensor::make_op(x.shape(), std::move(out), {x, y}, [](detail::Node& self) {
    auto& xn = *self.parents[0];
    auto& yn = *self.parents[1];
    if (xn.requires_grad) {
      xn.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
    }
    if (yn.requires_grad) {
      yn.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) yn.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& x, const Tensor& y) {
  check_same_shape(x, y, "mul");
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * y.data()[i];
  return Tensor::make_op(x.shape(), std::move(out), {x, y}, [](detail::Node& self) {
    auto& xn = *self.parents[0];
    auto& yn = *self.parents[1];
    if (xn.requires_grad) {
      xn.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i] * yn.value[i];
    }
    if (yn.requires_grad) {
      yn.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) yn.grad[i] += self.grad[i] * xn.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * s;
  return Tensor::make_op(x.shape(), std::move(out), {x}, [s](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i] * s;
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_op({1}, {s}, {x}, [](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const double g = self.grad[0];
    for (size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += g;
  });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.numel())
    throw ContractViolation("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                            shape_str(new_shape));
  std::vector<double> out = x.data();
  return Tensor::make_op(std::move(new_shape), std::move(out), {x}, [](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
  });
}

Tensor bilinear_upsample2x(const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ContractViolation("bilinear_upsample2x: expected 4-d input");
  const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const int oh = 2 * h, ow = 2 * w;

  // Source index/weight tables, align_corners=false: src = (o+0.5)/2 - 0.5.
  auto make_table = [](int out_len, int in_len, std::vector<int>& i0, std::vector<int>& i1,
                       std::vector<double>& w1) {
    i0.resize(out_len);
    i1.resize(out_len);
    w1.resize(out_len);
    for (int o = 0; o < out_len; ++o) {
      double s = 0.5 * (o + 0.5) - 0.5;
      if (s < 0.0) s = 0.0;
      if (s > in_len - 1) s = in_len - 1;
      const int lo = static_cast<int>(s);
      i0[o] = lo;
      i1[o] = std::min(lo + 1, in_len - 1);
      w1[o] = s - lo;
    }
  };
  std::vector<int> y0, y1, x0, x1;
  std::vector<double> wy, wx;
  make_table(oh, h, y0, y1, wy);
  make_table(ow, w, x0, x1, wx);

  std::vector<double> out(static_cast<size_t>(n) * c * oh * ow);
  const int64_t plane_in = static_cast<int64_t>(h) * w;
  const int64_t plane_out = static_cast<int64_t>(oh) * ow;
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
    const double* src = x.data().data() + nc * plane_in;
    double* dst = out.data() + nc * plane_out;
    for (int oy = 0; oy < oh; ++oy) {
      const double* r0 = src + static_cast<int64_t>(y0[oy]) * w;
      const double* r1 = src + static_cast<int64_t>(y1[oy]) * w;
      const double fy = wy[oy];
      double* drow = dst + static_cast<int64_t>(oy) * ow;
      for (int ox = 0; ox < ow; ++ox) {
        const double fx = wx[ox];
        const double top = r0[x0[ox]] * (1.0 - fx) + r0[x1[ox]] * fx;
        const double bot = r1[x0[ox]] * (1.0 - fx) + r1[x1[ox]] * fx;
        drow[ox] = top * (1.0 - fy) + bot * fy;
      }
    }
  }

  return Tensor::make_op(
      {n, c, oh, ow}, std::move(out), {x},
      [n, c, h, w, oh, ow, y0 = std::move(y0), y1 = std::move(y1), wy = std::move(wy),
       x0 = std::move(x0), x1 = std::move(x1), wx = std::move(wx)](detail::Node& self) {
        auto& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        const int64_t plane_in = static_cast<int64_t>(h) * w;
        const int64_t plane_out = static_cast<int64_t>(oh) * ow;
        for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
          double* dx = xn.grad.data() + nc * plane_in;
          const double* dy = self.grad.data() + nc * plane_out;
          for (int oy = 0; oy < oh; ++oy) {
            const double fy = wy[oy];
            const double* drow = dy + static_cast<int64_t>(oy) * ow;
            double* g0 = dx + static_cast<int64_t>(y0[oy]) * w;
            double* g1 = dx + static_cast<int64_t>(y1[oy]) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const double fx = wx[ox];
              const double g = drow[ox];
              g0[x0[ox]] += g * (1.0 - fy) * (1.0 - fx);
              g0[x1[ox]] += g * (1.0 - fy) * fx;
              g1[x0[ox]] += g * fy * (1.0 - fx);
              g1[x1[ox]] += g * fy * fx;
            }
          }
        }
      });
}

}  // namespace atdt
