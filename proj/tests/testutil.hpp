#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "atdt/tensor/tensor.hpp"

namespace testutil {

using atdt::Shape;
using atdt::Tensor;

// Independent reference convolution (direct loops, cross-correlation).
// Deliberately shares no code with the im2col/GEMM path it checks.
inline Tensor conv2d_reference(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                               int dilation, int padding) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const int n = xs[0], c = xs[1], h = xs[2], wd = xs[3];
  const int f = ws[0], k = ws[2];
  const int span = dilation * (k - 1) + 1;
  const int oh = (h + 2 * padding - span) / stride + 1;
  const int ow = (wd + 2 * padding - span) / stride + 1;
  std::vector<double> out(static_cast<size_t>(n) * f * oh * ow, 0.0);
  for (int ni = 0; ni < n; ++ni)
    for (int fi = 0; fi < f; ++fi)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.data()[fi];
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = oy * stride - padding + ky * dilation;
                const int sx = ox * stride - padding + kx * dilation;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                acc += w.data()[((static_cast<size_t>(fi) * c + ci) * k + ky) * k + kx] *
                       x.data()[((static_cast<size_t>(ni) * c + ci) * h + sy) * wd + sx];
              }
          out[((static_cast<size_t>(ni) * f + fi) * oh + oy) * ow + ox] = acc;
        }
  return Tensor::from_vector({n, f, oh, ow}, std::move(out));
}

struct FdFailure {
  bool failed = false;
  size_t coord = 0;
  double analytic = 0.0, fd = 0.0;
};

// Central finite differences against the tape gradient for one input of a
// scalar-valued forward function. Probes at most `max_coords` coordinates.
inline FdFailure fd_compare(Tensor& input, const std::function<Tensor()>& forward,
                            double h = 1e-5, double tol = 1e-4, size_t max_coords = 48) {
  Tensor loss = forward();
  input.zero_grad();
  loss.backward();
  const std::vector<double> analytic = input.grad();
  auto& vals = input.mutable_data();
  const size_t n = vals.size();
  const size_t stride = std::max<size_t>(1, n / max_coords);
  FdFailure fail;
  for (size_t i = 0; i < n; i += stride) {
    const double keep = vals[i];
    vals[i] = keep + h;
    const double up = forward().item();
    vals[i] = keep - h;
    const double down = forward().item();
    vals[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
    if (std::abs(fd - analytic[i]) / scale > tol) {
      fail.failed = true;
      fail.coord = i;
      fail.analytic = analytic[i];
      fail.fd = fd;
      return fail;
    }
  }
  return fail;
}

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("atdt_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
