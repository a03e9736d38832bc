// Gradient sweep: every differentiable op against central finite
// differences on randomized shapes, f64, h=1e-5, relative tolerance 1e-4.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "atdt/tensor/ops.hpp"
#include "atdt/training/losses.hpp"
#include "testutil.hpp"

using namespace atdt;
using testutil::fd_compare;

namespace {

void nudge_from_kinks(Tensor& t, double margin = 5e-3) {
  for (auto& v : t.mutable_data())
    if (std::abs(v) < margin) v += 2 * margin;
}

Shape random_nchw(Rng& rng, int max_side = 7) {
  return {1 + static_cast<int>(rng.uniform_int(0, 2)), 1 + static_cast<int>(rng.uniform_int(0, 3)),
          3 + static_cast<int>(rng.uniform_int(0, max_side - 3)),
          3 + static_cast<int>(rng.uniform_int(0, max_side - 3))};
}

}  // namespace

TEST_CASE("conv2d gradients (input, weight, bias) across 24 random cases") {
  Rng rng(101);
  for (int rep = 0; rep < 24; ++rep) {
    const Shape xs = random_nchw(rng);
    const int f = 1 + static_cast<int>(rng.uniform_int(0, 4));
    const int k = rng.uniform() < 0.3 ? 1 : 3;
    const int stride = rng.uniform() < 0.5 ? 1 : 2;
    const int dilation = (k == 3 && rng.uniform() < 0.4) ? 2 : 1;
    Tensor x = Tensor::randn(xs, rng, 1.0, true);
    Tensor w = Tensor::randn({f, xs[1], k, k}, rng, 0.6, true);
    Tensor b = Tensor::randn({f}, rng, 0.3, true);
    auto fwd = [&] {
      const Tensor y = conv2d(x, w, b, stride, dilation, same_padding(k, dilation));
      return sum(mul(y, y));
    };
    for (Tensor* t : {&x, &w, &b}) {
      const auto r = fd_compare(*t, fwd);
      CAPTURE(rep);
      CAPTURE(r.coord);
      CAPTURE(r.analytic);
      CAPTURE(r.fd);
      CHECK_FALSE(r.failed);
    }
  }
}

TEST_CASE("batch_norm2d gradients, train and eval, 20 random cases") {
  Rng rng(102);
  for (int rep = 0; rep < 20; ++rep) {
    const Shape xs = random_nchw(rng);
    const bool training = rep % 2 == 0;
    Tensor x = Tensor::randn(xs, rng, 1.4, true);
    Tensor gamma = Tensor::randn({xs[1]}, rng, 0.4, true);
    Tensor beta = Tensor::randn({xs[1]}, rng, 0.4, true);
    for (auto& g : gamma.mutable_data()) g += 1.0;
    std::vector<double> rm(xs[1]), rv(xs[1]);
    for (int c = 0; c < xs[1]; ++c) {
      rm[c] = rng.gaussian() * 0.2;
      rv[c] = 0.5 + rng.uniform();
    }
    auto fwd = [&] {
      std::vector<double> rm_c = rm, rv_c = rv;  // keep stats fixed across FD probes
      const Tensor y = batch_norm2d(x, gamma, beta, rm_c, rv_c, 0.1, 1e-5, training);
      return sum(mul(y, y));
    };
    for (Tensor* t : {&x, &gamma, &beta}) {
      const auto r = fd_compare(*t, fwd);
      CAPTURE(rep);
      CAPTURE(training);
      CHECK_FALSE(r.failed);
    }
  }
}

TEST_CASE("relu gradient on 20 random cases") {
  Rng rng(103);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = Tensor::randn(random_nchw(rng), rng, 1.0, true);
    nudge_from_kinks(x);
    auto fwd = [&] {
      const Tensor y = relu(x);
      return sum(mul(y, y));
    };
    CHECK_FALSE(fd_compare(x, fwd).failed);
  }
}

TEST_CASE("bilinear_upsample2x gradient on 20 random cases") {
  Rng rng(104);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = Tensor::randn(random_nchw(rng, 6), rng, 1.0, true);
    auto fwd = [&] {
      const Tensor y = bilinear_upsample2x(x);
      return sum(mul(y, y));
    };
    CHECK_FALSE(fd_compare(x, fwd).failed);
  }
}

TEST_CASE("add/sub/mul/scale/reshape gradients on 20 random cases") {
  Rng rng(105);
  for (int rep = 0; rep < 20; ++rep) {
    const Shape s = random_nchw(rng, 5);
    Tensor x = Tensor::randn(s, rng, 1.0, true);
    Tensor y = Tensor::randn(s, rng, 1.0, true);
    auto fwd = [&] {
      const Tensor h = scale(sub(add(x, y), mul(x, y)), 0.7);
      const Tensor flat = reshape(h, {static_cast<int>(h.numel())});
      return sum(mul(flat, flat));
    };
    CHECK_FALSE(fd_compare(x, fwd).failed);
    CHECK_FALSE(fd_compare(y, fwd).failed);
  }
}

TEST_CASE("segmentation loss gradient on 20 random cases") {
  Rng rng(106);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 1));
    const int k = 2 + static_cast<int>(rng.uniform_int(0, 4));
    const int h = 2 + static_cast<int>(rng.uniform_int(0, 3));
    const int w = 2 + static_cast<int>(rng.uniform_int(0, 3));
    Tensor logits = Tensor::randn({n, k, h, w}, rng, 1.5, true);
    std::vector<double> lbl(static_cast<size_t>(n) * h * w);
    for (auto& v : lbl) v = static_cast<double>(rng.uniform_int(0, k - 1));
    Tensor labels = Tensor::from_vector({n, 1, h, w}, std::move(lbl));
    auto fwd = [&] { return training::segmentation_loss(logits, labels); };
    CHECK_FALSE(fd_compare(logits, fwd).failed);
  }
}

TEST_CASE("depth loss gradient (masked) on 20 random cases") {
  Rng rng(107);
  for (int rep = 0; rep < 20; ++rep) {
    const Shape s = {1 + static_cast<int>(rng.uniform_int(0, 1)), 1,
                     3 + static_cast<int>(rng.uniform_int(0, 3)),
                     3 + static_cast<int>(rng.uniform_int(0, 3))};
    Tensor pred = Tensor::randn(s, rng, 1.0, true);
    Tensor target = Tensor::randn(s, rng, 1.0);
    // |x| has a kink at pred == target; keep probes away from it.
    for (size_t i = 0; i < pred.data().size(); ++i)
      if (std::abs(pred.data()[i] - target.data()[i]) < 5e-3) pred.mutable_data()[i] += 0.02;
    std::vector<double> mv(pred.data().size());
    for (auto& m : mv) m = rng.uniform() < 0.3 ? 0.0 : 1.0;
    mv[0] = 1.0;  // keep the mask non-empty
    Tensor mask = Tensor::from_vector(s, std::move(mv));
    auto fwd = [&] { return training::depth_loss(pred, target, &mask); };
    CHECK_FALSE(fd_compare(pred, fwd).failed);
  }
}

TEST_CASE("transfer (mse) loss gradient on 20 random cases") {
  Rng rng(108);
  for (int rep = 0; rep < 20; ++rep) {
    const Shape s = random_nchw(rng, 5);
    Tensor g_out = Tensor::randn(s, rng, 1.0, true);
    Tensor target = Tensor::randn(s, rng, 1.0);
    auto fwd = [&] { return training::transfer_loss(g_out, target); };
    CHECK_FALSE(fd_compare(g_out, fwd).failed);
  }
}

TEST_CASE("composite network block gradient matches finite differences") {
  Rng rng(109);
  Tensor x = Tensor::randn({2, 3, 8, 8}, rng, 1.0, false);
  Tensor w1 = Tensor::randn({6, 3, 3, 3}, rng, 0.4, true);
  Tensor b1 = Tensor::randn({6}, rng, 0.1, true);
  Tensor gamma = Tensor::full({6}, 1.0, true);
  Tensor beta = Tensor::zeros({6}, true);
  Tensor w2 = Tensor::randn({6, 6, 3, 3}, rng, 0.3, true);
  Tensor b2 = Tensor::randn({6}, rng, 0.1, true);
  std::vector<double> lbl(2 * 64);
  for (auto& v : lbl) v = static_cast<double>(rng.uniform_int(0, 5));
  Tensor labels = Tensor::from_vector({2, 1, 16, 16}, std::move(lbl));

  auto fwd = [&] {
    std::vector<double> rm(6, 0.0), rv(6, 1.0);
    Tensor h = conv2d(x, w1, b1, 1, 1, 1);
    h = batch_norm2d(h, gamma, beta, rm, rv, 0.1, 1e-5, true);
    h = relu(h);
    Tensor skip = h;
    h = conv2d(h, w2, b2, 1, 2, 2);  // dilated branch
    h = relu(add(h, skip));
    h = bilinear_upsample2x(h);
    return training::segmentation_loss(h, labels);
  };
  for (Tensor* t : {&w1, &b1, &gamma, &beta, &w2, &b2}) {
    const auto r = fd_compare(*t, fwd, 1e-5, 1e-4, 40);
    CAPTURE(r.coord);
    CAPTURE(r.analytic);
    CAPTURE(r.fd);
    CHECK_FALSE(r.failed);
  }
}
