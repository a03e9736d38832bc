#include "atdt/selftest/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "atdt/common/rng.hpp"
#include "atdt/metrics/metrics.hpp"
#include "atdt/scenegen/scenegen.hpp"
#include "atdt/tensor/checkpoint.hpp"
#include "atdt/tensor/ops.hpp"
#include "atdt/training/losses.hpp"

namespace atdt::selftest {
namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

// Central-difference check of d(loss)/d(input) for one differentiable input.
// `forward` must rebuild the graph from current input values on every call.
bool fd_check(Tensor& input, const std::function<Tensor()>& forward, double fault_bias,
              std::string& detail) {
  Tensor loss = forward();
  for (auto* p : {&loss}) (void)p;
  input.zero_grad();
  loss.backward();
  const std::vector<double> analytic = input.grad();

  auto& vals = input.mutable_data();
  const size_t n = vals.size();
  const size_t stride = std::max<size_t>(1, n / 24);  // probe up to ~24 coordinates
  for (size_t i = 0; i < n; i += stride) {
    const double keep = vals[i];
    vals[i] = keep + kFdStep;
    const double up = forward().item();
    vals[i] = keep - kFdStep;
    const double down = forward().item();
    vals[i] = keep;
    const double fd = (up - down) / (2.0 * kFdStep);
    const double got = analytic[i] + fault_bias;
    if (rel_err(fd, got) > kFdTol) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "coord %zu: analytic %.8g vs fd %.8g", i, got, fd);
      detail = buf;
      return false;
    }
  }
  return true;
}

struct Battery {
  Report report;
  const Options& options;

  void add(const std::string& name, const std::function<bool(std::string&)>& body) {
    CheckResult r;
    r.name = name;
    try {
      r.pass = body(r.detail);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    report.checks.push_back(std::move(r));
  }
};

void gradient_checks(Battery& battery) {
  const double conv_fault = battery.options.inject_fault == "conv_grad" ? 1e-2 : 0.0;

  battery.add("grad.conv2d", [&](std::string& detail) {
    Rng rng(11);
    for (const auto& [stride, dilation] : {std::pair{1, 1}, {2, 1}, {1, 2}}) {
      Tensor x = Tensor::randn({2, 3, 7, 7}, rng, 1.0, true);
      Tensor w = Tensor::randn({4, 3, 3, 3}, rng, 0.5, true);
      Tensor b = Tensor::randn({4}, rng, 0.5, true);
      for (Tensor* t : {&x, &w, &b}) {
        auto fwd = [&] {
          return sum(mul(conv2d(x, w, b, stride, dilation, same_padding(3, dilation)),
                         conv2d(x, w, b, stride, dilation, same_padding(3, dilation))));
        };
        if (!fd_check(*t, fwd, conv_fault, detail)) return false;
      }
    }
    return true;
  });

  battery.add("grad.batch_norm", [&](std::string& detail) {
    Rng rng(12);
    for (const bool training : {true, false}) {
      Tensor x = Tensor::randn({3, 4, 5, 5}, rng, 1.0, true);
      Tensor gamma = Tensor::randn({4}, rng, 0.3, true);
      Tensor beta = Tensor::randn({4}, rng, 0.3, true);
      std::vector<double> rm(4, 0.1), rv(4, 0.9);
      for (Tensor* t : {&x, &gamma, &beta}) {
        auto fwd = [&] {
          std::vector<double> rm_copy = rm, rv_copy = rv;
          Tensor y = batch_norm2d(x, gamma, beta, rm_copy, rv_copy, 0.1, 1e-5, training);
          return sum(mul(y, y));
        };
        if (!fd_check(*t, fwd, 0.0, detail)) return false;
      }
    }
    return true;
  });

  battery.add("grad.relu_add_mul_upsample", [&](std::string& detail) {
    Rng rng(13);
    Tensor x = Tensor::randn({2, 3, 4, 4}, rng, 1.0, true);
    Tensor y = Tensor::randn({2, 3, 4, 4}, rng, 1.0, true);
    // Nudge values away from the relu kink so finite differences are clean.
    for (auto& v : x.mutable_data())
      if (std::abs(v) < 1e-2) v += 0.05;
    auto fwd = [&] {
      Tensor h = relu(add(x, y));
      h = bilinear_upsample2x(h);
      return sum(mul(h, h));
    };
    if (!fd_check(x, fwd, 0.0, detail)) return false;
    return fd_check(y, fwd, 0.0, detail);
  });

  battery.add("grad.losses", [&](std::string& detail) {
    Rng rng(14);
    Tensor logits = Tensor::randn({2, 6, 3, 3}, rng, 1.0, true);
    std::vector<double> lbl(2 * 9);
    for (auto& v : lbl) v = static_cast<double>(rng.uniform_int(0, 5));
    Tensor labels = Tensor::from_vector({2, 1, 3, 3}, std::move(lbl));
    auto ce = [&] { return training::segmentation_loss(logits, labels); };
    if (!fd_check(logits, ce, 0.0, detail)) return false;

    Tensor pred = Tensor::randn({2, 1, 4, 4}, rng, 1.0, true);
    Tensor target = Tensor::randn({2, 1, 4, 4}, rng, 1.0, false);
    std::vector<double> mv(2 * 16, 1.0);
    mv[3] = 0.0;
    mv[17] = 0.0;
    Tensor mask = Tensor::from_vector({2, 1, 4, 4}, std::move(mv));
    auto l1 = [&] { return training::depth_loss(pred, target, &mask); };
    if (!fd_check(pred, l1, 0.0, detail)) return false;

    Tensor g_out = Tensor::randn({1, 4, 3, 3}, rng, 1.0, true);
    Tensor feat = Tensor::randn({1, 4, 3, 3}, rng, 1.0, false);
    auto mse = [&] { return training::transfer_loss(g_out, feat); };
    return fd_check(g_out, mse, 0.0, detail);
  });
}

// Naive re-computations used as the oracle side of the metric checks.
void metric_checks(Battery& battery) {
  battery.add("metrics.miou_oracle", [&](std::string& detail) {
    const double fault = battery.options.inject_fault == "miou" ? 1e-3 : 0.0;
    Rng rng(21);
    for (int rep = 0; rep < 40; ++rep) {
      const int k = 2 + static_cast<int>(rng.uniform_int(0, 4));
      const int n = 20 + static_cast<int>(rng.uniform_int(0, 200));
      std::vector<int> gt(n), pred(n);
      for (int i = 0; i < n; ++i) {
        gt[i] = static_cast<int>(rng.uniform_int(0, k - 1));
        pred[i] = static_cast<int>(rng.uniform_int(0, k - 1));
      }
      metrics::ConfusionMatrix cm(k);
      std::vector<double> gt_d(gt.begin(), gt.end()), pred_d(pred.begin(), pred.end());
      cm.accumulate(Tensor::from_vector({1, 1, n}, pred_d), Tensor::from_vector({1, 1, n}, gt_d));
      const auto got = metrics::seg_metrics(cm);

      // Oracle: direct per-class counting.
      double iou_sum = 0.0;
      int present = 0;
      int correct = 0;
      for (int c = 0; c < k; ++c) {
        int tp = 0, fp = 0, fn = 0, in_gt = 0;
        for (int i = 0; i < n; ++i) {
          if (gt[i] == c) ++in_gt;
          if (gt[i] == c && pred[i] == c) ++tp;
          if (gt[i] != c && pred[i] == c) ++fp;
          if (gt[i] == c && pred[i] != c) ++fn;
        }
        if (in_gt > 0) {
          iou_sum += tp + fp + fn > 0 ? static_cast<double>(tp) / (tp + fp + fn) : 0.0;
          ++present;
        }
      }
      for (int i = 0; i < n; ++i) correct += gt[i] == pred[i];
      const double miou_oracle = iou_sum / present;
      const double acc_oracle = static_cast<double>(correct) / n;
      if (rel_err(got.miou + fault, miou_oracle) > 1e-12 || rel_err(got.acc, acc_oracle) > 1e-12) {
        detail = "instance " + std::to_string(rep);
        return false;
      }
    }
    return true;
  });

  battery.add("metrics.depth_oracle", [&](std::string& detail) {
    const double fault = battery.options.inject_fault == "depth_metrics" ? 1e-3 : 0.0;
    Rng rng(22);
    for (int rep = 0; rep < 40; ++rep) {
      const int n = 10 + static_cast<int>(rng.uniform_int(0, 100));
      std::vector<double> pred(n), gt(n);
      for (int i = 0; i < n; ++i) {
        gt[i] = rng.uniform(1.0, 100.0);
        pred[i] = rng.uniform(0.5, 120.0);  // exercises clamping
      }
      const auto got = metrics::depth_metrics(Tensor::from_vector({1, 1, n}, pred),
                                              Tensor::from_vector({1, 1, n}, gt), nullptr, 1.0,
                                              100.0);
      double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0, d1 = 0, d2 = 0, d3 = 0;
      for (int i = 0; i < n; ++i) {
        const double p = std::clamp(pred[i], 1.0, 100.0);
        abs_rel += std::abs(p - gt[i]) / gt[i];
        sq_rel += (p - gt[i]) * (p - gt[i]) / gt[i];
        sq += (p - gt[i]) * (p - gt[i]);
        const double dl = std::log(p) - std::log(gt[i]);
        sq_log += dl * dl;
        const double ratio = std::max(p / gt[i], gt[i] / p);
        d1 += ratio < 1.25;
        d2 += ratio < 1.5625;
        d3 += ratio < 1.953125;
      }
      const bool ok = rel_err(got.abs_rel + fault, abs_rel / n) < 1e-12 &&
                      rel_err(got.sq_rel, sq_rel / n) < 1e-12 &&
                      rel_err(got.rmse, std::sqrt(sq / n)) < 1e-12 &&
                      rel_err(got.rmse_log, std::sqrt(sq_log / n)) < 1e-12 &&
                      got.delta1 == d1 / n && got.delta2 == d2 / n && got.delta3 == d3 / n;
      if (!ok) {
        detail = "instance " + std::to_string(rep);
        return false;
      }
    }
    return true;
  });

  battery.add("metrics.hand_case", [&](std::string&) {
    metrics::ConfusionMatrix cm(2);
    cm.at(0, 0) = 3;
    cm.at(0, 1) = 1;
    cm.at(1, 0) = 2;
    cm.at(1, 1) = 4;
    const auto m = metrics::seg_metrics(cm);
    return rel_err(m.miou, 15.0 / 28.0) < 1e-12 && rel_err(m.acc, 0.7) < 1e-12;
  });
}

void scenegen_checks(Battery& battery) {
  using namespace scenegen;

  battery.add("scenegen.determinism", [&](std::string&) {
    GrammarConfig grammar;
    const SceneSpec s1 = generate_scene(777, grammar);
    const SceneSpec s2 = generate_scene(777, grammar);
    const Sample r1 = render(s1, DomainStyle::default_b(), 64, 64);
    const Sample r2 = render(s2, DomainStyle::default_b(), 64, 64);
    return s1.primitives.size() == s2.primitives.size() && r1.image.data() == r2.image.data() &&
           r1.depth.data() == r2.depth.data() && r1.labels.data() == r2.labels.data();
  });

  battery.add("scenegen.style_isolation", [&](std::string&) {
    GrammarConfig grammar;
    const SceneSpec s = generate_scene(778, grammar);
    const Sample a = render(s, DomainStyle::default_a(), 64, 64);
    const Sample b = render(s, DomainStyle::default_b(), 64, 64);
    return a.depth.data() == b.depth.data() && a.labels.data() == b.labels.data() &&
           a.image.data() != b.image.data();
  });

  battery.add("scenegen.occlusion", [&](std::string& detail) {
    GrammarConfig grammar;
    for (uint64_t seed = 100; seed < 105; ++seed) {
      const SceneSpec scene = generate_scene(seed, grammar);
      const Sample s = render(scene, DomainStyle::default_a(), 64, 64);
      // Re-run the ray test: the label must be the nearest hit.
      const double f = scene.camera.focal_px, cx = scene.camera.cx_px, cy = scene.camera.cy_px;
      for (int v = 0; v < 64; v += 3) {
        for (int u = 0; u < 64; u += 3) {
          const double dx = (u + 0.5 - cx) / f, dy = (cy - (v + 0.5)) / f;
          double best_z = kDepthMax;
          int best = 1;
          if (dy < 0.0) {
            const double zg = std::max(scene.camera.height / -dy, kDepthMin);
            if (zg < best_z) {
              best_z = zg;
              best = 0;
            }
          }
          for (size_t pi = 2; pi < scene.primitives.size(); ++pi) {
            const Primitive& p = scene.primitives[pi];
            if (p.z >= best_z) continue;
            const double xw = dx * p.z, yw = scene.camera.height + dy * p.z;
            const double rx = (xw - p.x) / (p.width / 2.0), ry = (yw - p.y) / (p.height / 2.0);
            const bool hit = p.kind == PrimitiveKind::kSign
                                 ? std::abs(rx) + std::abs(ry) <= 1.0
                                 : std::abs(rx) <= 1.0 && std::abs(ry) <= 1.0;
            if (hit) {
              best_z = p.z;
              best = static_cast<int>(p.kind);
            }
          }
          const int64_t px = static_cast<int64_t>(v) * 64 + u;
          if (static_cast<int>(s.labels.data()[px]) != best ||
              std::abs(s.depth.data()[px] - best_z) > 1e-12) {
            detail = "pixel (" + std::to_string(v) + "," + std::to_string(u) + ") seed " +
                     std::to_string(seed);
            return false;
          }
        }
      }
    }
    return true;
  });

  battery.add("scenegen.proxy_invariants", [&](std::string& detail) {
    GrammarConfig grammar;
    const SceneSpec scene = generate_scene(900, grammar);
    const Sample s = render(scene, DomainStyle::default_a(), 64, 64);
    const Sample p = make_proxy_depth(s, 0.05, 0.2, 42);
    if (p.labels.data() != s.labels.data() || p.image.data() != s.image.data()) {
      detail = "labels or image were altered";
      return false;
    }
    double sum = 0.0;
    for (double v : p.valid_mask.data()) sum += v;
    const double frac = sum / static_cast<double>(p.valid_mask.numel());
    if (std::abs(frac - 0.8) > 0.02) {
      detail = "valid fraction " + std::to_string(frac);
      return false;
    }
    const Sample clean = make_proxy_depth(s, 0.0, 0.0, 42);
    if (clean.depth.data() != s.depth.data()) {
      detail = "sigma=0 must leave depth bit-identical";
      return false;
    }
    return true;
  });
}

void checkpoint_checks(Battery& battery) {
  battery.add("checkpoint.roundtrip", [&](std::string&) {
    namespace fs = std::filesystem;
    Rng rng(31);
    std::vector<CheckpointEntry> entries;
    for (int i = 0; i < 5; ++i) {
      CheckpointEntry e;
      e.name = "param" + std::to_string(i);
      e.shape = {1 + static_cast<int>(rng.uniform_int(0, 3)),
                 1 + static_cast<int>(rng.uniform_int(0, 5))};
      e.data.resize(static_cast<size_t>(numel(e.shape)));
      for (auto& d : e.data) d = rng.gaussian();
      entries.push_back(std::move(e));
    }
    const std::string path =
        (fs::temp_directory_path() / "atdt_selftest_ckpt.bin").string();
    save_checkpoint(path, entries);
    const auto loaded = load_checkpoint(path);
    fs::remove(path);
    if (loaded.size() != entries.size()) return false;
    for (size_t i = 0; i < entries.size(); ++i)
      if (loaded[i].name != entries[i].name || loaded[i].shape != entries[i].shape ||
          loaded[i].data != entries[i].data)
        return false;
    return true;
  });
}

}  // namespace

Report run(const Options& options) {
  Battery battery{Report{}, options};
  gradient_checks(battery);
  metric_checks(battery);
  scenegen_checks(battery);
  checkpoint_checks(battery);
  return battery.report;
}

}  // namespace atdt::selftest
