#include "atdt/training/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "atdt/common/error.hpp"
#include "atdt/metrics/metrics.hpp"
#include "atdt/tensor/checkpoint.hpp"
#include "atdt/training/losses.hpp"

namespace atdt::training {
namespace {

using scenegen::kDepthMax;
using scenegen::kDepthMin;
using scenegen::Sample;

Tensor stack_planes(const std::vector<Sample>& samples, const std::vector<int>& indices,
                    const Tensor Sample::* field, double scale) {
  if (indices.empty()) throw ContractViolation("empty batch");
  const Tensor& first = samples.at(indices[0]).*field;
  const Shape& s = first.shape();
  const int64_t per = numel(s);
  std::vector<double> out(static_cast<size_t>(per) * indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const Tensor& t = samples.at(indices[i]).*field;
    if (t.shape() != s) throw ContractViolation("batch samples disagree on shape");
    if (scale == 1.0) {
      std::memcpy(out.data() + i * per, t.data().data(), sizeof(double) * per);
    } else {
      for (int64_t j = 0; j < per; ++j) out[i * per + j] = t.data()[j] * scale;
    }
  }
  Shape batched;
  batched.push_back(static_cast<int>(indices.size()));
  for (int e : s) batched.push_back(e);
  return Tensor::from_vector(std::move(batched), std::move(out));
}

std::vector<int> draw_indices(Rng& rng, int count, int n) {
  std::vector<int> idx(count);
  for (int& i : idx) i = static_cast<int>(rng.uniform_int(0, n - 1));
  return idx;
}

Tensor task_target(Task task, const std::vector<Sample>& samples, const std::vector<int>& idx) {
  return task == Task::kSegmentation ? make_label_batch(samples, idx)
                                     : make_depth_batch(samples, idx);
}

Tensor task_loss(Task task, const Tensor& out, const Tensor& target, const Tensor* mask) {
  return task == Task::kSegmentation ? segmentation_loss(out, target)
                                     : depth_loss(out, target, mask);
}

// Restores the last rolling checkpoint (if any) and raises TrainingAborted.
[[noreturn]] void abort_training(const std::string& why, const TrainHooks& hooks,
                                 const std::function<void(const std::string&)>& restore) {
  std::string last_good;
  if (!hooks.checkpoint_path.empty()) {
    std::ifstream probe(hooks.checkpoint_path);
    if (probe.good()) {
      restore(hooks.checkpoint_path);
      last_good = hooks.checkpoint_path;
    }
  }
  throw TrainingAborted(why + (last_good.empty() ? " (no checkpoint written yet)"
                                                 : " (restored " + last_good + ")"),
                        last_good);
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
}

Tensor make_image_batch(const std::vector<Sample>& samples, const std::vector<int>& indices) {
  return stack_planes(samples, indices, &Sample::image, 1.0);
}

Tensor make_label_batch(const std::vector<Sample>& samples, const std::vector<int>& indices) {
  return stack_planes(samples, indices, &Sample::labels, 1.0);
}

Tensor make_depth_batch(const std::vector<Sample>& samples, const std::vector<int>& indices) {
  return stack_planes(samples, indices, &Sample::depth, 1.0 / kDepthMax);
}

Tensor make_mask_batch(const std::vector<Sample>& samples, const std::vector<int>& indices) {
  return stack_planes(samples, indices, &Sample::valid_mask, 1.0);
}

double eval_task_metric(nets::TaskNetwork& net, Task task, const std::vector<Sample>& split,
                        int eval_batch) {
  if (split.empty()) throw ContractViolation("eval on empty split");
  NoGradGuard no_grad;
  net.set_training(false);

  metrics::ConfusionMatrix cm(scenegen::kNumClasses);
  metrics::DepthAccumulator depth_acc(kDepthMin, kDepthMax);
  for (size_t start = 0; start < split.size(); start += eval_batch) {
    std::vector<int> idx;
    for (size_t i = start; i < std::min(split.size(), start + eval_batch); ++i)
      idx.push_back(static_cast<int>(i));
    const Tensor out = net.forward(make_image_batch(split, idx));
    if (task == Task::kSegmentation) {
      cm.accumulate(metrics::argmax_channels(out), make_label_batch(split, idx));
    } else {
      const Tensor pred = scale(out, kDepthMax);
      Tensor gt = stack_planes(split, idx, &Sample::depth, 1.0);
      depth_acc.add(pred, gt, nullptr);
    }
  }
  net.set_training(true);
  return task == Task::kSegmentation ? metrics::seg_metrics(cm).miou
                                     : depth_acc.finalize().abs_rel;
}

std::vector<LossRecord> train_task_network(nets::TaskNetwork& net, Task task,
                                           const std::vector<Sample>& train_a,
                                           const std::vector<Sample>* train_b,
                                           const std::vector<Sample>& val_a,
                                           const std::vector<Sample>* val_b,
                                           const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train_a.empty()) throw ConfigError("train: empty domain-A training set");
  if (train_b && train_b->empty()) throw ConfigError("train: empty domain-B training set");
  if (train_b && cfg.batch_size % 2 != 0)
    throw ConfigError("train: dual-domain batches need an even batch_size");
  if (net.config().use_batchnorm && cfg.batch_size < 2)
    throw ConfigError("train: batch_size must be >= 2 with batch norm in train mode");

  std::vector<LossRecord> records;
  if (cfg.steps == 0) return records;

  net.set_training(true);
  Adam opt(net.parameters(), {cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(cfg.seed, "batches"));

  auto restore = [&net](const std::string& path) { net.load(load_checkpoint(path)); };

  for (int step = 1; step <= cfg.steps; ++step) {
    Tensor x, target, mask;
    const Tensor* mask_ptr = nullptr;
    if (train_b) {
      const int half = cfg.batch_size / 2;
      const auto ia = draw_indices(rng, half, static_cast<int>(train_a.size()));
      const auto ib = draw_indices(rng, half, static_cast<int>(train_b->size()));
      // Stack A then B into one batch.
      std::vector<Sample> const* sets[2] = {&train_a, train_b};
      std::vector<int> merged(cfg.batch_size);
      std::vector<Sample> view;
      view.reserve(cfg.batch_size);
      for (int i = 0; i < half; ++i) view.push_back((*sets[0])[ia[i]]);
      for (int i = 0; i < half; ++i) view.push_back((*sets[1])[ib[i]]);
      for (int i = 0; i < cfg.batch_size; ++i) merged[i] = i;
      x = make_image_batch(view, merged);
      target = task_target(task, view, merged);
      if (task == Task::kDepth) {
        mask = make_mask_batch(view, merged);
        mask_ptr = &mask;
      }
    } else {
      const auto ia = draw_indices(rng, cfg.batch_size, static_cast<int>(train_a.size()));
      x = make_image_batch(train_a, ia);
      target = task_target(task, train_a, ia);
      if (task == Task::kDepth) {
        mask = make_mask_batch(train_a, ia);
        mask_ptr = &mask;
      }
    }

    const Tensor loss = task_loss(task, net.forward(x), target, mask_ptr);
    const double loss_v = loss.item();
    if (!std::isfinite(loss_v)) abort_training("non-finite training loss", hooks, restore);
    opt.zero_grad();
    loss.backward();
    try {
      opt.step();
    } catch (const TrainingAborted& e) {
      abort_training(e.what(), hooks, restore);
    }

    LossRecord rec;
    rec.step = step;
    rec.train_loss = loss_v;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      rec.val.domain_a = eval_task_metric(net, task, val_a);
      if (val_b) rec.val.domain_b = eval_task_metric(net, task, *val_b);
      if (!hooks.checkpoint_path.empty()) save_checkpoint(hooks.checkpoint_path, net.state());
    }
    if (hooks.on_record) hooks.on_record(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<LossRecord> train_multitask(nets::MultiTaskNetwork& net, Task task1, Task task2,
                                        const std::vector<Sample>& train_a,
                                        const std::vector<Sample>& train_b,
                                        const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train_a.empty() || train_b.empty()) throw ConfigError("train: empty training set");
  if (cfg.batch_size % 2 != 0)
    throw ConfigError("train: dual-domain batches need an even batch_size");

  std::vector<LossRecord> records;
  if (cfg.steps == 0) return records;

  net.set_training(true);
  Adam opt(net.parameters(), {cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(cfg.seed, "batches"));
  auto restore = [&net](const std::string& path) { net.load(load_checkpoint(path)); };

  const int half = cfg.batch_size / 2;
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto ia = draw_indices(rng, half, static_cast<int>(train_a.size()));
    const auto ib = draw_indices(rng, half, static_cast<int>(train_b.size()));
    const Tensor xa = make_image_batch(train_a, ia);
    const Tensor xb = make_image_batch(train_b, ib);

    const auto out_a = net.forward(xa);
    const auto out_b = net.forward(xb);

    Tensor mask_a, mask_b;
    const Tensor* mask_a_ptr = nullptr;
    const Tensor* mask_b_ptr = nullptr;
    if (task1 == Task::kDepth) {
      mask_a = make_mask_batch(train_a, ia);
      mask_a_ptr = &mask_a;
      mask_b = make_mask_batch(train_b, ib);
      mask_b_ptr = &mask_b;
    }
    const Tensor loss_t1 =
        scale(add(task_loss(task1, out_a.task1, task_target(task1, train_a, ia), mask_a_ptr),
                  task_loss(task1, out_b.task1, task_target(task1, train_b, ib), mask_b_ptr)),
              0.5);
    Tensor mask_a2;
    const Tensor* mask_a2_ptr = nullptr;
    if (task2 == Task::kDepth) {
      mask_a2 = make_mask_batch(train_a, ia);
      mask_a2_ptr = &mask_a2;
    }
    const Tensor loss_t2 =
        task_loss(task2, out_a.task2, task_target(task2, train_a, ia), mask_a2_ptr);
    const Tensor loss = add(loss_t1, loss_t2);  // 1:1 weighting

    const double loss_v = loss.item();
    if (!std::isfinite(loss_v)) abort_training("non-finite training loss", hooks, restore);
    opt.zero_grad();
    loss.backward();
    try {
      opt.step();
    } catch (const TrainingAborted& e) {
      abort_training(e.what(), hooks, restore);
    }

    LossRecord rec;
    rec.step = step;
    rec.train_loss = loss_v;
    if ((step % cfg.eval_every == 0 || step == cfg.steps) && !hooks.checkpoint_path.empty())
      save_checkpoint(hooks.checkpoint_path, net.state());
    if (hooks.on_record) hooks.on_record(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

FeaturePairs precompute_feature_pairs(nets::TaskNetwork& e1_net, nets::TaskNetwork& e2_net,
                                      int level, const std::vector<Sample>& samples, int batch) {
  NoGradGuard no_grad;
  e1_net.set_training(false);
  e2_net.set_training(false);
  FeaturePairs pairs;
  pairs.src.reserve(samples.size());
  pairs.dst.reserve(samples.size());
  for (size_t start = 0; start < samples.size(); start += batch) {
    std::vector<int> idx;
    for (size_t i = start; i < std::min(samples.size(), start + batch); ++i)
      idx.push_back(static_cast<int>(i));
    const Tensor x = make_image_batch(samples, idx);
    const Tensor f1 = e1_net.encode(x, level);
    const Tensor f2 = e2_net.encode(x, level);
    // Split back into per-sample tensors so batches can be re-drawn freely.
    const Shape fs = f1.shape();
    const int64_t per = static_cast<int64_t>(fs[1]) * fs[2] * fs[3];
    for (size_t i = 0; i < idx.size(); ++i) {
      std::vector<double> src(f1.data().begin() + i * per, f1.data().begin() + (i + 1) * per);
      std::vector<double> dst(f2.data().begin() + i * per, f2.data().begin() + (i + 1) * per);
      pairs.src.push_back(Tensor::from_vector({fs[1], fs[2], fs[3]}, std::move(src)));
      pairs.dst.push_back(Tensor::from_vector({fs[1], fs[2], fs[3]}, std::move(dst)));
    }
  }
  return pairs;
}

namespace {

Tensor stack_features(const std::vector<Tensor>& feats, const std::vector<int>& idx) {
  const Shape& s = feats.at(idx[0]).shape();
  const int64_t per = numel(s);
  std::vector<double> out(static_cast<size_t>(per) * idx.size());
  for (size_t i = 0; i < idx.size(); ++i)
    std::memcpy(out.data() + i * per, feats[idx[i]].data().data(), sizeof(double) * per);
  Shape batched{static_cast<int>(idx.size()), s[0], s[1], s[2]};
  return Tensor::from_vector(std::move(batched), std::move(out));
}

double eval_transfer_loss(nets::TransferNet& g, const FeaturePairs& pairs, int batch) {
  NoGradGuard no_grad;
  g.set_training(false);
  double total = 0.0;
  int64_t count = 0;
  for (size_t start = 0; start < pairs.src.size(); start += batch) {
    std::vector<int> idx;
    for (size_t i = start; i < std::min(pairs.src.size(), start + batch); ++i)
      idx.push_back(static_cast<int>(i));
    const Tensor out = g.forward(stack_features(pairs.src, idx));
    const Tensor dst = stack_features(pairs.dst, idx);
    total += transfer_loss(out, dst).item() * static_cast<double>(idx.size());
    count += static_cast<int64_t>(idx.size());
  }
  g.set_training(true);
  return total / static_cast<double>(count);
}

}  // namespace

std::vector<LossRecord> train_transfer(nets::TransferNet& g, nets::TaskNetwork& e1_net,
                                       nets::TaskNetwork& e2_net, int level,
                                       const std::vector<Sample>& train_a,
                                       const std::vector<Sample>& val_a, const TrainConfig& cfg,
                                       const TrainHooks& hooks) {
  cfg.validate();
  if (train_a.empty()) throw ConfigError("train_transfer: empty training set");

  std::vector<LossRecord> records;
  if (cfg.steps == 0) return records;

  const FeaturePairs train_pairs = precompute_feature_pairs(e1_net, e2_net, level, train_a);
  const FeaturePairs val_pairs = precompute_feature_pairs(e1_net, e2_net, level, val_a);

  g.set_training(true);
  Adam opt(g.parameters(), {cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(cfg.seed, "batches"));
  auto restore = [&g](const std::string& path) { g.load(load_checkpoint(path)); };

  for (int step = 1; step <= cfg.steps; ++step) {
    const auto idx = draw_indices(rng, cfg.batch_size, static_cast<int>(train_pairs.src.size()));
    const Tensor src = stack_features(train_pairs.src, idx);
    const Tensor dst = stack_features(train_pairs.dst, idx);
    const Tensor loss = transfer_loss(g.forward(src), dst);
    const double loss_v = loss.item();
    if (!std::isfinite(loss_v)) abort_training("non-finite transfer loss", hooks, restore);
    opt.zero_grad();
    loss.backward();
    try {
      opt.step();
    } catch (const TrainingAborted& e) {
      abort_training(e.what(), hooks, restore);
    }

    LossRecord rec;
    rec.step = step;
    rec.train_loss = loss_v;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      rec.val.domain_a = eval_transfer_loss(g, val_pairs, cfg.batch_size);
      if (!hooks.checkpoint_path.empty()) save_checkpoint(hooks.checkpoint_path, g.state());
    }
    if (hooks.on_record) hooks.on_record(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

void append_records_csv(const std::string& path, const std::string& component,
                        const std::vector<LossRecord>& records) {
  const bool fresh = !std::ifstream(path).good();
  std::ofstream os(path, std::ios::app);
  if (!os) throw IoError("cannot open csv for writing: " + path);
  if (fresh) os << "component,step,train_loss,val_a,val_b\n";
  char buf[160];
  for (const auto& r : records) {
    auto field = [](const std::optional<double>& v) {
      return v ? std::to_string(*v) : std::string();
    };
    std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%s,%s\n", component.c_str(), r.step,
                  r.train_loss, field(r.val.domain_a).c_str(), field(r.val.domain_b).c_str());
    os << buf;
  }
}

}  // namespace atdt::training
