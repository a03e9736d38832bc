#include "atdt/pipeline/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include "atdt/common/error.hpp"
#include "atdt/common/rng.hpp"
#include "atdt/config/config_json.hpp"
#include "atdt/pipeline/result_json.hpp"
#include "atdt/scenegen/image_io.hpp"
#include "atdt/tensor/checkpoint.hpp"
#include "atdt/training/losses.hpp"

namespace atdt::pipeline {

namespace fs = std::filesystem;
using scenegen::Domain;
using scenegen::kDepthMax;
using scenegen::kDepthMin;
using scenegen::Sample;
using training::Task;

const std::vector<std::string> kKnownMethods = {
    "atdt", "baseline", "oracle", "multitask", "ablate_level", "ablate_shared", "ablate_bn"};

const char* direction_name(Direction d) {
  return d == Direction::kDepToSem ? "dep2sem" : "sem2dep";
}

Direction direction_from_name(const std::string& name) {
  if (name == "dep2sem") return Direction::kDepToSem;
  if (name == "sem2dep") return Direction::kSemToDep;
  throw ConfigError("direction must be dep2sem or sem2dep, got '" + name + "'");
}

Task ExperimentPlan::task1() const {
  return direction == Direction::kDepToSem ? Task::kDepth : Task::kSegmentation;
}

Task ExperimentPlan::task2() const {
  return direction == Direction::kDepToSem ? Task::kSegmentation : Task::kDepth;
}

void ExperimentPlan::validate() const {
  if (name.empty() || name.find('/') != std::string::npos)
    throw ConfigError("plan: name must be non-empty and without '/'");
  if (seeds.empty()) throw ConfigError("plan: at least one seed is required");
  if (split_level < 1 || split_level > 4) throw ConfigError("plan: split_level must be in 1..4");
  if (jobs < 1) throw ConfigError("plan: jobs must be >= 1");
  if (proxy_labels_on_b && direction != Direction::kDepToSem)
    throw ConfigError("plan: proxy_labels_on_b emulates noisy depth supervision and requires "
                      "direction dep2sem");
  for (const auto& m : methods) {
    bool known = false;
    for (const auto& k : kKnownMethods) known = known || k == m;
    if (!known) throw ConfigError("plan: unknown method '" + m + "'");
  }
  dataset.validate();
  train_n1.validate();
  train_n2.validate();
  train_g.validate();
}

double EvalResult::primary() const {
  if (seg) return seg->miou;
  if (depth) return depth->abs_rel;
  throw ContractViolation("EvalResult::primary on empty result");
}

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point wall = std::chrono::steady_clock::now();
  double cpu = thread_cpu_seconds();

  static double thread_cpu_seconds() {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
  }

  Timing elapsed() const {
    Timing t;
    t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall).count();
    t.cpu_seconds = thread_cpu_seconds() - cpu;
    return t;
  }
};

int head_channels(Task task) {
  return task == Task::kSegmentation ? scenegen::kNumClasses : 1;
}

// Cityscapes-style colors for the qualitative dumps.
constexpr unsigned char kPalette[scenegen::kNumClasses][3] = {
    {128, 64, 128}, {70, 130, 180}, {70, 70, 70}, {0, 0, 142}, {153, 153, 153}, {220, 220, 0}};

Tensor labels_to_color(const Tensor& labels) {
  const Shape& s = labels.shape();
  const int64_t plane = static_cast<int64_t>(s[1]) * s[2];
  std::vector<double> rgb(static_cast<size_t>(3) * plane);
  for (int64_t i = 0; i < plane; ++i) {
    const int c = std::clamp(static_cast<int>(labels.data()[i]), 0, scenegen::kNumClasses - 1);
    for (int ch = 0; ch < 3; ++ch) rgb[ch * plane + i] = kPalette[c][ch] / 255.0;
  }
  return Tensor::from_vector({3, s[1], s[2]}, std::move(rgb));
}

// Everything produced/cached while executing one seed of the plan.
struct SeedContext {
  const ExperimentPlan& plan;
  uint64_t seed;
  fs::path dir;

  scenegen::PairedDatasets data;
  std::vector<Sample> b_train_t1;  // B-side T1 supervision (proxied when configured)

  std::unique_ptr<nets::TaskNetwork> n1, n2, oracle;
  std::unique_ptr<nets::TaskNetwork> n1_alt, n2_alt;      // batch-norm ablation arm
  std::unique_ptr<nets::TaskNetwork> n1_a, n1_b;          // non-shared arm
  std::unique_ptr<nets::MultiTaskNetwork> multitask;
  std::map<std::string, std::unique_ptr<nets::TransferNet>> transfer;

  std::map<std::string, Timing> train_times;
  nlohmann::ordered_json checkpoint_index;
  SeedResult result;

  SeedContext(const ExperimentPlan& p, uint64_t s, fs::path d)
      : plan(p), seed(s), dir(std::move(d)) {}

  std::string curves_path() const { return (dir / "curves.csv").string(); }
  std::string ckpt_path(const std::string& component) const {
    return (dir / "checkpoints" / (component + ".ckpt")).string();
  }

  training::TrainConfig train_cfg(const training::TrainConfig& base, const std::string& tag) {
    training::TrainConfig cfg = base;
    cfg.seed = derive_seed(seed, "train." + tag);
    return cfg;
  }

  nets::TaskNetworkConfig net_cfg(const std::string& name, Task task, bool use_bn) {
    nets::TaskNetworkConfig cfg;
    cfg.name = name;
    cfg.in_channels = 3;
    cfg.head_channels = head_channels(task);
    cfg.use_batchnorm = use_bn;
    cfg.seed = derive_seed(seed, "net." + name);
    return cfg;
  }

  template <typename Net, typename TrainFn>
  void run_training(Net& net, const std::string& component, TrainFn&& train) {
    const std::string rolling = ckpt_path(component + "_last");
    Stopwatch watch;
    training::TrainHooks hooks;
    hooks.checkpoint_path = rolling;
    const auto records = train(hooks);
    train_times[component] = watch.elapsed();
    training::append_records_csv(curves_path(), component, records);
    save_checkpoint(ckpt_path(component), net.state());
    checkpoint_index[component] = ckpt_path(component);
    std::error_code ec;
    fs::remove(rolling, ec);  // final checkpoint supersedes the rolling one
  }

  // --- cached artifacts -------------------------------------------------

  nets::TaskNetwork& ensure_n1() {
    if (!n1) {
      n1 = std::make_unique<nets::TaskNetwork>(net_cfg("n1", plan.task1(), plan.use_batchnorm));
      run_training(*n1, "n1", [&](const training::TrainHooks& hooks) {
        return train_task_network(*n1, plan.task1(), data.a.train, &b_train_t1, data.a.val,
                                  &data.b.val, train_cfg(plan.train_n1, "n1"), hooks);
      });
    }
    return *n1;
  }

  nets::TaskNetwork& ensure_n2() {
    if (!n2) {
      n2 = std::make_unique<nets::TaskNetwork>(net_cfg("n2", plan.task2(), plan.use_batchnorm));
      run_training(*n2, "n2", [&](const training::TrainHooks& hooks) {
        return train_task_network(*n2, plan.task2(), data.a.train, nullptr, data.a.val, nullptr,
                                  train_cfg(plan.train_n2, "n2"), hooks);
      });
    }
    return *n2;
  }

  nets::TaskNetwork& ensure_oracle() {
    if (!oracle) {
      oracle = std::make_unique<nets::TaskNetwork>(
          net_cfg("oracle", plan.task2(), plan.use_batchnorm));
      run_training(*oracle, "oracle", [&](const training::TrainHooks& hooks) {
        return train_task_network(*oracle, plan.task2(), data.b.train, nullptr, data.b.val,
                                  nullptr, train_cfg(plan.train_n2, "oracle"), hooks);
      });
    }
    return *oracle;
  }

  nets::MultiTaskNetwork& ensure_multitask() {
    if (!multitask) {
      nets::MultiTaskNetworkConfig cfg;
      cfg.name = "multitask";
      cfg.head1_channels = head_channels(plan.task1());
      cfg.head2_channels = head_channels(plan.task2());
      cfg.use_batchnorm = plan.use_batchnorm;
      cfg.seed = derive_seed(seed, "net.multitask");
      multitask = std::make_unique<nets::MultiTaskNetwork>(cfg);
      run_training(*multitask, "multitask", [&](const training::TrainHooks& hooks) {
        return train_multitask(*multitask, plan.task1(), plan.task2(), data.a.train, b_train_t1,
                               train_cfg(plan.train_n1, "multitask"), hooks);
      });
    }
    return *multitask;
  }

  // Batch-norm ablation arm networks (the opposite of plan.use_batchnorm).
  nets::TaskNetwork& ensure_n1_alt() {
    if (!n1_alt) {
      n1_alt = std::make_unique<nets::TaskNetwork>(
          net_cfg("n1_altbn", plan.task1(), !plan.use_batchnorm));
      run_training(*n1_alt, "n1_altbn", [&](const training::TrainHooks& hooks) {
        return train_task_network(*n1_alt, plan.task1(), data.a.train, &b_train_t1, data.a.val,
                                  &data.b.val, train_cfg(plan.train_n1, "n1_altbn"), hooks);
      });
    }
    return *n1_alt;
  }

  nets::TaskNetwork& ensure_n2_alt() {
    if (!n2_alt) {
      n2_alt = std::make_unique<nets::TaskNetwork>(
          net_cfg("n2_altbn", plan.task2(), !plan.use_batchnorm));
      run_training(*n2_alt, "n2_altbn", [&](const training::TrainHooks& hooks) {
        return train_task_network(*n2_alt, plan.task2(), data.a.train, nullptr, data.a.val,
                                  nullptr, train_cfg(plan.train_n2, "n2_altbn"), hooks);
      });
    }
    return *n2_alt;
  }

  // Single-domain T1 networks for the shared-encoder ablation.
  nets::TaskNetwork& ensure_n1_single(Domain domain) {
    auto& slot = domain == Domain::kA ? n1_a : n1_b;
    if (!slot) {
      const std::string name = domain == Domain::kA ? "n1_a" : "n1_b";
      slot = std::make_unique<nets::TaskNetwork>(net_cfg(name, plan.task1(), plan.use_batchnorm));
      run_training(*slot, name, [&](const training::TrainHooks& hooks) {
        const auto& train = domain == Domain::kA ? data.a.train : b_train_t1;
        const auto& val = domain == Domain::kA ? data.a.val : data.b.val;
        return train_task_network(*slot, plan.task1(), train, nullptr, val, nullptr,
                                  train_cfg(plan.train_n1, name), hooks);
      });
    }
    return *slot;
  }

  // Transfer net trained on pairs (E1(x^A), E2(x^A)). `key` names the arm.
  nets::TransferNet& ensure_transfer(const std::string& key, nets::TaskNetwork& e1,
                                     nets::TaskNetwork& e2, int level) {
    auto it = transfer.find(key);
    if (it == transfer.end()) {
      nets::TransferNetConfig cfg;
      cfg.name = key;
      cfg.channels = nets::kStageChannels[level - 1];
      cfg.use_batchnorm = e1.config().use_batchnorm;
      cfg.seed = derive_seed(seed, "net." + key);
      auto g = std::make_unique<nets::TransferNet>(cfg);
      run_training(*g, key, [&](const training::TrainHooks& hooks) {
        return train_transfer(*g, e1, e2, level, data.a.train, data.a.val,
                              train_cfg(plan.train_g, key), hooks);
      });
      it = transfer.emplace(key, std::move(g)).first;
    }
    return *it->second;
  }
};

EvalResult evaluate_predictor(Task task2, const std::function<Tensor(const Tensor&)>& fwd,
                              const std::vector<Sample>& split) {
  NoGradGuard no_grad;
  metrics::ConfusionMatrix cm(scenegen::kNumClasses);
  metrics::DepthAccumulator depth_acc(kDepthMin, kDepthMax);
  constexpr int kBatch = 8;
  for (size_t start = 0; start < split.size(); start += kBatch) {
    std::vector<int> idx;
    for (size_t i = start; i < std::min(split.size(), start + kBatch); ++i)
      idx.push_back(static_cast<int>(i));
    const Tensor out = fwd(training::make_image_batch(split, idx));
    if (task2 == Task::kSegmentation) {
      cm.accumulate(metrics::argmax_channels(out), training::make_label_batch(split, idx));
    } else {
      std::vector<int> all(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) all[i] = idx[i];
      Tensor gt = Tensor::from_vector(out.shape(), [&] {
        std::vector<double> g;
        g.reserve(static_cast<size_t>(numel(out.shape())));
        for (int i : all) {
          const auto& d = split[i].depth.data();
          g.insert(g.end(), d.begin(), d.end());
        }
        return g;
      }());
      depth_acc.add(scale(out, kDepthMax), gt, nullptr);
    }
  }
  EvalResult r;
  if (task2 == Task::kSegmentation)
    r.seg = metrics::seg_metrics(cm);
  else
    r.depth = depth_acc.finalize();
  return r;
}

// The Eq.-4 composition: D2(G(E1(x))) with everything in eval mode.
std::function<Tensor(const Tensor&)> atdt_predictor(nets::TaskNetwork& encoder_net,
                                                    nets::TransferNet& g,
                                                    nets::TaskNetwork& decoder_net, int level) {
  encoder_net.set_training(false);
  g.set_training(false);
  decoder_net.set_training(false);
  return [&encoder_net, &g, &decoder_net, level](const Tensor& x) {
    return decoder_net.decode(g.forward(encoder_net.encode(x, level)), level);
  };
}

std::function<Tensor(const Tensor&)> direct_predictor(nets::TaskNetwork& net) {
  net.set_training(false);
  return [&net](const Tensor& x) { return net.forward(x); };
}

double mean_feature_magnitude(nets::TaskNetwork& net, const std::vector<Sample>& split,
                              int level) {
  NoGradGuard no_grad;
  net.set_training(false);
  double total = 0.0;
  int64_t count = 0;
  constexpr int kBatch = 8;
  for (size_t start = 0; start < split.size(); start += kBatch) {
    std::vector<int> idx;
    for (size_t i = start; i < std::min(split.size(), start + kBatch); ++i)
      idx.push_back(static_cast<int>(i));
    const Tensor f = net.encode(training::make_image_batch(split, idx), level);
    for (double v : f.data()) total += std::abs(v);
    count += f.numel();
  }
  return total / static_cast<double>(count);
}

void dump_qualitative(SeedContext& ctx) {
  // Input / prediction / ground truth for the first few B-test scenes,
  // for both AT/DT and the baseline.
  if (!ctx.n1 || !ctx.n2) return;
  auto git = ctx.transfer.find("g_level" + std::to_string(ctx.plan.split_level));
  if (git == ctx.transfer.end()) return;
  const auto& split = ctx.data.b.test;
  if (split.empty()) return;

  NoGradGuard no_grad;
  auto atdt_fwd = atdt_predictor(*ctx.n1, *git->second, *ctx.n2, ctx.plan.split_level);
  auto base_fwd = direct_predictor(*ctx.n2);
  const fs::path dir = ctx.dir / "samples";
  fs::create_directories(dir);

  const Task t2 = ctx.plan.task2();
  const int count = std::min<int>(4, static_cast<int>(split.size()));
  for (int i = 0; i < count; ++i) {
    const Sample& s = split[i];
    const std::string idx = std::to_string(i);
    scenegen::write_ppm((dir / ("input_" + idx + ".ppm")).string(), s.image);
    const Tensor x = training::make_image_batch(split, {i});
    const Tensor pred_atdt = atdt_fwd(x);
    const Tensor pred_base = base_fwd(x);
    if (t2 == Task::kSegmentation) {
      scenegen::write_ppm((dir / ("gt_" + idx + ".ppm")).string(), labels_to_color(s.labels));
      auto to_label = [](const Tensor& logits) {
        const Tensor ids = metrics::argmax_channels(logits);
        return Tensor::from_vector({1, ids.shape()[2], ids.shape()[3]}, ids.data());
      };
      scenegen::write_ppm((dir / ("atdt_" + idx + ".ppm")).string(),
                          labels_to_color(to_label(pred_atdt)));
      scenegen::write_ppm((dir / ("baseline_" + idx + ".ppm")).string(),
                          labels_to_color(to_label(pred_base)));
    } else {
      auto to_depth = [](const Tensor& out) {
        std::vector<double> d(out.data().size());
        for (size_t j = 0; j < d.size(); ++j)
          d[j] = std::clamp(out.data()[j] * kDepthMax, kDepthMin, kDepthMax);
        return Tensor::from_vector({1, out.shape()[2], out.shape()[3]}, std::move(d));
      };
      scenegen::write_depth_pgm16((dir / ("gt_" + idx + ".pgm")).string(), s.depth);
      scenegen::write_depth_pgm16((dir / ("atdt_" + idx + ".pgm")).string(), to_depth(pred_atdt));
      scenegen::write_depth_pgm16((dir / ("baseline_" + idx + ".pgm")).string(),
                                  to_depth(pred_base));
    }
  }
}

void run_seed(SeedContext& ctx) {
  const ExperimentPlan& plan = ctx.plan;
  fs::create_directories(ctx.dir / "checkpoints");

  ctx.data = scenegen::build_dataset(plan.dataset, derive_seed(ctx.seed, "dataset"));
  if (plan.proxy_labels_on_b && plan.task1() == Task::kDepth) {
    ctx.b_train_t1.reserve(ctx.data.b.train.size());
    for (size_t i = 0; i < ctx.data.b.train.size(); ++i)
      ctx.b_train_t1.push_back(scenegen::make_proxy_depth(
          ctx.data.b.train[i], plan.dataset.proxy.noise_sigma, plan.dataset.proxy.hole_fraction,
          derive_seed(ctx.seed, "proxy", static_cast<uint64_t>(i))));
  } else {
    ctx.b_train_t1 = ctx.data.b.train;
  }

  const Task t2 = plan.task2();
  const int level = plan.split_level;

  auto record_method = [&](const std::string& name, auto&& body) {
    if (!plan.methods.count(name)) return;
    try {
      body();
    } catch (const std::exception& e) {
      // Partial results are kept; the failure is recorded explicitly.
      ctx.result.failures.push_back(name + ": " + e.what());
      ctx.result.methods[name].failed = true;
      ctx.result.methods[name].error = e.what();
    }
  };

  // AT/DT itself: steps 1-4, timed. The encoder either is the shared
  // N1^{A u B} or, when the plan disables sharing, per-domain N1 networks.
  record_method("atdt", [&] {
    MethodResult r;
    Timing eval_time;
    std::vector<std::string> deps;
    if (plan.shared_encoder) {
      auto& n1 = ctx.ensure_n1();
      auto& n2 = ctx.ensure_n2();
      auto& g = ctx.ensure_transfer("g_level" + std::to_string(level), n1, n2, level);
      deps = {"n1", "n2", "g_level" + std::to_string(level)};
      Stopwatch watch;
      r.by_domain["B"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, level),
                                            ctx.data.b.test);
      r.by_domain["A"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, level),
                                            ctx.data.a.test);
      eval_time = watch.elapsed();
    } else {
      auto& e1a = ctx.ensure_n1_single(Domain::kA);
      auto& e1b = ctx.ensure_n1_single(Domain::kB);
      auto& n2 = ctx.ensure_n2();
      auto& g = ctx.ensure_transfer("g_nonshared", e1a, n2, level);
      deps = {"n1_a", "n1_b", "n2", "g_nonshared"};
      Stopwatch watch;
      r.by_domain["B"] = evaluate_predictor(t2, atdt_predictor(e1b, g, n2, level),
                                            ctx.data.b.test);
      r.by_domain["A"] = evaluate_predictor(t2, atdt_predictor(e1a, g, n2, level),
                                            ctx.data.a.test);
      eval_time = watch.elapsed();
    }
    ctx.result.methods["atdt"] = std::move(r);
    // Steps 1-4 cost: the trainings this run depends on plus its own eval.
    Timing total = eval_time;
    for (const auto& dep : deps) {
      auto it = ctx.train_times.find(dep);
      if (it != ctx.train_times.end()) {
        total.wall_seconds += it->second.wall_seconds;
        total.cpu_seconds += it->second.cpu_seconds;
      }
    }
    ctx.result.pipeline_timing = total;
  });

  record_method("baseline", [&] {
    auto& n2 = ctx.ensure_n2();
    MethodResult r;
    r.by_domain["B"] = evaluate_predictor(t2, direct_predictor(n2), ctx.data.b.test);
    r.by_domain["A"] = evaluate_predictor(t2, direct_predictor(n2), ctx.data.a.test);
    ctx.result.methods["baseline"] = std::move(r);
  });

  record_method("oracle", [&] {
    auto& net = ctx.ensure_oracle();
    MethodResult r;
    r.by_domain["B"] = evaluate_predictor(t2, direct_predictor(net), ctx.data.b.test);
    ctx.result.methods["oracle"] = std::move(r);
  });

  record_method("multitask", [&] {
    auto& net = ctx.ensure_multitask();
    net.set_training(false);
    auto fwd = [&net](const Tensor& x) { return net.forward(x).task2; };
    MethodResult r;
    r.by_domain["B"] = evaluate_predictor(t2, fwd, ctx.data.b.test);
    r.by_domain["A"] = evaluate_predictor(t2, fwd, ctx.data.a.test);
    ctx.result.methods["multitask"] = std::move(r);
  });

  record_method("ablate_level", [&] {
    auto& n1 = ctx.ensure_n1();
    auto& n2 = ctx.ensure_n2();
    for (int lv = 1; lv <= 4; ++lv) {
      auto& g = ctx.ensure_transfer("g_level" + std::to_string(lv), n1, n2, lv);
      MethodResult r;
      r.by_domain["B"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, lv), ctx.data.b.test);
      r.by_domain["A"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, lv), ctx.data.a.test);
      ctx.result.transfer_levels[lv] = std::move(r);
    }
  });

  record_method("ablate_shared", [&] {
    // Shared arm.
    {
      auto& n1 = ctx.ensure_n1();
      auto& n2 = ctx.ensure_n2();
      auto& g = ctx.ensure_transfer("g_level" + std::to_string(level), n1, n2, level);
      MethodResult r;
      r.by_domain["B"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, level), ctx.data.b.test);
      r.by_domain["A"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, level), ctx.data.a.test);
      ctx.result.shared_encoder["shared"] = std::move(r);
    }
    // Non-shared arm: G is trained on N1^A features and deployed on N1^B's.
    {
      auto& e1a = ctx.ensure_n1_single(Domain::kA);
      auto& e1b = ctx.ensure_n1_single(Domain::kB);
      auto& n2 = ctx.ensure_n2();
      auto& g = ctx.ensure_transfer("g_nonshared", e1a, n2, level);
      MethodResult r;
      r.by_domain["B"] = evaluate_predictor(t2, atdt_predictor(e1b, g, n2, level), ctx.data.b.test);
      r.by_domain["A"] = evaluate_predictor(t2, atdt_predictor(e1a, g, n2, level), ctx.data.a.test);
      ctx.result.shared_encoder["nonshared"] = std::move(r);
    }
  });

  record_method("ablate_bn", [&] {
    const std::string primary_arm = plan.use_batchnorm ? "with" : "without";
    const std::string alt_arm = plan.use_batchnorm ? "without" : "with";
    {
      auto& n1 = ctx.ensure_n1();
      auto& n2 = ctx.ensure_n2();
      auto& g = ctx.ensure_transfer("g_level" + std::to_string(level), n1, n2, level);
      MethodResult r;
      r.by_domain["B"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, level), ctx.data.b.test);
      r.by_domain["A"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, level), ctx.data.a.test);
      ctx.result.batchnorm[primary_arm] = std::move(r);
      ctx.result.feature_magnitude[primary_arm] =
          mean_feature_magnitude(n1, ctx.data.b.val, level);
    }
    {
      auto& n1 = ctx.ensure_n1_alt();
      auto& n2 = ctx.ensure_n2_alt();
      auto& g = ctx.ensure_transfer("g_altbn", n1, n2, level);
      MethodResult r;
      r.by_domain["B"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, level), ctx.data.b.test);
      r.by_domain["A"] = evaluate_predictor(t2, atdt_predictor(n1, g, n2, level), ctx.data.a.test);
      ctx.result.batchnorm[alt_arm] = std::move(r);
      ctx.result.feature_magnitude[alt_arm] = mean_feature_magnitude(n1, ctx.data.b.val, level);
    }
  });

  if (plan.methods.count("atdt") && plan.methods.count("baseline") && plan.shared_encoder) {
    try {
      dump_qualitative(ctx);
    } catch (const std::exception& e) {
      ctx.result.failures.push_back(std::string("samples: ") + e.what());
    }
  }
}

void write_seed_outputs(SeedContext& ctx) {
  // manifest.json: the fully-resolved config pinned to this seed, plus the
  // checkpoint index. Re-running it reproduces metrics.json byte-for-byte.
  ExperimentPlan pinned = ctx.plan;
  pinned.seeds = {ctx.seed};
  nlohmann::ordered_json manifest;
  manifest["config"] = config::plan_to_json(pinned);
  manifest["seed"] = ctx.seed;
  manifest["checkpoints"] = ctx.checkpoint_index;
  {
    std::ofstream os(ctx.dir / "manifest.json");
    if (!os) throw IoError("cannot write manifest in " + ctx.dir.string());
    os << manifest.dump(2) << "\n";
  }
  {
    std::ofstream os(ctx.dir / "metrics.json");
    if (!os) throw IoError("cannot write metrics in " + ctx.dir.string());
    os << seed_result_to_json(ctx.result, ctx.plan).dump(2) << "\n";
  }
}

}  // namespace

RunResult run_experiment(const ExperimentPlan& plan, const std::string& out_root) {
  plan.validate();
  RunResult result;
  result.plan = plan;
  result.run_dir = (fs::path(out_root) / plan.name).string();
  result.seeds.resize(plan.seeds.size());

  std::atomic<size_t> next{0};
  std::vector<std::string> errors(plan.seeds.size());
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= plan.seeds.size()) return;
      const uint64_t seed = plan.seeds[i];
      SeedContext ctx(plan, seed, fs::path(result.run_dir) / std::to_string(seed));
      ctx.result.seed = seed;
      try {
        run_seed(ctx);
        write_seed_outputs(ctx);
      } catch (const std::exception& e) {
        // Catastrophic per-seed failure (I/O, config): record and continue.
        ctx.result.failures.push_back(std::string("seed: ") + e.what());
        errors[i] = e.what();
        try {
          write_seed_outputs(ctx);
        } catch (...) {
        }
      }
      result.seeds[i] = std::move(ctx.result);
    }
  };

  const int jobs = std::min<int>(plan.jobs, static_cast<int>(plan.seeds.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return result;
}

namespace {
RunResult run_with_methods(ExperimentPlan plan, std::set<std::string> methods,
                           const std::string& out_root) {
  plan.methods = std::move(methods);
  return run_experiment(plan, out_root);
}
}  // namespace

RunResult run_atdt(ExperimentPlan plan, const std::string& out_root) {
  return run_with_methods(std::move(plan), {"atdt"}, out_root);
}
RunResult run_baseline(ExperimentPlan plan, const std::string& out_root) {
  return run_with_methods(std::move(plan), {"baseline"}, out_root);
}
RunResult run_oracle(ExperimentPlan plan, const std::string& out_root) {
  return run_with_methods(std::move(plan), {"oracle"}, out_root);
}
RunResult run_multitask_comparator(ExperimentPlan plan, const std::string& out_root) {
  return run_with_methods(std::move(plan), {"multitask"}, out_root);
}
RunResult ablate_transfer_level(ExperimentPlan plan, const std::string& out_root) {
  return run_with_methods(std::move(plan), {"ablate_level"}, out_root);
}
RunResult ablate_shared_encoder(ExperimentPlan plan, const std::string& out_root) {
  return run_with_methods(std::move(plan), {"ablate_shared"}, out_root);
}
RunResult ablate_batchnorm(ExperimentPlan plan, const std::string& out_root) {
  return run_with_methods(std::move(plan), {"ablate_bn"}, out_root);
}

nlohmann::ordered_json eval_result_to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  if (r.seg) {
    j["task"] = "segmentation";
    j["miou"] = r.seg->miou;
    j["acc"] = r.seg->acc;
    nlohmann::ordered_json per_class;
    for (int c = 0; c < static_cast<int>(r.seg->per_class_iou.size()); ++c) {
      const auto& v = r.seg->per_class_iou[c];
      per_class[scenegen::class_name(c)] = v ? nlohmann::ordered_json(*v)
                                             : nlohmann::ordered_json(nullptr);
    }
    j["per_class_iou"] = per_class;
  } else if (r.depth) {
    j["task"] = "depth";
    j["abs_rel"] = r.depth->abs_rel;
    j["sq_rel"] = r.depth->sq_rel;
    j["rmse"] = r.depth->rmse;
    j["rmse_log"] = r.depth->rmse_log;
    j["delta1"] = r.depth->delta1;
    j["delta2"] = r.depth->delta2;
    j["delta3"] = r.depth->delta3;
    j["n_pixels"] = r.depth->n_pixels;
  }
  return j;
}

EvalResult eval_result_from_json(const nlohmann::json& j) {
  EvalResult r;
  const std::string task = j.at("task").get<std::string>();
  if (task == "segmentation") {
    metrics::SegMetrics m;
    m.miou = j.at("miou").get<double>();
    m.acc = j.at("acc").get<double>();
    for (int c = 0; c < scenegen::kNumClasses; ++c) {
      const auto& v = j.at("per_class_iou").at(scenegen::class_name(c));
      m.per_class_iou.push_back(v.is_null() ? std::nullopt
                                            : std::optional<double>(v.get<double>()));
    }
    r.seg = std::move(m);
  } else if (task == "depth") {
    metrics::DepthMetrics m;
    m.abs_rel = j.at("abs_rel").get<double>();
    m.sq_rel = j.at("sq_rel").get<double>();
    m.rmse = j.at("rmse").get<double>();
    m.rmse_log = j.at("rmse_log").get<double>();
    m.delta1 = j.at("delta1").get<double>();
    m.delta2 = j.at("delta2").get<double>();
    m.delta3 = j.at("delta3").get<double>();
    m.n_pixels = j.at("n_pixels").get<uint64_t>();
    r.depth = std::move(m);
  } else {
    throw IoError("unknown task kind in metrics: " + task);
  }
  return r;
}

nlohmann::ordered_json method_result_to_json(const MethodResult& m) {
  nlohmann::ordered_json j;
  if (m.failed) {
    j["failed"] = true;
    j["error"] = m.error;
    return j;
  }
  for (const auto& [domain, r] : m.by_domain) j[domain] = eval_result_to_json(r);
  return j;
}

MethodResult method_result_from_json(const nlohmann::json& j) {
  MethodResult m;
  if (j.contains("failed") && j.at("failed").get<bool>()) {
    m.failed = true;
    m.error = j.value("error", "");
    return m;
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    m.by_domain[it.key()] = eval_result_from_json(it.value());
  return m;
}

nlohmann::ordered_json seed_result_to_json(const SeedResult& s, const ExperimentPlan& plan) {
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["direction"] = direction_name(plan.direction);
  j["split_level"] = plan.split_level;
  nlohmann::ordered_json methods;
  for (const auto& [name, m] : s.methods) methods[name] = method_result_to_json(m);
  j["methods"] = methods;
  nlohmann::ordered_json ablations;
  if (!s.transfer_levels.empty()) {
    nlohmann::ordered_json levels;
    for (const auto& [lv, m] : s.transfer_levels) levels[std::to_string(lv)] = method_result_to_json(m);
    ablations["transfer_level"] = levels;
  }
  if (!s.shared_encoder.empty()) {
    nlohmann::ordered_json arms;
    for (const auto& [arm, m] : s.shared_encoder) arms[arm] = method_result_to_json(m);
    ablations["shared_encoder"] = arms;
  }
  if (!s.batchnorm.empty()) {
    nlohmann::ordered_json arms;
    for (const auto& [arm, m] : s.batchnorm) arms[arm] = method_result_to_json(m);
    if (!s.feature_magnitude.empty()) {
      nlohmann::ordered_json mag;
      for (const auto& [arm, v] : s.feature_magnitude) mag[arm] = v;
      arms["feature_magnitude"] = mag;
    }
    ablations["batchnorm"] = arms;
  }
  j["ablations"] = ablations;
  j["failures"] = s.failures;
  if (s.pipeline_timing) {
    j["timing"] = {{"pipeline_wall_seconds", s.pipeline_timing->wall_seconds},
                   {"pipeline_cpu_seconds", s.pipeline_timing->cpu_seconds}};
  }
  return j;
}

SeedResult seed_result_from_json(const nlohmann::json& j) {
  SeedResult s;
  s.seed = j.at("seed").get<uint64_t>();
  if (j.contains("methods"))
    for (auto it = j.at("methods").begin(); it != j.at("methods").end(); ++it)
      s.methods[it.key()] = method_result_from_json(it.value());
  if (j.contains("ablations")) {
    const auto& ab = j.at("ablations");
    if (ab.contains("transfer_level"))
      for (auto it = ab.at("transfer_level").begin(); it != ab.at("transfer_level").end(); ++it)
        s.transfer_levels[std::stoi(it.key())] = method_result_from_json(it.value());
    if (ab.contains("shared_encoder"))
      for (auto it = ab.at("shared_encoder").begin(); it != ab.at("shared_encoder").end(); ++it)
        s.shared_encoder[it.key()] = method_result_from_json(it.value());
    if (ab.contains("batchnorm"))
      for (auto it = ab.at("batchnorm").begin(); it != ab.at("batchnorm").end(); ++it) {
        if (it.key() == "feature_magnitude") {
          for (auto m = it.value().begin(); m != it.value().end(); ++m)
            s.feature_magnitude[m.key()] = m.value().get<double>();
        } else {
          s.batchnorm[it.key()] = method_result_from_json(it.value());
        }
      }
  }
  if (j.contains("failures"))
    for (const auto& f : j.at("failures")) s.failures.push_back(f.get<std::string>());
  if (j.contains("timing")) {
    Timing t;
    t.wall_seconds = j.at("timing").at("pipeline_wall_seconds").get<double>();
    t.cpu_seconds = j.at("timing").at("pipeline_cpu_seconds").get<double>();
    s.pipeline_timing = t;
  }
  return s;
}

std::optional<double> seed_mean_primary(const RunResult& result, const std::string& method,
                                        const std::string& domain) {
  double total = 0.0;
  int n = 0;
  for (const auto& s : result.seeds) {
    auto it = s.methods.find(method);
    if (it == s.methods.end() || it->second.failed) continue;
    auto d = it->second.by_domain.find(domain);
    if (d == it->second.by_domain.end()) continue;
    total += d->second.primary();
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

}  // namespace atdt::pipeline
