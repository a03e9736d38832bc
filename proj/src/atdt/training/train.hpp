#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "atdt/nets/networks.hpp"
#include "atdt/scenegen/scenegen.hpp"
#include "atdt/tensor/adam.hpp"

namespace atdt::training {

enum class Task { kSegmentation, kDepth };

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 1e-3;
  uint64_t seed = 0;
  int eval_every = 500;

  void validate() const;
};

struct ValSnapshot {
  // Task-appropriate validation metric: mIoU for segmentation (higher is
  // better), Abs Rel for depth (lower is better). One entry per domain seen.
  std::optional<double> domain_a;
  std::optional<double> domain_b;
};

struct LossRecord {
  int step = 0;  // strictly increasing within a run
  double train_loss = 0.0;
  ValSnapshot val;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_record;
  // Rolling checkpoint written at each eval point; on a non-finite abort the
  // network is restored from it and TrainingAborted names it.
  std::string checkpoint_path;
};

// Batch assembly helpers (samples share one resolution).
Tensor make_image_batch(const std::vector<scenegen::Sample>& samples,
                        const std::vector<int>& indices);
Tensor make_label_batch(const std::vector<scenegen::Sample>& samples,
                        const std::vector<int>& indices);
// Depth targets normalized to [0,1] by kDepthMax.
Tensor make_depth_batch(const std::vector<scenegen::Sample>& samples,
                        const std::vector<int>& indices);
Tensor make_mask_batch(const std::vector<scenegen::Sample>& samples,
                       const std::vector<int>& indices);

// Validation metrics over a whole split (eval mode, no tape).
double eval_task_metric(nets::TaskNetwork& net, Task task,
                        const std::vector<scenegen::Sample>& split, int eval_batch = 8);

// Trains `net` on one or two domains. With two domains batches are drawn
// 50/50 (batch_size must be even). Draws, init and records are fully
// determined by cfg.seed and the datasets.
std::vector<LossRecord> train_task_network(nets::TaskNetwork& net, Task task,
                                           const std::vector<scenegen::Sample>& train_a,
                                           const std::vector<scenegen::Sample>* train_b,
                                           const std::vector<scenegen::Sample>& val_a,
                                           const std::vector<scenegen::Sample>* val_b,
                                           const TrainConfig& cfg, const TrainHooks& hooks = {});

// Joint training of the multi-task comparator: task1 supervised on A and B,
// task2 on A only, losses weighted 1:1.
std::vector<LossRecord> train_multitask(nets::MultiTaskNetwork& net, Task task1, Task task2,
                                        const std::vector<scenegen::Sample>& train_a,
                                        const std::vector<scenegen::Sample>& train_b,
                                        const TrainConfig& cfg, const TrainHooks& hooks = {});

// Feature pairs (E1(x), E2(x)) precomputed in eval mode with no tape; the
// targets are detached by construction.
struct FeaturePairs {
  std::vector<Tensor> src, dst;
};
FeaturePairs precompute_feature_pairs(nets::TaskNetwork& e1_net, nets::TaskNetwork& e2_net,
                                      int level, const std::vector<scenegen::Sample>& samples,
                                      int batch = 8);

// Trains the transfer network on domain-A feature pairs; the encoders are
// run frozen in eval mode and never receive gradients. Validation reports
// the reconstruction loss on val_a.
std::vector<LossRecord> train_transfer(nets::TransferNet& g, nets::TaskNetwork& e1_net,
                                       nets::TaskNetwork& e2_net, int level,
                                       const std::vector<scenegen::Sample>& train_a,
                                       const std::vector<scenegen::Sample>& val_a,
                                       const TrainConfig& cfg, const TrainHooks& hooks = {});

// CSV streaming ("component,step,train_loss,val_a,val_b").
void append_records_csv(const std::string& path, const std::string& component,
                        const std::vector<LossRecord>& records);

}  // namespace atdt::training
