#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "atdt/metrics/metrics.hpp"
#include "atdt/scenegen/dataset.hpp"
#include "atdt/training/train.hpp"

namespace atdt::pipeline {

enum class Direction { kDepToSem, kSemToDep };
const char* direction_name(Direction d);
Direction direction_from_name(const std::string& name);

// Method and ablation identifiers accepted in ExperimentPlan::methods.
extern const std::vector<std::string> kKnownMethods;

struct ExperimentPlan {
  std::string name = "run";
  uint64_t master_seed = 20240101;
  scenegen::DatasetConfig dataset;
  Direction direction = Direction::kDepToSem;
  int split_level = 4;
  bool shared_encoder = true;
  bool use_batchnorm = true;
  bool proxy_labels_on_b = false;
  std::vector<uint64_t> seeds;
  training::TrainConfig train_n1;
  training::TrainConfig train_n2;
  training::TrainConfig train_g;
  std::set<std::string> methods = {"atdt", "baseline"};
  int jobs = 1;

  training::Task task1() const;
  training::Task task2() const;
  void validate() const;
};

// Metrics of one predictor on one domain's test split; exactly one of the
// two members is set, matching the direction's target task.
struct EvalResult {
  std::optional<metrics::SegMetrics> seg;
  std::optional<metrics::DepthMetrics> depth;
  // Seed-mean comparisons use this scalar: mIoU or Abs Rel.
  double primary() const;
};

struct MethodResult {
  std::map<std::string, EvalResult> by_domain;  // keys "A", "B"
  bool failed = false;
  std::string error;
};

struct Timing {
  double wall_seconds = 0.0;
  double cpu_seconds = 0.0;
};

struct SeedResult {
  uint64_t seed = 0;
  std::map<std::string, MethodResult> methods;          // atdt/baseline/oracle/multitask
  std::map<int, MethodResult> transfer_levels;          // ablate_level
  std::map<std::string, MethodResult> shared_encoder;   // "shared"/"nonshared"
  std::map<std::string, MethodResult> batchnorm;        // "with"/"without"
  std::map<std::string, double> feature_magnitude;      // "with"/"without"
  std::vector<std::string> failures;
  std::optional<Timing> pipeline_timing;  // steps 1-4 (atdt only)
};

struct RunResult {
  ExperimentPlan plan;
  std::vector<SeedResult> seeds;
  std::string run_dir;  // <out_root>/<name>
};

// Executes every requested method/ablation for every seed, with seeds
// dispatched over `plan.jobs` worker threads. Persists, per seed:
//   <out_root>/<name>/<seed>/{manifest.json, metrics.json, curves.csv,
//                             checkpoints/, samples/}
// A sub-training abort becomes a failure record; other methods continue.
RunResult run_experiment(const ExperimentPlan& plan, const std::string& out_root);

// Spec-level convenience wrappers running a single method.
RunResult run_atdt(ExperimentPlan plan, const std::string& out_root);
RunResult run_baseline(ExperimentPlan plan, const std::string& out_root);
RunResult run_oracle(ExperimentPlan plan, const std::string& out_root);
RunResult run_multitask_comparator(ExperimentPlan plan, const std::string& out_root);
RunResult ablate_transfer_level(ExperimentPlan plan, const std::string& out_root);
RunResult ablate_shared_encoder(ExperimentPlan plan, const std::string& out_root);
RunResult ablate_batchnorm(ExperimentPlan plan, const std::string& out_root);

// Seed-mean of a method's primary metric on one domain over the seeds where
// it succeeded. Returns nullopt if no seed succeeded.
std::optional<double> seed_mean_primary(const RunResult& result, const std::string& method,
                                        const std::string& domain);

}  // namespace atdt::pipeline
