#pragma once

#include <array>
#include <memory>

#include "atdt/nets/layers.hpp"

namespace atdt::nets {

// Cumulative output strides and channel widths of the four encoder stages.
// Stage 4 keeps stride 8 and dilates instead of downsampling.
constexpr std::array<int, 4> kStageStride = {2, 4, 8, 8};
constexpr std::array<int, 4> kStageChannels = {16, 32, 64, 64};
constexpr std::array<int, 3> kDecoderWidths = {64, 32, 16};

// Four residual stages: each is a downsampling (or dilated) conv block
// followed by a residual block.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const std::string& name, int in_channels, bool use_bn, Rng& rng);

  // Stages 1..level (level in 1..4). Input H,W must be divisible by 8.
  Tensor forward_to(const Tensor& x, int level);
  // Stages level+1..4 on a feature produced at `level`.
  Tensor continue_from(const Tensor& f, int level);

  void set_training(bool training);
  void collect(std::vector<Parameter*>& params);
  void collect_buffers(std::vector<BufferRef>& bufs);

 private:
  Tensor run_stage(int stage, const Tensor& x);
  ConvBlock down_[4];
  ResidualBlock res_[4];
};

// Alternating conv + bilinear x2 blocks back to full resolution, then a 1x1
// prediction head. Convolutions run at the coarser scale of each pair.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::string& name, int head_channels, bool use_bn, Rng& rng);

  Tensor forward(const Tensor& deepest);

  void set_training(bool training);
  void collect(std::vector<Parameter*>& params);
  void collect_buffers(std::vector<BufferRef>& bufs);

 private:
  ConvBlock blocks_[3];
  Conv2d head_;
};

struct TaskNetworkConfig {
  std::string name = "net";
  int in_channels = 3;
  int head_channels = 1;  // K for segmentation, 1 for depth
  bool use_batchnorm = true;
  uint64_t seed = 0;
};

// N = D(E(x)) with a selectable split level; decode(encode(x, L), L) equals
// forward(x) exactly for every L.
class TaskNetwork {
 public:
  explicit TaskNetwork(const TaskNetworkConfig& config);

  Tensor encode(const Tensor& x, int level);
  Tensor decode(const Tensor& f, int level);
  Tensor forward(const Tensor& x) { return decode(encode(x, 4), 4); }

  void set_training(bool training);
  std::vector<Parameter*> parameters();
  std::vector<CheckpointEntry> state();
  void load(const std::vector<CheckpointEntry>& entries);
  int64_t parameter_count();

  const TaskNetworkConfig& config() const { return config_; }

  // [N, channels, H/stride, W/stride] for stage `level` on [N,.,H,W] input.
  static Shape feature_shape(int level, int n, int h, int w);

 private:
  TaskNetworkConfig config_;
  Encoder encoder_;
  Decoder decoder_;
};

struct TransferNetConfig {
  std::string name = "g";
  int channels = 64;  // encoder width at the chosen split level
  bool use_batchnorm = true;
  uint64_t seed = 0;
};

// Feature-space mapping: two stride-2 conv blocks down to 1/4 resolution,
// a middle block, and two upsample+conv blocks back; bottleneck width is
// twice the feature width. The final conv is linear.
class TransferNet {
 public:
  explicit TransferNet(const TransferNetConfig& config);

  Tensor forward(const Tensor& f);

  void set_training(bool training);
  std::vector<Parameter*> parameters();
  std::vector<CheckpointEntry> state();
  void load(const std::vector<CheckpointEntry>& entries);

  const TransferNetConfig& config() const { return config_; }

  // Spatial size at the bottleneck for an h x w feature input.
  static std::pair<int, int> bottleneck_spatial(int h, int w);

 private:
  TransferNetConfig config_;
  ConvBlock down1_, down2_, mid_, up1_;
  Conv2d out_;
};

struct MultiTaskNetworkConfig {
  std::string name = "mt";
  int in_channels = 3;
  int head1_channels = 1;
  int head2_channels = 1;
  bool use_batchnorm = true;
  uint64_t seed = 0;
};

// One shared encoder, two task decoders consuming the same deepest feature.
class MultiTaskNetwork {
 public:
  explicit MultiTaskNetwork(const MultiTaskNetworkConfig& config);

  struct Outputs {
    Tensor task1, task2;
  };
  Outputs forward(const Tensor& x);

  void set_training(bool training);
  std::vector<Parameter*> parameters();
  std::vector<CheckpointEntry> state();
  void load(const std::vector<CheckpointEntry>& entries);

 private:
  MultiTaskNetworkConfig config_;
  Encoder encoder_;
  Decoder decoder1_, decoder2_;
};

}  // namespace atdt::nets
