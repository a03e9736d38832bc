#pragma once

#include <optional>
#include <string>
#include <vector>

#include "atdt/tensor/checkpoint.hpp"
#include "atdt/tensor/ops.hpp"
#include "atdt/tensor/param.hpp"

namespace atdt::nets {

// Named buffer (batch-norm running statistics) persisted in checkpoints.
struct BufferRef {
  std::string name;
  std::vector<double>* data;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int kernel, int stride, int dilation,
         Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Parameter*>& params);

  Parameter w, b;
  int stride = 1, dilation = 1, kernel = 3;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels);

  Tensor forward(const Tensor& x);
  void collect(std::vector<Parameter*>& params);
  void collect_buffers(std::vector<BufferRef>& bufs);

  Parameter gamma, beta;
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  bool training = true;

 private:
  std::string name_;
};

// conv [+ batch norm] [+ relu]
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, int in_ch, int out_ch, int kernel, int stride, int dilation,
            bool use_bn, bool relu_after, Rng& rng);

  Tensor forward(const Tensor& x);
  void set_training(bool training);
  void collect(std::vector<Parameter*>& params);
  void collect_buffers(std::vector<BufferRef>& bufs);

  Conv2d conv;
  std::optional<BatchNorm2d> bn;
  bool relu_after = true;
};

// Two 3x3 convs with an identity skip: relu(x + bn(conv2(relu(bn(conv1(x)))))).
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int channels, int dilation, bool use_bn, Rng& rng);

  Tensor forward(const Tensor& x);
  void set_training(bool training);
  void collect(std::vector<Parameter*>& params);
  void collect_buffers(std::vector<BufferRef>& bufs);

 private:
  ConvBlock conv1_;  // with relu
  ConvBlock conv2_;  // no relu; relu applied after the skip
};

// Checkpoint helpers shared by the network classes.
std::vector<CheckpointEntry> make_state(const std::vector<Parameter*>& params,
                                        const std::vector<BufferRef>& buffers);
void load_state(const std::vector<CheckpointEntry>& entries, const std::vector<Parameter*>& params,
                const std::vector<BufferRef>& buffers);

}  // namespace atdt::nets
