#include "atdt/nets/layers.hpp"

#include <cmath>
#include <unordered_map>

#include "atdt/common/error.hpp"

namespace atdt::nets {

Conv2d::Conv2d(const std::string& name, int in_ch, int out_ch, int kernel, int stride,
               int dilation, Rng& rng)
    : stride(stride), dilation(dilation), kernel(kernel) {
  const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
  w.value = Tensor::randn({out_ch, in_ch, kernel, kernel}, rng, std::sqrt(2.0 / fan_in), true);
  w.name = name + ".w";
  b.value = Tensor::zeros({out_ch}, true);
  b.name = name + ".b";
}

Tensor Conv2d::forward(const Tensor& x) const {
  return conv2d(x, w.value, b.value, stride, dilation, same_padding(kernel, dilation));
}

void Conv2d::collect(std::vector<Parameter*>& params) {
  params.push_back(&w);
  params.push_back(&b);
}

BatchNorm2d::BatchNorm2d(const std::string& name, int channels) : name_(name) {
  gamma.value = Tensor::full({channels}, 1.0, true);
  gamma.name = name + ".gamma";
  beta.value = Tensor::zeros({channels}, true);
  beta.name = name + ".beta";
  running_mean.assign(channels, 0.0);
  running_var.assign(channels, 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  return batch_norm2d(x, gamma.value, beta.value, running_mean, running_var, momentum, eps,
                      training);
}

void BatchNorm2d::collect(std::vector<Parameter*>& params) {
  params.push_back(&gamma);
  params.push_back(&beta);
}

void BatchNorm2d::collect_buffers(std::vector<BufferRef>& bufs) {
  bufs.push_back({name_ + ".running_mean", &running_mean});
  bufs.push_back({name_ + ".running_var", &running_var});
}

ConvBlock::ConvBlock(const std::string& name, int in_ch, int out_ch, int kernel, int stride,
                     int dilation, bool use_bn, bool relu_after, Rng& rng)
    : conv(name + ".conv", in_ch, out_ch, kernel, stride, dilation, rng), relu_after(relu_after) {
  if (use_bn) bn.emplace(name + ".bn", out_ch);
}

Tensor ConvBlock::forward(const Tensor& x) {
  Tensor y = conv.forward(x);
  if (bn) y = bn->forward(y);
  return relu_after ? relu(y) : y;
}

void ConvBlock::set_training(bool training) {
  if (bn) bn->training = training;
}

void ConvBlock::collect(std::vector<Parameter*>& params) {
  conv.collect(params);
  if (bn) bn->collect(params);
}

void ConvBlock::collect_buffers(std::vector<BufferRef>& bufs) {
  if (bn) bn->collect_buffers(bufs);
}

ResidualBlock::ResidualBlock(const std::string& name, int channels, int dilation, bool use_bn,
                             Rng& rng)
    : conv1_(name + ".conv1", channels, channels, 3, 1, dilation, use_bn, true, rng),
      conv2_(name + ".conv2", channels, channels, 3, 1, dilation, use_bn, false, rng) {}

Tensor ResidualBlock::forward(const Tensor& x) {
  return relu(add(x, conv2_.forward(conv1_.forward(x))));
}

void ResidualBlock::set_training(bool training) {
  conv1_.set_training(training);
  conv2_.set_training(training);
}

void ResidualBlock::collect(std::vector<Parameter*>& params) {
  conv1_.collect(params);
  conv2_.collect(params);
}

void ResidualBlock::collect_buffers(std::vector<BufferRef>& bufs) {
  conv1_.collect_buffers(bufs);
  conv2_.collect_buffers(bufs);
}

std::vector<CheckpointEntry> make_state(const std::vector<Parameter*>& params,
                                        const std::vector<BufferRef>& buffers) {
  std::vector<CheckpointEntry> entries;
  entries.reserve(params.size() + buffers.size());
  for (const Parameter* p : params)
    entries.push_back({p->name, p->value.shape(), p->value.data()});
  for (const BufferRef& b : buffers)
    entries.push_back({b.name, {static_cast<int>(b.data->size())}, *b.data});
  return entries;
}

void load_state(const std::vector<CheckpointEntry>& entries, const std::vector<Parameter*>& params,
                const std::vector<BufferRef>& buffers) {
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  size_t used = 0;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw IoError("checkpoint missing parameter '" + p->name + "'");
    const CheckpointEntry& e = *it->second;
    if (e.shape != p->value.shape())
      throw IoError("checkpoint shape mismatch for '" + p->name + "': " + shape_str(e.shape) +
                    " vs " + shape_str(p->value.shape()));
    p->value.mutable_data() = e.data;
    ++used;
  }
  for (const BufferRef& b : buffers) {
    auto it = by_name.find(b.name);
    if (it == by_name.end()) throw IoError("checkpoint missing buffer '" + b.name + "'");
    if (it->second->data.size() != b.data->size())
      throw IoError("checkpoint size mismatch for '" + b.name + "'");
    *b.data = it->second->data;
    ++used;
  }
  if (used != entries.size())
    throw IoError("checkpoint contains entries unknown to this network");
}

}  // namespace atdt::nets
