#include "atdt/nets/networks.hpp"

#include "atdt/common/error.hpp"

namespace atdt::nets {
namespace {

void check_level(int level) {
  if (level < 1 || level > 4)
    throw ContractViolation("split level must be in 1..4, got " + std::to_string(level));
}

}  // namespace

Encoder::Encoder(const std::string& name, int in_channels, bool use_bn, Rng& rng) {
  int ch_in = in_channels;
  for (int s = 0; s < 4; ++s) {
    const int ch_out = kStageChannels[s];
    const int stride = (s < 3) ? 2 : 1;
    const int dilation = (s < 3) ? 1 : 2;
    const std::string stage = name + ".stage" + std::to_string(s + 1);
    down_[s] = ConvBlock(stage + ".down", ch_in, ch_out, 3, stride, dilation, use_bn, true, rng);
    res_[s] = ResidualBlock(stage + ".res", ch_out, dilation, use_bn, rng);
    ch_in = ch_out;
  }
  // The layer strides must compose to the documented table.
  int cumulative = 1;
  for (int s = 0; s < 4; ++s) {
    cumulative *= (s < 3) ? 2 : 1;
    if (cumulative != kStageStride[s])
      throw ContractViolation("encoder stride table violated at stage " + std::to_string(s + 1));
  }
}

Tensor Encoder::run_stage(int stage, const Tensor& x) {
  return res_[stage].forward(down_[stage].forward(x));
}

Tensor Encoder::forward_to(const Tensor& x, int level) {
  check_level(level);
  const Shape& s = x.shape();
  if (s.size() != 4) throw ContractViolation("encoder expects [N,C,H,W]");
  if (s[2] % 8 != 0 || s[3] % 8 != 0)
    throw ContractViolation("encoder input H,W must be divisible by 8, got " + shape_str(s));
  Tensor f = x;
  for (int stage = 0; stage < level; ++stage) f = run_stage(stage, f);
  return f;
}

Tensor Encoder::continue_from(const Tensor& f, int level) {
  check_level(level);
  Tensor y = f;
  for (int stage = level; stage < 4; ++stage) y = run_stage(stage, y);
  return y;
}

void Encoder::set_training(bool training) {
  for (int s = 0; s < 4; ++s) {
    down_[s].set_training(training);
    res_[s].set_training(training);
  }
}

void Encoder::collect(std::vector<Parameter*>& params) {
  for (int s = 0; s < 4; ++s) {
    down_[s].collect(params);
    res_[s].collect(params);
  }
}

void Encoder::collect_buffers(std::vector<BufferRef>& bufs) {
  for (int s = 0; s < 4; ++s) {
    down_[s].collect_buffers(bufs);
    res_[s].collect_buffers(bufs);
  }
}

Decoder::Decoder(const std::string& name, int head_channels, bool use_bn, Rng& rng) {
  int ch_in = kStageChannels[3];
  for (int i = 0; i < 3; ++i) {
    blocks_[i] = ConvBlock(name + ".block" + std::to_string(i + 1), ch_in, kDecoderWidths[i], 3, 1,
                           1, use_bn, true, rng);
    ch_in = kDecoderWidths[i];
  }
  head_ = Conv2d(name + ".head", ch_in, head_channels, 1, 1, 1, rng);
}

Tensor Decoder::forward(const Tensor& deepest) {
  Tensor y = deepest;
  for (int i = 0; i < 3; ++i) y = bilinear_upsample2x(blocks_[i].forward(y));
  return head_.forward(y);
}

void Decoder::set_training(bool training) {
  for (int i = 0; i < 3; ++i) blocks_[i].set_training(training);
}

void Decoder::collect(std::vector<Parameter*>& params) {
  for (int i = 0; i < 3; ++i) blocks_[i].collect(params);
  head_.collect(params);
}

void Decoder::collect_buffers(std::vector<BufferRef>& bufs) {
  for (int i = 0; i < 3; ++i) blocks_[i].collect_buffers(bufs);
}

TaskNetwork::TaskNetwork(const TaskNetworkConfig& config) : config_(config) {
  Rng rng(derive_seed(config.seed, "init." + config.name));
  encoder_ = Encoder(config.name + ".enc", config.in_channels, config.use_batchnorm, rng);
  decoder_ = Decoder(config.name + ".dec", config.head_channels, config.use_batchnorm, rng);
}

Tensor TaskNetwork::encode(const Tensor& x, int level) { return encoder_.forward_to(x, level); }

Tensor TaskNetwork::decode(const Tensor& f, int level) {
  check_level(level);
  const Shape& s = f.shape();
  if (s.size() != 4 || s[1] != kStageChannels[level - 1])
    throw ContractViolation("decode: feature shape " + shape_str(s) +
                            " does not match level " + std::to_string(level));
  return decoder_.forward(encoder_.continue_from(f, level));
}

void TaskNetwork::set_training(bool training) {
  encoder_.set_training(training);
  decoder_.set_training(training);
}

std::vector<Parameter*> TaskNetwork::parameters() {
  std::vector<Parameter*> params;
  encoder_.collect(params);
  decoder_.collect(params);
  return params;
}

std::vector<CheckpointEntry> TaskNetwork::state() {
  std::vector<BufferRef> bufs;
  encoder_.collect_buffers(bufs);
  decoder_.collect_buffers(bufs);
  return make_state(parameters(), bufs);
}

void TaskNetwork::load(const std::vector<CheckpointEntry>& entries) {
  std::vector<BufferRef> bufs;
  encoder_.collect_buffers(bufs);
  decoder_.collect_buffers(bufs);
  load_state(entries, parameters(), bufs);
}

int64_t TaskNetwork::parameter_count() {
  int64_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.numel();
  return n;
}

Shape TaskNetwork::feature_shape(int level, int n, int h, int w) {
  check_level(level);
  const int s = kStageStride[level - 1];
  return {n, kStageChannels[level - 1], h / s, w / s};
}

TransferNet::TransferNet(const TransferNetConfig& config) : config_(config) {
  Rng rng(derive_seed(config.seed, "init." + config.name));
  const int c = config.channels;
  const int mid = 2 * c;  // bottleneck width
  const bool bn = config.use_batchnorm;
  down1_ = ConvBlock(config.name + ".down1", c, mid, 3, 2, 1, bn, true, rng);
  down2_ = ConvBlock(config.name + ".down2", mid, mid, 3, 2, 1, bn, true, rng);
  mid_ = ConvBlock(config.name + ".mid", mid, mid, 3, 1, 1, bn, true, rng);
  up1_ = ConvBlock(config.name + ".up1", mid, mid, 3, 1, 1, bn, true, rng);
  out_ = Conv2d(config.name + ".out", mid, c, 3, 1, 1, rng);
}

Tensor TransferNet::forward(const Tensor& f) {
  const Shape& s = f.shape();
  if (s.size() != 4 || s[1] != config_.channels)
    throw ContractViolation("transfer: feature shape " + shape_str(s) + " does not match " +
                            std::to_string(config_.channels) + " channels");
  Tensor y = mid_.forward(down2_.forward(down1_.forward(f)));
  y = up1_.forward(bilinear_upsample2x(y));
  return out_.forward(bilinear_upsample2x(y));
}

void TransferNet::set_training(bool training) {
  down1_.set_training(training);
  down2_.set_training(training);
  mid_.set_training(training);
  up1_.set_training(training);
}

std::vector<Parameter*> TransferNet::parameters() {
  std::vector<Parameter*> params;
  down1_.collect(params);
  down2_.collect(params);
  mid_.collect(params);
  up1_.collect(params);
  out_.collect(params);
  return params;
}

std::vector<CheckpointEntry> TransferNet::state() {
  std::vector<BufferRef> bufs;
  down1_.collect_buffers(bufs);
  down2_.collect_buffers(bufs);
  mid_.collect_buffers(bufs);
  up1_.collect_buffers(bufs);
  return make_state(parameters(), bufs);
}

void TransferNet::load(const std::vector<CheckpointEntry>& entries) {
  std::vector<BufferRef> bufs;
  down1_.collect_buffers(bufs);
  down2_.collect_buffers(bufs);
  mid_.collect_buffers(bufs);
  up1_.collect_buffers(bufs);
  load_state(entries, parameters(), bufs);
}

std::pair<int, int> TransferNet::bottleneck_spatial(int h, int w) {
  auto down = [](int v) { return (v + 2 * 1 - 2 - 1) / 2 + 1; };  // k3 s2 same-pad
  return {down(down(h)), down(down(w))};
}

MultiTaskNetwork::MultiTaskNetwork(const MultiTaskNetworkConfig& config) : config_(config) {
  Rng rng(derive_seed(config.seed, "init." + config.name));
  encoder_ = Encoder(config.name + ".enc", config.in_channels, config.use_batchnorm, rng);
  decoder1_ = Decoder(config.name + ".dec1", config.head1_channels, config.use_batchnorm, rng);
  decoder2_ = Decoder(config.name + ".dec2", config.head2_channels, config.use_batchnorm, rng);
}

MultiTaskNetwork::Outputs MultiTaskNetwork::forward(const Tensor& x) {
  const Tensor deepest = encoder_.forward_to(x, 4);
  return {decoder1_.forward(deepest), decoder2_.forward(deepest)};
}

void MultiTaskNetwork::set_training(bool training) {
  encoder_.set_training(training);
  decoder1_.set_training(training);
  decoder2_.set_training(training);
}

std::vector<Parameter*> MultiTaskNetwork::parameters() {
  std::vector<Parameter*> params;
  encoder_.collect(params);
  decoder1_.collect(params);
  decoder2_.collect(params);
  return params;
}

std::vector<CheckpointEntry> MultiTaskNetwork::state() {
  std::vector<BufferRef> bufs;
  encoder_.collect_buffers(bufs);
  decoder1_.collect_buffers(bufs);
  decoder2_.collect_buffers(bufs);
  return make_state(parameters(), bufs);
}

void MultiTaskNetwork::load(const std::vector<CheckpointEntry>& entries) {
  std::vector<BufferRef> bufs;
  encoder_.collect_buffers(bufs);
  decoder1_.collect_buffers(bufs);
  decoder2_.collect_buffers(bufs);
  load_state(entries, parameters(), bufs);
}

}  // namespace atdt::nets
