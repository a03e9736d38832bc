#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "atdt/common/error.hpp"
#include "atdt/nets/networks.hpp"
#include "atdt/tensor/checkpoint.hpp"
#include "testutil.hpp"

using namespace atdt;
using namespace atdt::nets;

namespace {

TaskNetwork make_net(int head, bool bn = true, uint64_t seed = 1, const std::string& name = "net") {
  TaskNetworkConfig cfg;
  cfg.name = name;
  cfg.head_channels = head;
  cfg.use_batchnorm = bn;
  cfg.seed = seed;
  return TaskNetwork(cfg);
}

}  // namespace

TEST_CASE("encoder feature shapes follow the stride/channel table") {
  TaskNetwork net = make_net(6);
  net.set_training(false);
  Rng rng(3);
  const Tensor x = Tensor::randn({2, 3, 64, 64}, rng, 1.0);
  CHECK(net.encode(x, 1).shape() == Shape{2, 16, 32, 32});
  CHECK(net.encode(x, 2).shape() == Shape{2, 32, 16, 16});
  CHECK(net.encode(x, 3).shape() == Shape{2, 64, 8, 8});
  CHECK(net.encode(x, 4).shape() == Shape{2, 64, 8, 8});
  CHECK(TaskNetwork::feature_shape(4, 2, 64, 64) == Shape{2, 64, 8, 8});
  CHECK(TaskNetwork::feature_shape(1, 1, 64, 64) == Shape{1, 16, 32, 32});
}

TEST_CASE("encoder rejects spatial sizes not divisible by 8") {
  TaskNetwork net = make_net(6);
  Rng rng(4);
  const Tensor x = Tensor::randn({1, 3, 60, 64}, rng, 1.0);
  CHECK_THROWS_AS(net.encode(x, 4), ContractViolation);
}

TEST_CASE("decoder heads restore full resolution with task-specific channels") {
  TaskNetwork seg = make_net(6, true, 10, "seg");
  TaskNetwork dep = make_net(1, true, 11, "dep");
  seg.set_training(false);
  dep.set_training(false);
  Rng rng(5);
  const Tensor x = Tensor::randn({1, 3, 64, 64}, rng, 1.0);
  CHECK(seg.forward(x).shape() == Shape{1, 6, 64, 64});
  CHECK(dep.forward(x).shape() == Shape{1, 1, 64, 64});
  const Tensor f = seg.encode(x, 4);
  CHECK(seg.decode(f, 4).shape() == Shape{1, 6, 64, 64});
}

TEST_CASE("decode(encode(x), L) equals forward(x) exactly for every level") {
  TaskNetwork net = make_net(6, true, 12);
  net.set_training(false);
  Rng rng(6);
  const Tensor x = Tensor::randn({1, 3, 64, 64}, rng, 1.0);
  NoGradGuard no_grad;
  const Tensor full = net.forward(x);
  for (int level = 1; level <= 4; ++level) {
    const Tensor composed = net.decode(net.encode(x, level), level);
    CHECK(composed.data() == full.data());
  }
}

TEST_CASE("eval-mode forward is bit-deterministic") {
  TaskNetwork net = make_net(1, true, 13);
  net.set_training(false);
  Rng rng(7);
  const Tensor x = Tensor::randn({2, 3, 64, 64}, rng, 1.0);
  NoGradGuard no_grad;
  CHECK(net.forward(x).data() == net.forward(x).data());
}

TEST_CASE("task network parameter count stays inside the desk-scale budget") {
  TaskNetwork net = make_net(6);
  CHECK(net.parameter_count() < 500000);
  // Depth and segmentation variants differ only in the head.
  TaskNetwork dep = make_net(1, true, 1, "net");
  auto seg_params = net.parameters();
  auto dep_params = dep.parameters();
  REQUIRE(seg_params.size() == dep_params.size());
  for (size_t i = 0; i + 2 < seg_params.size(); ++i)  // all but head w/b
    CHECK(seg_params[i]->value.shape() == dep_params[i]->value.shape());
}

TEST_CASE("disabling batch norm keeps the architecture otherwise identical") {
  TaskNetwork bn = make_net(6, true, 14);
  TaskNetwork plain = make_net(6, false, 14);
  int bn_convs = 0, plain_convs = 0;
  for (auto* p : bn.parameters()) bn_convs += p->name.ends_with(".conv.w") || p->name.ends_with("head.w");
  for (auto* p : plain.parameters())
    plain_convs += p->name.ends_with(".conv.w") || p->name.ends_with("head.w");
  CHECK(bn_convs == plain_convs);
  for (auto* p : plain.parameters()) CHECK(p->name.find(".bn.") == std::string::npos);
  Rng rng(8);
  const Tensor x = Tensor::randn({1, 3, 64, 64}, rng, 1.0);
  plain.set_training(false);
  CHECK(plain.forward(x).shape() == Shape{1, 6, 64, 64});
}

TEST_CASE("transfer net maps the declared feature shape and bottlenecks at 1/4") {
  TransferNetConfig cfg;
  cfg.channels = 64;
  cfg.seed = 2;
  TransferNet g(cfg);
  g.set_training(false);
  Rng rng(9);
  const Tensor f = Tensor::randn({1, 64, 8, 8}, rng, 1.0);
  CHECK(g.forward(f).shape() == Shape{1, 64, 8, 8});
  CHECK(TransferNet::bottleneck_spatial(8, 8) == std::pair{2, 2});
  CHECK(TransferNet::bottleneck_spatial(32, 32) == std::pair{8, 8});

  const Tensor wrong = Tensor::randn({1, 32, 8, 8}, rng, 1.0);
  CHECK_THROWS_AS(g.forward(wrong), ContractViolation);
}

TEST_CASE("transfer net gradient w.r.t. its input matches finite differences") {
  TransferNetConfig cfg;
  cfg.channels = 8;
  cfg.seed = 3;
  cfg.use_batchnorm = false;  // keep the FD probe independent of batch stats
  TransferNet g(cfg);
  Rng rng(10);
  Tensor f = Tensor::randn({1, 8, 4, 4}, rng, 1.0, true);
  const Tensor target = Tensor::randn({1, 8, 4, 4}, rng, 1.0);
  auto fwd = [&] {
    const Tensor out = g.forward(f);
    const Tensor diff = sub(out, target);
    return sum(mul(diff, diff));
  };
  const auto r = testutil::fd_compare(f, fwd, 1e-5, 1e-4, 32);
  CAPTURE(r.coord);
  CHECK_FALSE(r.failed);
}

TEST_CASE("multi-task network: two decoders share one encoder") {
  MultiTaskNetworkConfig cfg;
  cfg.head1_channels = 1;
  cfg.head2_channels = 6;
  cfg.seed = 4;
  MultiTaskNetwork net(cfg);
  net.set_training(false);
  Rng rng(11);
  const Tensor x = Tensor::randn({1, 3, 64, 64}, rng, 1.0);
  const auto out = net.forward(x);
  CHECK(out.task1.shape() == Shape{1, 1, 64, 64});
  CHECK(out.task2.shape() == Shape{1, 6, 64, 64});
}

TEST_CASE("checkpoint round-trip restores forward outputs bit-exactly") {
  testutil::TempDir tmp("netckpt");
  TaskNetwork net = make_net(6, true, 15);
  Rng rng(12);
  const Tensor x = Tensor::randn({1, 3, 64, 64}, rng, 1.0);
  // Give the running stats non-default values before saving.
  net.set_training(true);
  { const Tensor warm = net.forward(Tensor::randn({2, 3, 64, 64}, rng, 1.0)); }
  net.set_training(false);
  NoGradGuard no_grad;
  const Tensor before = net.forward(x);
  const std::string path = (tmp.path() / "net.ckpt").string();
  save_checkpoint(path, net.state());

  TaskNetwork other = make_net(6, true, 999);  // different init
  other.load(load_checkpoint(path));
  other.set_training(false);
  CHECK(other.forward(x).data() == before.data());
}
