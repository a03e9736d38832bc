#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "atdt/common/error.hpp"
#include "atdt/scenegen/dataset.hpp"
#include "atdt/training/losses.hpp"
#include "atdt/training/train.hpp"
#include "testutil.hpp"

using namespace atdt;
using namespace atdt::training;

namespace {

scenegen::DatasetConfig tiny_dataset_config() {
  scenegen::DatasetConfig cfg;
  cfg.n_train = 16;
  cfg.n_val = 6;
  cfg.n_test = 4;
  cfg.height = 32;
  cfg.width = 32;
  return cfg;
}

nets::TaskNetwork make_net(int head, uint64_t seed) {
  nets::TaskNetworkConfig cfg;
  cfg.name = "net";
  cfg.head_channels = head;
  cfg.seed = seed;
  return nets::TaskNetwork(cfg);
}

std::vector<double> snapshot(nets::TaskNetwork& net) {
  std::vector<double> all;
  for (auto* p : net.parameters())
    all.insert(all.end(), p->value.data().begin(), p->value.data().end());
  return all;
}

}  // namespace

TEST_CASE("segmentation_loss: uniform logits give ln K") {
  const Tensor logits = Tensor::full({1, 6, 4, 4}, 0.3);
  const Tensor labels = Tensor::zeros({1, 1, 4, 4});
  CHECK(segmentation_loss(logits, labels).item() == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("segmentation_loss: confident correct logits drive the loss to zero") {
  std::vector<double> lv(1 * 3 * 2 * 2, 0.0);
  for (int i = 0; i < 4; ++i) lv[0 * 4 + i] = 30.0;  // class 0 everywhere, margin 30
  const Tensor logits = Tensor::from_vector({1, 3, 2, 2}, std::move(lv));
  const Tensor labels = Tensor::zeros({1, 1, 2, 2});
  CHECK(segmentation_loss(logits, labels).item() < 1e-10);
}

TEST_CASE("segmentation_loss: random 2x2 case matches a hand oracle") {
  Rng rng(1);
  std::vector<double> lv(1 * 3 * 2 * 2);
  for (auto& v : lv) v = rng.gaussian();
  std::vector<double> lbl = {0, 2, 1, 0};
  const Tensor logits = Tensor::from_vector({1, 3, 2, 2}, lv);
  const Tensor labels = Tensor::from_vector({1, 1, 2, 2}, lbl);

  double want = 0.0;
  for (int px = 0; px < 4; ++px) {
    double denom = 0.0;
    for (int c = 0; c < 3; ++c) denom += std::exp(lv[c * 4 + px]);
    want += -std::log(std::exp(lv[static_cast<int>(lbl[px]) * 4 + px]) / denom);
  }
  want /= 4.0;
  CHECK(segmentation_loss(logits, labels).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("segmentation_loss rejects out-of-range labels") {
  const Tensor logits = Tensor::full({1, 3, 2, 2}, 0.0);
  const Tensor labels = Tensor::full({1, 1, 2, 2}, 3.0);
  CHECK_THROWS_AS(segmentation_loss(logits, labels), ContractViolation);
}

TEST_CASE("depth_loss: identity, constant offset, and mask semantics") {
  Rng rng(2);
  const Tensor target = Tensor::randn({1, 1, 4, 4}, rng, 1.0);
  CHECK(depth_loss(target, target, nullptr).item() == 0.0);

  Tensor shifted = Tensor::from_vector({1, 1, 4, 4}, target.data());
  for (auto& v : shifted.mutable_data()) v += 0.1;
  CHECK(depth_loss(shifted, target, nullptr).item() == doctest::Approx(0.1).epsilon(1e-12));

  // Corrupt half the pixels, mask them out: the loss must not move.
  Tensor corrupted = Tensor::from_vector({1, 1, 4, 4}, shifted.data());
  std::vector<double> mask(16, 1.0);
  for (int i = 0; i < 8; ++i) {
    corrupted.mutable_data()[i] += 100.0;
    mask[i] = 0.0;
  }
  const Tensor mask_t = Tensor::from_vector({1, 1, 4, 4}, mask);
  CHECK(depth_loss(corrupted, target, &mask_t).item() == doctest::Approx(0.1).epsilon(1e-12));

  const Tensor zero_mask = Tensor::zeros({1, 1, 4, 4});
  CHECK_THROWS_AS(depth_loss(shifted, target, &zero_mask), ContractViolation);
}

TEST_CASE("transfer_loss: identity, offset, gradient, and detach contract") {
  Rng rng(3);
  const Tensor target = Tensor::randn({2, 4, 3, 3}, rng, 1.0);
  CHECK(transfer_loss(target.detach(), target).item() == 0.0);

  Tensor off = Tensor::from_vector(target.shape(), target.data(), true);
  for (auto& v : off.mutable_data()) v += 0.5;
  const Tensor loss = transfer_loss(off, target);
  CHECK(loss.item() == doctest::Approx(0.25).epsilon(1e-12));  // c^2 under MSE

  loss.backward();
  const double n = static_cast<double>(off.numel());
  for (size_t i = 0; i < off.data().size(); ++i)
    CHECK(off.grad()[i] ==
          doctest::Approx(2.0 * (off.data()[i] - target.data()[i]) / n).epsilon(1e-12));

  Tensor live = Tensor::randn(target.shape(), rng, 1.0, true);
  CHECK_THROWS_AS(transfer_loss(off, live), ContractViolation);
}

TEST_CASE("train_task_network: steps=0 returns the initialized net unchanged") {
  const auto data = scenegen::build_dataset(tiny_dataset_config(), 1);
  nets::TaskNetwork net = make_net(6, 50);
  const auto before = snapshot(net);
  TrainConfig cfg;
  cfg.steps = 0;
  const auto records =
      train_task_network(net, Task::kSegmentation, data.a.train, nullptr, data.a.val, nullptr, cfg);
  CHECK(records.empty());
  CHECK(snapshot(net) == before);
}

TEST_CASE("train_task_network: short segmentation run reduces the loss and is seed-stable") {
  const auto data = scenegen::build_dataset(tiny_dataset_config(), 2);
  TrainConfig cfg;
  cfg.steps = 60;
  cfg.batch_size = 4;
  cfg.eval_every = 30;
  cfg.seed = 9;

  nets::TaskNetwork net1 = make_net(6, 51);
  const auto rec1 = train_task_network(net1, Task::kSegmentation, data.a.train, nullptr,
                                       data.a.val, nullptr, cfg);
  REQUIRE(rec1.size() == 60);
  // Median of the last 10 records vs the first 10.
  auto median10 = [&](bool tail) {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) v.push_back(rec1[tail ? rec1.size() - 1 - i : i].train_loss);
    std::sort(v.begin(), v.end());
    return v[5];
  };
  CHECK(median10(true) < median10(false));
  CHECK(rec1.back().val.domain_a.has_value());

  nets::TaskNetwork net2 = make_net(6, 51);
  const auto rec2 = train_task_network(net2, Task::kSegmentation, data.a.train, nullptr,
                                       data.a.val, nullptr, cfg);
  for (size_t i = 0; i < rec1.size(); ++i) {
    CHECK(rec1[i].train_loss == rec2[i].train_loss);
  }
  CHECK(snapshot(net1) == snapshot(net2));
}

TEST_CASE("train_task_network: dual-domain run draws 50/50 and tracks both vals") {
  const auto data = scenegen::build_dataset(tiny_dataset_config(), 3);
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch_size = 4;
  cfg.eval_every = 20;
  nets::TaskNetwork net = make_net(1, 52);
  const auto rec = train_task_network(net, Task::kDepth, data.a.train, &data.b.train, data.a.val,
                                      &data.b.val, cfg);
  CHECK(rec.back().val.domain_a.has_value());
  CHECK(rec.back().val.domain_b.has_value());

  TrainConfig odd = cfg;
  odd.batch_size = 3;
  nets::TaskNetwork net2 = make_net(1, 53);
  CHECK_THROWS_AS(train_task_network(net2, Task::kDepth, data.a.train, &data.b.train, data.a.val,
                                     &data.b.val, odd),
                  ConfigError);
}

TEST_CASE("train_task_network: NaN loss aborts and restores the rolling checkpoint") {
  testutil::TempDir tmp("abort");
  const auto data = scenegen::build_dataset(tiny_dataset_config(), 4);
  TrainConfig cfg;
  cfg.steps = 40;
  cfg.batch_size = 4;
  cfg.eval_every = 10;  // write a checkpoint at step 10
  cfg.lr = 1e28;        // guaranteed blow-up
  nets::TaskNetwork net = make_net(1, 54);
  TrainHooks hooks;
  hooks.checkpoint_path = (tmp.path() / "last.ckpt").string();
  try {
    train_task_network(net, Task::kDepth, data.a.train, nullptr, data.a.val, nullptr, cfg, hooks);
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    if (!e.last_good_checkpoint().empty()) {
      CHECK(std::filesystem::exists(e.last_good_checkpoint()));
      // The net was restored from it: reloading gives identical parameters.
      nets::TaskNetwork fresh = make_net(1, 999);
      fresh.load(load_checkpoint(e.last_good_checkpoint()));
      CHECK(snapshot(fresh) == snapshot(net));
    }
  }
}

TEST_CASE("train_transfer: freeze contract and self-transfer convergence") {
  const auto data = scenegen::build_dataset(tiny_dataset_config(), 5);
  nets::TaskNetwork n1 = make_net(1, 55);
  // Give the encoders some structure first.
  TrainConfig warm;
  warm.steps = 30;
  warm.batch_size = 4;
  warm.eval_every = 30;
  train_task_network(n1, Task::kDepth, data.a.train, nullptr, data.a.val, nullptr, warm);

  const auto n1_before = snapshot(n1);

  nets::TransferNetConfig gc;
  gc.channels = nets::kStageChannels[3];
  gc.seed = 56;
  nets::TransferNet g(gc);

  TrainConfig cfg;
  cfg.steps = 150;
  cfg.batch_size = 4;
  cfg.eval_every = 50;
  cfg.lr = 3e-3;
  // E1 == E2: the transfer net must approach identity behavior.
  const auto rec = train_transfer(g, n1, n1, 4, data.a.train, data.a.val, cfg);
  REQUIRE_FALSE(rec.empty());
  CHECK(snapshot(n1) == n1_before);  // encoders bit-identical

  const double first = rec.front().train_loss;
  const double final_val = rec.back().val.domain_a.value();
  CHECK(final_val < 0.05 * first);
}

TEST_CASE("multitask training runs both heads and stays finite") {
  const auto data = scenegen::build_dataset(tiny_dataset_config(), 6);
  nets::MultiTaskNetworkConfig cfg;
  cfg.head1_channels = 1;
  cfg.head2_channels = 6;
  cfg.seed = 57;
  nets::MultiTaskNetwork net(cfg);
  TrainConfig tc;
  tc.steps = 20;
  tc.batch_size = 4;
  tc.eval_every = 20;
  const auto rec =
      train_multitask(net, Task::kDepth, Task::kSegmentation, data.a.train, data.b.train, tc);
  REQUIRE(rec.size() == 20);
  for (const auto& r : rec) CHECK(std::isfinite(r.train_loss));
  CHECK(rec.back().train_loss < rec.front().train_loss);
}

TEST_CASE("loss records stream to csv with the documented header") {
  testutil::TempDir tmp("csv");
  std::vector<LossRecord> records(3);
  for (int i = 0; i < 3; ++i) {
    records[i].step = i + 1;
    records[i].train_loss = 1.0 / (i + 1);
  }
  records[2].val.domain_a = 0.5;
  const std::string path = (tmp.path() / "curves.csv").string();
  append_records_csv(path, "n1", records);
  append_records_csv(path, "n2", records);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "component,step,train_loss,val_a,val_b");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 6);
}
