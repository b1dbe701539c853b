#include "playprune/sparse_optimizer.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace playprune;
using namespace playprune::testing;

namespace {

const char *kNet = R"(input = 1x4x4
layer = conv filters=10 kernel=3 pad=1
layer = relu
layer = conv filters=4 kernel=3 pad=1
layer = relu
layer = dense units=3
)";

// All-zero images: conv1 kernels receive no data gradient at all, so only
// the penalty moves them.
DatasetSplit zero_images(std::size_t n, Rng &rng) {
  auto s = random_split(n, 1, 4, 4, 3, rng, SplitRole::Train);
  s.images.fill(0.0);
  return s;
}

} // namespace

TEST(GroupL1, SignRule) {
  EXPECT_EQ(group_l1_subgradient(0.7, 0.0), 0.0);
  EXPECT_EQ(group_l1_subgradient(-0.3, 0.0005), -0.0005);
  EXPECT_EQ(group_l1_subgradient(0.3, 0.0005), 0.0005);
  EXPECT_EQ(group_l1_subgradient(0.0, 0.0005), 0.0);
  EXPECT_THROW(group_l1_subgradient(0.1, -1e-9), Error);
}

TEST(GroupL1, TouchesOnlyUnimportantFilters) {
  auto m = model_from(kNet, 2);
  const auto p = partition_model(m, 30); // 3 of 10 in conv1, 1 of 4 in conv2
  m.zero_grad();
  add_group_l1_subgradient(m, p, 0.25);
  for (const auto &lp : p.layers) {
    const auto &w = m.layer(lp.layer).weight;
    const auto g = w.grad();
    const std::size_t row = w.size() / w.dim(0);
    for (auto j : lp.unimportant)
      for (std::size_t k = j * row; k < (j + 1) * row; ++k)
        EXPECT_EQ(g[k], w[k] > 0 ? 0.25 : (w[k] < 0 ? -0.25 : 0.0));
    for (auto j : lp.important)
      for (std::size_t k = j * row; k < (j + 1) * row; ++k)
        EXPECT_EQ(g[k], 0.0);
  }
  for (auto *b : {&m.layer(0).bias, &m.layer(4).weight})
    for (double g : b->grad())
      EXPECT_EQ(g, 0.0);
}

TEST(PenalizedEpoch, PurePenaltyShrinksLinearlyAndClipsAtZero) {
  auto m = model_from(kNet, 3);
  const double lr = 0.1, lambda_A = 0.05;
  const std::vector<double> starts{0.0123, -0.0123, 0.5, -0.5, 0.02, 0.0};
  auto &w = m.layer(0).weight;
  for (std::size_t j = 0; j < 10; ++j)
    for (std::size_t k = 0; k < 9; ++k)
      w[j * 9 + k] = (j + 1) * starts[k % starts.size()];
  Rng rng(4);
  const auto data = zero_images(64, rng); // 4 steps of 16
  SgdConfig cfg;
  cfg.lr = lr;
  cfg.momentum = 0.0;
  cfg.batch_size = 16;
  Sgd sgd(cfg);
  Partition p = partition_model(m, 50);
  const auto before = w;
  const auto stats = penalized_epoch(m, p, lambda_A, data, sgd, rng);
  ASSERT_EQ(stats.steps, 4u);
  const double shrink = 4 * lr * lambda_A;
  for (auto j : p.find(0)->unimportant)
    for (std::size_t k = j * 9; k < (j + 1) * 9; ++k) {
      const double w0 = before[k];
      const double expect = std::copysign(std::max(std::abs(w0) - shrink, 0.0), w0);
      EXPECT_NEAR(w[k], w0 == 0.0 ? 0.0 : expect, 1e-12) << "coefficient " << k;
    }
  for (auto j : p.find(0)->important)
    for (std::size_t k = j * 9; k < (j + 1) * 9; ++k)
      EXPECT_EQ(w[k], before[k]);
}

TEST(PenalizedEpoch, WithMomentumNeverGrowsOrFlips) {
  auto m = model_from(kNet, 5);
  Rng rng(6);
  const auto data = zero_images(128, rng);
  SgdConfig cfg;
  cfg.lr = 0.05;
  cfg.momentum = 0.9;
  cfg.batch_size = 8;
  Sgd sgd(cfg);
  const auto p = partition_model(m, 50);
  const auto before = m.layer(0).weight;
  penalized_epoch(m, p, 0.02, data, sgd, rng);
  const auto &w = m.layer(0).weight;
  for (auto j : p.find(0)->unimportant)
    for (std::size_t k = j * 9; k < (j + 1) * 9; ++k) {
      EXPECT_LE(std::abs(w[k]), std::abs(before[k]));
      EXPECT_GE(w[k] * before[k], 0.0);
    }
}

TEST(PenalizedEpoch, ZeroLambdaIsPlainTraining) {
  auto a = model_from(kNet, 7);
  auto b = a;
  Rng r1(8), r2(8);
  const auto data = random_split(100, 1, 4, 4, 3, r1, SplitRole::Train);
  r2 = r1;
  Sgd s1(SgdConfig{}), s2(SgdConfig{});
  const auto p = partition_model(a, 10);
  const auto st = penalized_epoch(a, p, 0.0, data, s1, r1);
  const auto plain = train_epoch(b, data, s2, r2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(st.mean_loss, plain.mean_loss);
}

TEST(PenalizedEpoch, LargeLambdaShrinksUnimportantMean) {
  auto m = model_from(kNet, 9);
  Rng rng(10);
  const auto data = random_split(64, 1, 4, 4, 3, rng, SplitRole::Train);
  Sgd sgd(SgdConfig{});
  const auto p = partition_model(m, 30);
  const auto st = penalized_epoch(m, p, 10.0, data, sgd, rng);
  for (const auto &l : st.layers) {
    EXPECT_LT(l.u_after.mean, l.u_before.mean);
    EXPECT_EQ(l.u_after.count, l.u_before.count);
  }
}

TEST(PenalizedEpoch, SeparatesUnimportantFromImportantOnTrainedToy) {
  auto cfg = campaign_from("toy.cfg");
  const auto ws = prepare_workspace(cfg);
  auto base = train_baseline(cfg, ws);
  Sgd sgd(cfg.optimizer);
  const auto p = partition_model(base.model, cfg.alpha);
  const auto st = penalized_epoch(base.model, p, cfg.lambda, ws.train, sgd, base.rng);
  for (const auto &l : st.layers)
    if (l.u_after.count)
      EXPECT_LT(l.u_after.max, l.i_after.min) << "layer " << l.layer;
}

TEST(PenalizedEpoch, NonFiniteLossRestoresEpochStart) {
  auto m = model_from(kNet, 11);
  Rng rng(12);
  auto data = random_split(40, 1, 4, 4, 3, rng, SplitRole::Train);
  data.images[16 * 30] = std::numeric_limits<double>::infinity();
  Sgd sgd(SgdConfig{});
  const auto start = m;
  const auto p = partition_model(m, 10);
  EXPECT_THROW(penalized_epoch(m, p, 0.001, data, sgd, rng), NumericalError);
  EXPECT_EQ(m, start);
}

TEST(PenalizedEpoch, RejectsBadLambdaAndStalePartition) {
  auto m = model_from(kNet, 13);
  Rng rng(14);
  const auto data = random_split(8, 1, 4, 4, 3, rng, SplitRole::Train);
  Sgd sgd(SgdConfig{});
  auto p = partition_model(m, 10);
  EXPECT_THROW(penalized_epoch(m, p, -1.0, data, sgd, rng), Error);
  EXPECT_THROW(penalized_epoch(m, p, std::nan(""), data, sgd, rng), Error);
  p.layers[0].important.pop_back();
  EXPECT_THROW(penalized_epoch(m, p, 0.1, data, sgd, rng), Error);
}
