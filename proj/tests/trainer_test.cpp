// Copyright 2026 The mlpbank Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "test_util.hpp"

using namespace mlpbank;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

using Specs = std::vector<ModelSpec>;

Specs mixed_specs() {
  return {{1, Activation::Identity}, {3, Activation::Sigmoid}, {5, Activation::Tanh}, {8, Activation::ReLU},
          {2, Activation::ELU},      {7, Activation::SELU},    {4, Activation::GELU}, {6, Activation::Mish},
          {9, Activation::LeakyReLU}, {3, Activation::Hardshrink}, {5, Activation::Mish}, {5, Activation::Mish}};
}

template <typename T>
void expect_banks_equal(const FusedBank<T>& a, const FusedBank<T>& b) {
  EXPECT_EQ(a.W1, b.W1);
  EXPECT_EQ(a.W2, b.W2);
  EXPECT_EQ(a.b1, b.b1);
  EXPECT_EQ(a.b2, b.b2);
}

// N whole-bank steps against N tiled steps on the same batches.
template <typename T>
void check_stepper(const Specs& specs, bool biases, LossKind kind, std::size_t batch, std::size_t tile_hidden,
                   std::uint64_t seed) {
  const std::size_t in = 7;
  const std::size_t out = 3;
  auto whole = build_bank<T>(specs, in, out, {seed, biases});
  auto tiled = whole;
  FusedStepper<T> stepper(tiled, tile_hidden);
  std::mt19937_64 gen(seed);
  for (int s = 0; s < 4; ++s) {
    const auto X = random_tensor<T>({batch, in}, gen(), -2.0, 2.0);
    Tensor<T> targets = random_tensor<T>({batch, out}, gen());
    if (kind == LossKind::SoftmaxCrossEntropy) {
      targets = Tensor<T>({batch, out});
      for (std::size_t i = 0; i < batch; ++i) targets(i, gen() % out) = T(1);
    }
    const auto c = forward(whole, X);
    sgd_step(whole, backward(whole, c, per_model_loss(c.Y, targets, kind).dY), T(0.05));
    stepper.step(X, targets, kind, T(0.05));
  }
  stepper.sync();
  expect_banks_equal(whole, tiled);
}

}  // namespace

TEST(Batches, PartitionOfIndices) {
  const auto b = make_batches(4, 2, 123, false);
  ASSERT_EQ(b.size(), 2u);
  std::set<std::size_t> seen;
  for (const auto& batch : b) seen.insert(batch.begin(), batch.end());
  EXPECT_EQ(seen, (std::set<std::size_t>{0, 1, 2, 3}));
}

TEST(Batches, RaggedTail) {
  const auto b = make_batches(5, 2, 1, false);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 2u);
  EXPECT_EQ(b[1].size(), 2u);
  EXPECT_EQ(b[2].size(), 1u);
  EXPECT_EQ(make_batches(5, 2, 1, true).size(), 2u);
}

TEST(Batches, DeterministicPerSeed) {
  EXPECT_EQ(make_batches(100, 7, 9, false), make_batches(100, 7, 9, false));
  EXPECT_NE(make_batches(100, 7, 9, false), make_batches(100, 7, 10, false));
  EXPECT_NE(epoch_seed(0, 0), epoch_seed(0, 1));
  EXPECT_THROW(make_batches(10, 0, 1, false), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epochs = 2;
  cfg.warmup_epochs = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EpochTiming, WarmupExcluded) {
  EpochTiming t;
  t.warmup = 2;
  t.seconds = {100.0, 50.0, 1.0, 2.0, 3.0};
  EXPECT_EQ(t.counted(), 3u);
  EXPECT_DOUBLE_EQ(t.mean(), 2.0);
  EXPECT_DOUBLE_EQ(t.stddev(), 1.0);
}

TEST(Tiles, CoverBankInOrder) {
  std::mt19937_64 gen(1);
  for (int c = 0; c < 50; ++c) {
    const auto specs = testutil::random_specs(gen, 30, 40);
    const auto L = BankLayout::build(specs, 2, 2);
    const std::size_t target = 1 + gen() % 64;
    const auto tiles = make_tiles(L, target);
    std::size_t m = 0;
    for (const auto& t : tiles) {
      EXPECT_EQ(t.first_model, m);
      EXPECT_GT(t.end_model, t.first_model);
      EXPECT_EQ(t.h0, L.model_slices[t.first_model].start);
      EXPECT_EQ(t.h1, L.model_slices[t.end_model - 1].end);
      EXPECT_TRUE(t.end_model - t.first_model == 1 || t.h1 - t.h0 <= target);
      validate_segments(t.segments, t.h1 - t.h0);
      m = t.end_model;
    }
    EXPECT_EQ(m, specs.size());
  }
}

TEST(FusedStepper, MatchesWholeBankStep) {
  const auto specs = mixed_specs();
  for (bool biases : {false, true}) {
    for (LossKind kind : {LossKind::MSE, LossKind::SoftmaxCrossEntropy}) {
      for (std::size_t batch : {1u, 5u, 32u, 37u}) {
        check_stepper<double>(specs, biases, kind, batch, kTileHidden, 3);
        check_stepper<float>(specs, biases, kind, batch, kTileHidden, 4);
      }
    }
  }
}

TEST(FusedStepper, SmallTilesAndWideModels) {
  const Specs specs = {{40, Activation::Tanh}, {1, Activation::ReLU}, {70, Activation::GELU}, {3, Activation::Mish}};
  for (std::size_t tile : {1u, 4u, 41u, 64u, 200u}) {
    check_stepper<float>(specs, true, LossKind::MSE, 33, tile, 5);
    check_stepper<double>(specs, false, LossKind::SoftmaxCrossEntropy, 9, tile, 6);
  }
}

TEST(FusedStepper, LargeGrid) {
  const auto widths = width_range(1, 30);
  const auto specs = grid_specs(widths, kAllActivations, 1);
  check_stepper<float>(specs, false, LossKind::MSE, 32, kTileHidden, 7);
}

TEST(FusedStepper, ThreadCountDoesNotChangeResults) {
  const auto widths = width_range(1, 60);
  const auto specs = grid_specs(widths, kAllActivations, 1);
  set_threads(4);
  check_stepper<float>(specs, true, LossKind::MSE, 16, 256, 8);
  set_threads(1);
}

TEST(FusedStepper, RejectsBadArguments) {
  const Specs specs = {{2, Activation::Tanh}};
  auto bank = build_bank<double>(specs, 3, 2, {});
  FusedStepper<double> stepper(bank);
  EXPECT_THROW(stepper.step(Tensor<double>({2, 4}), Tensor<double>({2, 2}), LossKind::MSE, 0.1), DimensionError);
  EXPECT_THROW(stepper.step(Tensor<double>({2, 3}), Tensor<double>({3, 2}), LossKind::MSE, 0.1), DimensionError);
  EXPECT_THROW(stepper.step(Tensor<double>({2, 3}), Tensor<double>({2, 2}), LossKind::MSE, 0.0), ConfigError);
}

TEST(TrainFused, SchedulesAndPathsAgree) {
  const auto specs = mixed_specs();
  const auto ds = synth_dataset<double>(90, 7, 3, 9);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 16;
  auto tiled = build_bank<double>(specs, 7, 3, {10, true});
  auto whole = tiled;
  auto mat = tiled;
  const auto rt = train_fused(tiled, ds, cfg);
  cfg.schedule = FusedSchedule::Whole;
  const auto rw = train_fused(whole, ds, cfg);
  cfg.path = ForwardPath::Materialized;
  train_fused(mat, ds, cfg);
  expect_banks_equal(tiled, whole);
  expect_banks_equal(tiled, mat);
  EXPECT_EQ(rt.final_losses, rw.final_losses);
  EXPECT_EQ(rt.timing.seconds.size(), 3u);
  EXPECT_EQ(rt.timing.counted(), 2u);
}

TEST(TrainFused, SingleIdentityModelEqualsSequentialExactly) {
  const Specs specs = {{4, Activation::Identity}};
  const auto ds = synth_dataset<double>(50, 3, 2, 11);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.warmup_epochs = 0;
  auto bank = build_bank<double>(specs, 3, 2, {12, false});
  train_fused(bank, ds, cfg);
  const auto seq = train_sequential<double>(specs, ds, {12, false}, cfg);
  EXPECT_EQ(extract(bank, 0), seq.models[0]);
}

TEST(TrainFused, TrajectoriesMatchSequential) {
  const auto specs = mixed_specs();
  const auto ds = synth_dataset<double>(200, 7, 3, 13);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.warmup_epochs = 0;
  for (bool biases : {false, true}) {
    auto bank = build_bank<double>(specs, 7, 3, {14, biases});
    const auto fr = train_fused(bank, ds, cfg);
    const auto sr = train_sequential<double>(specs, ds, {14, biases}, cfg);
    for (std::size_t m = 0; m < specs.size(); ++m) {
      const auto got = extract(bank, m);
      EXPECT_LE(max_abs_diff(got.W1, sr.models[m].W1), 1e-8);
      EXPECT_LE(max_abs_diff(got.W2, sr.models[m].W2), 1e-8);
      EXPECT_LE(std::abs(fr.final_losses[m] - sr.final_losses[m]), 1e-8);
    }
  }
}

TEST(TrainFused, LossDecreases) {
  const auto widths = width_range(4, 8);
  const std::vector<Activation> acts = {Activation::Tanh, Activation::ReLU, Activation::GELU};
  const auto specs = grid_specs(widths, acts, 1);
  const auto ds = synth_dataset<float>(500, 6, 2, 15);
  auto bank = build_bank<float>(specs, 6, 2, {16, true});
  const auto before = evaluate_losses(bank, ds, LossKind::MSE);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.lr = 0.05;
  const auto r = train_fused(bank, ds, cfg);
  for (std::size_t m = 0; m < specs.size(); ++m) EXPECT_LT(r.final_losses[m], before[m]) << m;
}

TEST(TrainFused, ClassificationLossDecreases) {
  const Specs specs = {{8, Activation::Tanh}, {8, Activation::ReLU}};
  const auto ds = synth_dataset<double>(400, 5, 3, 17, Task::Classification);
  auto bank = build_bank<double>(specs, 5, 3, {18, true});
  const auto before = evaluate_losses(bank, ds, LossKind::SoftmaxCrossEntropy);
  TrainConfig cfg;
  cfg.loss = LossKind::SoftmaxCrossEntropy;
  cfg.lr = 0.1;
  const auto r = train_fused(bank, ds, cfg);
  for (std::size_t m = 0; m < 2; ++m) EXPECT_LT(r.final_losses[m], before[m]);
}

TEST(TrainFused, RejectsMismatchedDataset) {
  const Specs specs = {{2, Activation::Tanh}};
  auto bank = build_bank<double>(specs, 3, 2, {});
  EXPECT_THROW(train_fused(bank, synth_dataset<double>(10, 4, 2, 1), TrainConfig{}), DataError);
  EXPECT_THROW(train_fused(bank, synth_dataset<double>(10, 3, 1, 1), TrainConfig{}), DataError);
}

TEST(TrainSequential, ThreadedEqualsSingleThreaded) {
  const auto specs = mixed_specs();
  const auto ds = synth_dataset<float>(100, 7, 3, 19);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  const auto a = train_sequential<float>(specs, ds, {20, true}, cfg);
  cfg.sequential_threads = 3;
  const auto b = train_sequential<float>(specs, ds, {20, true}, cfg);
  EXPECT_EQ(a.models, b.models);
  EXPECT_EQ(a.final_losses, b.final_losses);
}

TEST(TrainSequential, SingleModelMatchesFusedBank) {
  const Specs specs = {{6, Activation::SELU}};
  const auto ds = synth_dataset<double>(80, 4, 2, 21);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.warmup_epochs = 1;
  auto bank = build_bank<double>(specs, 4, 2, {22, true});
  train_fused(bank, ds, cfg);
  const auto sr = train_sequential<double>(specs, ds, {22, true}, cfg);
  EXPECT_EQ(extract(bank, 0), sr.models[0]);
}

TEST(TrainSequential, TimeGrowsWithModelCount) {
  const auto ds = synth_dataset<float>(500, 10, 2, 23);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  const Specs few(5, ModelSpec{20, Activation::Tanh});
  const Specs many(60, ModelSpec{20, Activation::Tanh});
  const double t_few = train_sequential<float>(few, ds, {}, cfg).timing.mean();
  const double t_many = train_sequential<float>(many, ds, {}, cfg).timing.mean();
  EXPECT_GT(t_many, t_few);
}

TEST(TrainFused, TwelveEpochsTwoWarmupCountsTen) {
  const Specs specs = {{2, Activation::ReLU}};
  auto bank = build_bank<float>(specs, 3, 2, {});
  const auto r = train_fused(bank, synth_dataset<float>(40, 3, 2, 1), TrainConfig{});
  EXPECT_EQ(r.timing.seconds.size(), 12u);
  EXPECT_EQ(r.timing.counted(), 10u);
}
