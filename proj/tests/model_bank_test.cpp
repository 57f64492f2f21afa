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

#include <random>

#include "test_util.hpp"

using namespace mlpbank;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

using Specs = std::vector<ModelSpec>;

// The 4-1-2 and 4-2-2 sigmoid networks fused into one 4-3-4 bank, with
// hand-set weights.
struct Fig2 {
  SequentialMlp<double> red;
  SequentialMlp<double> blue;
  FusedBank<double> bank;

  Fig2() {
    red.activation = blue.activation = Activation::Sigmoid;
    red.W1 = Tensor<double>({1, 4}, {0.1, -0.2, 0.3, -0.4});
    red.W2 = Tensor<double>({2, 1}, {0.5, -0.6});
    blue.W1 = Tensor<double>({2, 4}, {0.7, 0.8, -0.9, 1.0, -1.1, 1.2, 1.3, -1.4});
    blue.W2 = Tensor<double>({2, 2}, {1.5, -1.6, 1.7, 1.8});
    const std::vector<SequentialMlp<double>> models = {red, blue};
    bank = fuse<double>(models);
  }
};

double total_loss(const FusedBank<double>& b, const Tensor<double>& X, const Tensor<double>& T) {
  double s = 0.0;
  const auto l = per_model_loss(forward(b, X).Y, T, LossKind::MSE);
  for (double v : l.losses.data()) s += v;
  return s;
}

}  // namespace

TEST(BankLayout, Fig2Bank) {
  const Specs specs = {{1, Activation::Sigmoid}, {2, Activation::Sigmoid}};
  const auto L = BankLayout::build(specs, 4, 2);
  EXPECT_EQ(L.hidden_total, 3u);
  EXPECT_EQ(L.fused_output_count(), 4u);
  EXPECT_EQ(L.owner, (std::vector<std::int64_t>{0, 1, 1}));
  ASSERT_EQ(L.segments.size(), 1u);
  EXPECT_EQ(L.segments[0], (Segment{0, 3, Activation::Sigmoid}));
  EXPECT_NO_THROW(L.validate());
}

TEST(BankLayout, SingleModelIsPlainMlp) {
  const Specs specs = {{3, Activation::Identity}};
  const auto L = BankLayout::build(specs, 4, 2);
  EXPECT_EQ(L.hidden_total, 3u);
  EXPECT_EQ(L.fused_output_count(), 2u);
  EXPECT_EQ(L.owner, (std::vector<std::int64_t>{0, 0, 0}));
  const auto bank = build_bank<double>(specs, 4, 2, {});
  EXPECT_EQ(bank.W1.shape(), (Shape{3, 4}));
  EXPECT_EQ(bank.W2.shape(), (Shape{2, 3}));
}

TEST(BankLayout, PropertiesOnRandomSpecs) {
  std::mt19937_64 gen(1);
  for (int c = 0; c < 200; ++c) {
    const auto specs = testutil::random_specs(gen, 12, 9);
    const auto L = BankLayout::build(specs, 3, 2);
    ASSERT_NO_THROW(L.validate());
    std::size_t sum = 0;
    for (std::size_t m = 0; m < specs.size(); ++m) {
      EXPECT_EQ(L.model_slices[m].start, sum);
      EXPECT_EQ(L.model_slices[m].size(), specs[m].hidden);
      sum += specs[m].hidden;
    }
    EXPECT_EQ(L.hidden_total, sum);
    for (std::size_t s = 1; s < L.segments.size(); ++s) {
      EXPECT_NE(L.segments[s].activation, L.segments[s - 1].activation) << "segments must be maximal";
    }
    const auto I = L.index_tensor(2);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t o = 0; o < 2; ++o) {
        for (std::size_t h = 0; h < sum; ++h) EXPECT_EQ(I(i, o, h), L.owner[h]);
      }
    }
  }
}

TEST(BankLayout, ValidateCatchesCorruption) {
  const Specs specs = {{2, Activation::Tanh}, {2, Activation::ReLU}};
  auto L = BankLayout::build(specs, 3, 2);
  L.owner[2] = 0;
  EXPECT_THROW(L.validate(), LayoutError);
  L = BankLayout::build(specs, 3, 2);
  L.segments[0].activation = Activation::ReLU;
  EXPECT_THROW(L.validate(), LayoutError);
}

TEST(BankLayout, RejectsBadSpecs) {
  EXPECT_THROW(BankLayout::build(Specs{}, 3, 2), BuildError);
  EXPECT_THROW(BankLayout::build(Specs{{0, Activation::Tanh}}, 3, 2), BuildError);
  EXPECT_THROW(BankLayout::build(Specs{{1, Activation::Tanh}}, 0, 2), BuildError);
}

TEST(Grid, PaperScaleCounts) {
  const auto widths = width_range(1, 100);
  const auto specs = grid_specs(widths, kAllActivations, 10);
  EXPECT_EQ(specs.size(), 10000u);
  const auto L = BankLayout::build(specs, 100, 2);
  EXPECT_EQ(L.n_models, 10000u);
  EXPECT_EQ(L.hidden_total, 505000u);
  EXPECT_EQ(L.segments.size(), 100u);
}

TEST(Grid, ExplicitWidths) {
  const std::vector<std::size_t> widths = {3, 19, 200};
  const std::vector<Activation> acts = {Activation::ReLU};
  const auto specs = grid_specs(widths, acts, 1);
  ASSERT_EQ(specs.size(), 3u);
  EXPECT_EQ(specs[1], (ModelSpec{19, Activation::ReLU}));
  const std::vector<std::size_t> one = {1};
  const std::vector<Activation> id = {Activation::Identity};
  EXPECT_EQ(grid_specs(one, id, 1), (Specs{{1, Activation::Identity}}));
}

TEST(Grid, CoordinatesInvertOrder) {
  const std::vector<std::size_t> widths = {1, 2, 3, 4};
  const std::vector<Activation> acts = {Activation::Tanh, Activation::ReLU, Activation::Mish};
  const auto specs = grid_specs(widths, acts, 2);
  for (std::size_t id = 0; id < specs.size(); ++id) {
    const auto c = grid_coordinates(id, widths, acts);
    EXPECT_EQ(specs[id], (ModelSpec{c.width, c.activation}));
    EXPECT_EQ(id, (c.repeat * acts.size() + (id / widths.size()) % acts.size()) * widths.size() + (id % widths.size()));
  }
  EXPECT_EQ(grid_coordinates(23, widths, acts).repeat, 1u);
}

TEST(Grid, RejectsEmpty) {
  const std::vector<std::size_t> none;
  EXPECT_THROW(grid_specs(none, kAllActivations, 1), BuildError);
  EXPECT_THROW(width_range(0, 3), BuildError);
  EXPECT_THROW(width_range(5, 3), BuildError);
}

TEST(ModelBank, InitMatchesStandaloneModels) {
  const Specs specs = {{3, Activation::ReLU}, {1, Activation::GELU}, {4, Activation::Tanh}};
  const InitConfig init{42, true};
  const auto bank = build_bank<double>(specs, 5, 3, init);
  for (std::size_t m = 0; m < specs.size(); ++m) {
    EXPECT_EQ(extract(bank, m), init_mlp<double>(specs[m], 5, 3, model_seed(42, m), true));
  }
}

TEST(ModelBank, ExtractFig2) {
  const Fig2 f;
  EXPECT_EQ(extract(f.bank, 1), f.blue);
  EXPECT_EQ(extract(f.bank, 0), f.red);
  EXPECT_THROW(extract(f.bank, 2), IndexError);
}

TEST(ModelBank, ExtractSingleModelBank) {
  const Specs specs = {{5, Activation::ELU}};
  const auto bank = build_bank<double>(specs, 3, 2, {9, true});
  const auto m = extract(bank, 0);
  EXPECT_EQ(m.W1, bank.W1);
  EXPECT_EQ(m.W2, bank.W2);
  EXPECT_EQ(*m.b1, *bank.b1);
  EXPECT_EQ(m.b2->data()[1], bank.b2->data()[1]);
}

TEST(ModelBank, FuseExtractRoundTrip) {
  std::mt19937_64 gen(2);
  const auto specs = testutil::random_specs(gen, 8, 6);
  const auto bank = build_bank<double>(specs, 4, 2, {3, true});
  std::vector<SequentialMlp<double>> models;
  for (std::size_t m = 0; m < specs.size(); ++m) models.push_back(extract(bank, m));
  EXPECT_EQ(fuse<double>(models), bank);
  const auto X = random_tensor<double>({10, 4}, 4);
  const auto Y = forward(bank, X).Y;
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const auto y = seq_forward(models[m], X).Y;
    for (std::size_t i = 0; i < 10; ++i) {
      for (std::size_t o = 0; o < 2; ++o) EXPECT_LE(std::abs(Y(i, m, o) - y(i, o)), 1e-12);
    }
  }
}

TEST(ModelBank, FuseRejectsMismatchedModels) {
  std::vector<SequentialMlp<double>> models = {init_mlp<double>({2, Activation::Tanh}, 3, 2, 1, false),
                                               init_mlp<double>({2, Activation::Tanh}, 4, 2, 2, false)};
  EXPECT_THROW(fuse<double>(models), BuildError);
  models[1] = init_mlp<double>({2, Activation::Tanh}, 3, 2, 2, true);
  EXPECT_THROW(fuse<double>(models), BuildError);
}

TEST(Forward, SingleIdentityModelIsTwoMatmuls) {
  const Specs specs = {{4, Activation::Identity}};
  const auto bank = build_bank<double>(specs, 3, 2, {5, false});
  const auto X = random_tensor<double>({6, 3}, 6);
  const auto want = matmul_t(matmul_t(X, bank.W1), bank.W2);
  const auto Y = forward(bank, X).Y;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t o = 0; o < 2; ++o) EXPECT_EQ(Y(i, 0, o), want(i, o));
  }
}

TEST(Forward, Fig2SlicesEqualStandaloneForwards) {
  const Fig2 f;
  const auto X = random_tensor<double>({5, 4}, 7);
  for (ForwardPath path : {ForwardPath::Fused, ForwardPath::Materialized}) {
    const auto Y = forward(f.bank, X, path).Y;
    ASSERT_EQ(Y.shape(), (Shape{5, 2, 2}));
    const auto yr = seq_forward(f.red, X).Y;
    const auto yb = seq_forward(f.blue, X).Y;
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t o = 0; o < 2; ++o) {
        EXPECT_EQ(Y(i, 0, o), yr(i, o));
        EXPECT_EQ(Y(i, 1, o), yb(i, o));
      }
    }
  }
}

TEST(Forward, ZeroInputGivesZeroOutput) {
  for (Activation a : {Activation::ReLU, Activation::Tanh, Activation::Identity, Activation::Mish}) {
    const Specs specs = {{3, a}, {2, a}};
    const auto bank = build_bank<double>(specs, 4, 2, {1, false});
    EXPECT_EQ(forward(bank, Tensor<double>({3, 4})).Y, Tensor<double>({3, 2, 2}));
  }
}

TEST(Forward, MaterializedEqualsFusedExactly) {
  std::mt19937_64 gen(8);
  for (int c = 0; c < 40; ++c) {
    const auto specs = testutil::random_specs(gen, 10, 12);
    const bool biases = c % 2 == 0;
    const auto bank = build_bank<float>(specs, 6, 3, {gen(), biases});
    const auto X = random_tensor<float>({7, 6}, gen(), -2.0, 2.0);
    const auto a = forward(bank, X, ForwardPath::Fused);
    const auto b = forward(bank, X, ForwardPath::Materialized);
    EXPECT_EQ(a.Y, b.Y);
    EXPECT_FALSE(a.S.has_value());
    ASSERT_TRUE(b.S.has_value());
    EXPECT_EQ(b.S->shape(), (Shape{7, 3, bank.layout.hidden_total}));
    const auto T = random_tensor<float>({7, 3}, gen());
    const auto dY = per_model_loss(a.Y, T, LossKind::MSE).dY;
    const auto ga = backward(bank, a, dY);
    const auto gb = backward(bank, b, dY);
    EXPECT_EQ(ga.dW1, gb.dW1);
    EXPECT_EQ(ga.dW2, gb.dW2);
    EXPECT_EQ(ga.db1, gb.db1);
    EXPECT_EQ(ga.db2, gb.db2);
  }
}

TEST(Forward, RejectsWrongInputWidth) {
  const Specs specs = {{2, Activation::Tanh}};
  const auto bank = build_bank<double>(specs, 4, 2, {});
  EXPECT_THROW(forward(bank, Tensor<double>({3, 5})), DimensionError);
}

TEST(Backward, CotangentOfOneModelStaysInItsSlice) {
  const Specs specs = {{2, Activation::Tanh}, {3, Activation::Sigmoid}, {1, Activation::SELU}};
  const auto bank = build_bank<double>(specs, 4, 2, {3, true});
  const auto X = random_tensor<double>({4, 4}, 9);
  const auto c = forward(bank, X);
  for (std::size_t m = 0; m < specs.size(); ++m) {
    Tensor<double> dY(c.Y.shape());
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t o = 0; o < 2; ++o) dY(i, m, o) = 1.0 + static_cast<double>(i + o);
    }
    const auto g = backward(bank, c, dY);
    const auto [s, e] = bank.layout.model_slices[m];
    for (std::size_t h = 0; h < bank.layout.hidden_total; ++h) {
      if (h >= s && h < e) continue;
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(g.dW1(h, k), 0.0);
      for (std::size_t o = 0; o < 2; ++o) EXPECT_EQ(g.dW2(o, h), 0.0);
      EXPECT_EQ((*g.db1)[h], 0.0);
    }
    for (std::size_t mo = 0; mo < specs.size(); ++mo) {
      if (mo == m) continue;
      for (std::size_t o = 0; o < 2; ++o) EXPECT_EQ((*g.db2)(mo, o), 0.0);
    }
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  const Specs specs = {{2, Activation::GELU}, {3, Activation::ELU}};
  auto bank = build_bank<double>(specs, 3, 2, {4, true});
  const auto X = random_tensor<double>({4, 3}, 10);
  const auto T = random_tensor<double>({4, 2}, 11);
  const auto c = forward(bank, X);
  const auto g = backward(bank, c, per_model_loss(c.Y, T, LossKind::MSE).dY);
  std::vector<std::pair<Tensor<double>*, const Tensor<double>*>> pairs = {
      {&bank.W1, &g.dW1}, {&bank.W2, &g.dW2}, {&*bank.b1, &*g.db1}, {&*bank.b2, &*g.db2}};
  constexpr double h = 1e-5;
  for (auto [p, gp] : pairs) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = (*p)[i];
      (*p)[i] = saved + h;
      const double up = total_loss(bank, X, T);
      (*p)[i] = saved - h;
      const double down = total_loss(bank, X, T);
      (*p)[i] = saved;
      const double numeric = (up - down) / (2 * h);
      EXPECT_LE(std::abs(numeric - (*gp)[i]) / std::max({std::abs(numeric), std::abs((*gp)[i]), 1e-3}), 1e-6);
    }
  }
}

TEST(Backward, MatchesSequentialGradients) {
  std::mt19937_64 gen(12);
  const auto specs = testutil::random_specs(gen, 6, 7);
  const auto bank = build_bank<double>(specs, 5, 2, {13, true});
  const auto X = random_tensor<double>({8, 5}, 14);
  const auto T = random_tensor<double>({8, 2}, 15);
  const auto c = forward(bank, X);
  const auto loss = per_model_loss(c.Y, T, LossKind::MSE);
  const auto g = backward(bank, c, loss.dY);
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const auto model = extract(bank, m);
    const auto sc = seq_forward(model, X);
    const auto sl = seq_loss(sc.Y, T, LossKind::MSE);
    EXPECT_LE(std::abs(sl.loss - loss.losses[m]), 1e-12);
    const auto sg = seq_backward(model, sc, sl.dY);
    const auto [s, e] = bank.layout.model_slices[m];
    for (std::size_t h = s; h < e; ++h) {
      for (std::size_t k = 0; k < 5; ++k) EXPECT_LE(std::abs(g.dW1(h, k) - sg.dW1(h - s, k)), 1e-12);
      for (std::size_t o = 0; o < 2; ++o) EXPECT_LE(std::abs(g.dW2(o, h) - sg.dW2(o, h - s)), 1e-12);
      EXPECT_LE(std::abs((*g.db1)[h] - (*sg.db1)[h - s]), 1e-12);
    }
    for (std::size_t o = 0; o < 2; ++o) EXPECT_LE(std::abs((*g.db2)(m, o) - (*sg.db2)[o]), 1e-12);
  }
}

TEST(Backward, RejectsForeignCache) {
  const Specs a = {{2, Activation::Tanh}};
  const Specs b = {{3, Activation::Tanh}};
  const auto ba = build_bank<double>(a, 2, 2, {});
  const auto bb = build_bank<double>(b, 2, 2, {});
  const auto c = forward(ba, Tensor<double>({1, 2}));
  EXPECT_THROW(backward(bb, c, Tensor<double>({1, 1, 2})), StateError);
}

// Perturbing one model's parameters leaves every other model's outputs
// bit-identical.
TEST(Independence, PerturbationDoesNotLeak) {
  std::mt19937_64 gen(16);
  for (int c = 0; c < 10; ++c) {
    const auto specs = testutil::random_specs(gen, 5, 4);
    if (specs.size() < 2) continue;
    const auto base = build_bank<double>(specs, 3, 2, {gen(), true});
    const auto X = random_tensor<double>({4, 3}, gen());
    const auto Y0 = forward(base, X).Y;
    const std::size_t m = gen() % specs.size();
    auto bank = base;
    const auto [s, e] = bank.layout.model_slices[m];
    for (std::size_t h = s; h < e; ++h) {
      for (std::size_t k = 0; k < 3; ++k) bank.W1(h, k) += 0.1;
      bank.W2(1, h) += 0.1;
      (*bank.b1)[h] += 0.1;
    }
    (*bank.b2)(m, 0) += 0.1;
    for (ForwardPath path : {ForwardPath::Fused, ForwardPath::Materialized}) {
      const auto Y = forward(bank, X, path).Y;
      for (std::size_t mo = 0; mo < specs.size(); ++mo) {
        if (mo == m) continue;
        for (std::size_t i = 0; i < 4; ++i) {
          for (std::size_t o = 0; o < 2; ++o) EXPECT_EQ(Y(i, mo, o), Y0(i, mo, o));
        }
      }
    }
  }
}

TEST(Sgd, BankStepMatchesSequentialStep) {
  const Specs specs = {{3, Activation::Mish}, {2, Activation::LeakyReLU}};
  auto bank = build_bank<double>(specs, 4, 2, {17, true});
  std::vector<SequentialMlp<double>> models = {extract(bank, 0), extract(bank, 1)};
  const auto X = random_tensor<double>({6, 4}, 18);
  const auto T = random_tensor<double>({6, 2}, 19);
  const auto c = forward(bank, X);
  sgd_step(bank, backward(bank, c, per_model_loss(c.Y, T, LossKind::MSE).dY), 0.01);
  for (std::size_t m = 0; m < 2; ++m) {
    const auto sc = seq_forward(models[m], X);
    sgd_step(models[m], seq_backward(models[m], sc, seq_loss(sc.Y, T, LossKind::MSE).dY), 0.01);
    const auto got = extract(bank, m);
    EXPECT_LE(max_abs_diff(got.W1, models[m].W1), 1e-12);
    EXPECT_LE(max_abs_diff(got.W2, models[m].W2), 1e-12);
    EXPECT_LE(max_abs_diff(*got.b1, *models[m].b1), 1e-12);
    EXPECT_LE(max_abs_diff(*got.b2, *models[m].b2), 1e-12);
  }
}
