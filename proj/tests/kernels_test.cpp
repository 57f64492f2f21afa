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

TEST(MatmulT, IdentityRowsSelectColumns) {
  const Tensor<double> X({2, 2}, {1, 0, 0, 1});
  const Tensor<double> W({2, 2}, {2, 3, 4, 5});
  EXPECT_EQ(matmul_t(X, W), Tensor<double>({2, 2}, {2, 4, 3, 5}));
}

TEST(MatmulT, DotProduct) {
  EXPECT_EQ(matmul_t(Tensor<double>({1, 2}, {1, 2}), Tensor<double>({1, 2}, {1, 1})), Tensor<double>({1, 1}, {3}));
}

TEST(MatmulT, MatchesLoopOracleExactly) {
  const auto X = random_tensor<double>({7, 5}, 1);
  const auto W = random_tensor<double>({4, 5}, 2);
  EXPECT_EQ(matmul_t(X, W), testutil::naive_matmul_t(X, W));
}

// Covers the narrow kernel, the blocked kernel and their remainders.
TEST(MatmulT, MatchesOracleAcrossShapes) {
  std::uint64_t seed = 10;
  for (std::size_t b : {1u, 7u, 8u, 9u, 33u}) {
    for (std::size_t k : {1u, 5u, 100u}) {
      for (std::size_t n : {1u, 2u, 15u, 16u, 70u, 130u}) {
        const auto X = random_tensor<float>({b, k}, ++seed);
        const auto W = random_tensor<float>({n, k}, ++seed);
        EXPECT_EQ(matmul_t(X, W), testutil::naive_matmul_t(X, W)) << b << "x" << k << " by " << n;
      }
    }
  }
}

TEST(MatmulT, RejectsMismatchedInner) {
  EXPECT_THROW(matmul_t(Tensor<double>({2, 3}), Tensor<double>({2, 4})), DimensionError);
  EXPECT_THROW(matmul_t(Tensor<double>({2, 3, 1}), Tensor<double>({2, 3})), DimensionError);
}

TEST(Matmul, MatchesOracle) {
  const auto A = random_tensor<double>({6, 4}, 3);
  const auto B = random_tensor<double>({4, 9}, 4);
  const auto out = matmul(A, B);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += A(i, k) * B(k, j);
      EXPECT_EQ(out(i, j), acc);
    }
  }
}

TEST(MatmulTn, MatchesOracleAcrossShapes) {
  std::uint64_t seed = 100;
  for (std::size_t r : {1u, 4u, 33u}) {
    for (std::size_t m : {1u, 3u, 300u}) {
      for (std::size_t n : {1u, 2u, 10u, 16u, 40u}) {
        const auto A = random_tensor<double>({r, m}, ++seed);
        const auto B = random_tensor<double>({r, n}, ++seed);
        const auto out = matmul_tn(A, B);
        ASSERT_EQ(out.shape(), (Shape{m, n}));
        for (std::size_t p = 0; p < m; ++p) {
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < r; ++i) acc += A(i, p) * B(i, j);
            ASSERT_EQ(out(p, j), acc) << r << " " << m << " " << n;
          }
        }
      }
    }
  }
}

TEST(BroadcastMul, ScalarRows) {
  const Tensor<double> Hp({1, 1, 2}, {2, 3});
  const Tensor<double> W2({1, 2, 2}, {1, 1, 10, 10});
  EXPECT_EQ(broadcast_mul(Hp, W2), Tensor<double>({1, 2, 2}, {2, 3, 20, 30}));
}

TEST(BroadcastMul, OnesReplicateW2) {
  const auto W2 = random_tensor<double>({1, 3, 4}, 5);
  const auto out = broadcast_mul(Tensor<double>::filled({2, 1, 4}, 1.0), W2);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(out(i, j, k), W2(0, j, k));
    }
  }
}

TEST(BroadcastMul, MatchesOracle) {
  const auto Hp = random_tensor<double>({3, 1, 5}, 6);
  const auto W2 = random_tensor<double>({1, 2, 5}, 7);
  const auto out = broadcast_mul(Hp, W2);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(out(i, j, k), Hp(i, 0, k) * W2(0, j, k));
    }
  }
}

TEST(BroadcastMul, RejectsBadShapes) {
  EXPECT_THROW(broadcast_mul(Tensor<double>({2, 2, 3}), Tensor<double>({1, 2, 3})), DimensionError);
  EXPECT_THROW(broadcast_mul(Tensor<double>({2, 1, 3}), Tensor<double>({1, 2, 4})), DimensionError);
}

TEST(ScatterAdd, WorkedExample) {
  const Tensor<double> S({1, 6}, {1, 2, 3, 4, 5, 6});
  const IndexTensor I({1, 6}, {0, 1, 1, 2, 2, 2});
  EXPECT_EQ(scatter_add(1, S, I, 3), Tensor<double>({1, 3}, {1, 5, 15}));
}

TEST(ScatterAdd, AllZeroIndexIsReduceSum) {
  const auto S = random_tensor<double>({3, 4}, 8);
  const IndexTensor I = IndexTensor::filled({3, 4}, 0);
  const auto R = scatter_add(1, S, I, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 4; ++j) acc += S(i, j);
    EXPECT_EQ(R(i, 0), acc);
  }
}

TEST(ScatterAdd, MatchesBruteForceRandomized) {
  std::mt19937_64 gen(9);
  std::uniform_int_distribution<std::size_t> ext(1, 8);
  for (int c = 0; c < 300; ++c) {
    const std::size_t rank = 1 + static_cast<std::size_t>(c % 3);
    Shape shape(rank);
    for (auto& e : shape) e = ext(gen);
    const std::size_t dim = std::uniform_int_distribution<std::size_t>(0, rank - 1)(gen);
    const std::size_t extent = ext(gen);
    const auto S = random_tensor<double>(shape, gen());
    IndexTensor I(shape);
    std::uniform_int_distribution<std::int64_t> pick(0, static_cast<std::int64_t>(extent) - 1);
    for (auto& v : I.data()) v = pick(gen);
    if (rank == 1) {
      Tensor<double> want({extent});
      for (std::size_t p = 0; p < S.size(); ++p) want[static_cast<std::size_t>(I[p])] += S[p];
      EXPECT_EQ(scatter_add(0, S, I, extent), want);
    } else {
      EXPECT_EQ(scatter_add(dim, S, I, extent), verify_detail::scatter_oracle(dim, S, I, extent));
    }
  }
}

TEST(ScatterAdd, RejectsBadArguments) {
  const Tensor<double> S({1, 3});
  EXPECT_THROW(scatter_add(1, S, IndexTensor({1, 3}, {0, 1, 3}), 3), IndexError);
  EXPECT_THROW(scatter_add(1, S, IndexTensor({1, 3}, {0, -1, 0}), 3), IndexError);
  EXPECT_THROW(scatter_add(1, S, IndexTensor({1, 2}), 3), DimensionError);
  EXPECT_THROW(scatter_add(2, S, IndexTensor({1, 3}), 3), DimensionError);
  EXPECT_THROW(scatter_add(1, S, IndexTensor({1, 3}), 0), DimensionError);
}

TEST(ScatterAddBackward, WorkedExample) {
  const IndexTensor I({1, 6}, {0, 1, 1, 2, 2, 2});
  EXPECT_EQ(scatter_add_backward(1, Tensor<double>({1, 3}, {1, 5, 15}), I),
            Tensor<double>({1, 6}, {1, 5, 5, 15, 15, 15}));
}

TEST(ScatterAddBackward, ZeroCotangent) {
  const IndexTensor I({2, 3}, {0, 1, 1, 1, 0, 0});
  EXPECT_EQ(scatter_add_backward(1, Tensor<double>({2, 2}), I), Tensor<double>({2, 3}));
}

TEST(ScatterAddBackward, MatchesFiniteDifferences) {
  auto S = random_tensor<double>({3, 5}, 11);
  const IndexTensor I({3, 5}, {0, 2, 1, 1, 0, 2, 2, 2, 0, 1, 1, 0, 0, 2, 1});
  auto total = [&] {
    double s = 0.0;
    const auto R = scatter_add(1, S, I, 3);
    for (double v : R.data()) s += v;
    return s;
  };
  const auto g = scatter_add_backward(1, Tensor<double>::filled({3, 3}, 1.0), I);
  constexpr double h = 1e-5;
  for (std::size_t p = 0; p < S.size(); ++p) {
    const double saved = S[p];
    S[p] = saved + h;
    const double up = total();
    S[p] = saved - h;
    const double down = total();
    S[p] = saved;
    EXPECT_NEAR((up - down) / (2 * h), g[p], 1e-8);
  }
}

TEST(SegmentActivate, IdentityCoversAll) {
  const auto H = random_tensor<double>({3, 4}, 12);
  const std::vector<Segment> seg = {{0, 4, Activation::Identity}};
  EXPECT_EQ(segment_activate(H, seg), H);
}

TEST(SegmentActivate, MixedSegments) {
  const Tensor<double> H({1, 3}, {-1, -1, 2});
  const std::vector<Segment> seg = {{0, 1, Activation::ReLU}, {1, 3, Activation::Identity}};
  EXPECT_EQ(segment_activate(H, seg), Tensor<double>({1, 3}, {0, -1, 2}));
}

TEST(SegmentActivate, MatchesPerColumnOracle) {
  const auto H = random_tensor<double>({5, 37}, 13, -3.0, 3.0);
  const std::vector<Segment> seg = {{0, 10, Activation::Mish},
                                    {10, 11, Activation::SELU},
                                    {11, 30, Activation::GELU},
                                    {30, 37, Activation::Sigmoid}};
  const auto out = segment_activate(H, seg);
  const auto dH = random_tensor<double>({5, 37}, 14);
  const auto back = segment_activate_backward(dH, H, seg);
  for (const auto& s : seg) {
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = s.start; j < s.end; ++j) {
        EXPECT_EQ(out(i, j), activate(H(i, j), s.activation));
        EXPECT_EQ(back(i, j), dH(i, j) * activation_grad(H(i, j), s.activation));
      }
    }
  }
}

TEST(SegmentActivate, RejectsBrokenPartition) {
  const Tensor<double> H({1, 4});
  EXPECT_THROW(segment_activate(H, std::vector<Segment>{{0, 2, Activation::ReLU}}), LayoutError);
  EXPECT_THROW(segment_activate(H, std::vector<Segment>{{0, 2, Activation::ReLU}, {3, 4, Activation::ReLU}}),
               LayoutError);
}

TEST(ColumnSums, AscendingRows) {
  const Tensor<double> A({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(column_sums(A), Tensor<double>({3}, {5, 7, 9}));
}

TEST(Parallel, ThreadCountDoesNotChangeResults) {
  const auto X = random_tensor<double>({64, 30}, 15);
  const auto W = random_tensor<double>({500, 30}, 16);
  set_threads(1);
  const auto one = matmul_t(X, W);
  set_threads(4);
  const auto four = matmul_t(X, W);
  set_threads(1);
  EXPECT_EQ(one, four);
}
