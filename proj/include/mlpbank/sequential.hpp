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

#pragma once

// A standalone single-hidden-layer MLP: the "train one model at a time"
// baseline and the reference the fused bank is checked against.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "mlpbank/activation.hpp"
#include "mlpbank/errors.hpp"
#include "mlpbank/kernels.hpp"
#include "mlpbank/model_spec.hpp"
#include "mlpbank/tensor.hpp"

namespace mlpbank {

template <typename T>
struct SequentialMlp {
  Tensor<T> W1;  // [hidden, in]
  Tensor<T> W2;  // [out, hidden]
  std::optional<Tensor<T>> b1;  // [hidden]
  std::optional<Tensor<T>> b2;  // [out]
  Activation activation = Activation::Identity;

  [[nodiscard]] std::size_t hidden() const { return W1.extent(0); }
  [[nodiscard]] std::size_t in_dim() const { return W1.extent(1); }
  [[nodiscard]] std::size_t out_dim() const { return W2.extent(0); }
  [[nodiscard]] bool has_biases() const { return b1.has_value(); }

  void validate() const {
    require_rank(W1, 2, "SequentialMlp W1");
    require_shape(W2, {W2.extent(0), hidden()}, "SequentialMlp W2");
    if (b1.has_value() != b2.has_value()) throw BuildError("SequentialMlp: biases must be all or none");
    if (b1) require_shape(*b1, {hidden()}, "SequentialMlp b1");
    if (b2) require_shape(*b2, {out_dim()}, "SequentialMlp b2");
  }

  bool operator==(const SequentialMlp&) const = default;
};

// Draw order: W1, b1, W2, b2. Each layer is U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
SequentialMlp<T> init_mlp(const ModelSpec& spec, std::size_t in_dim, std::size_t out_dim,
                          std::uint64_t seed, bool biases) {
  if (spec.hidden == 0) throw BuildError("model hidden width must be >= 1");
  if (in_dim == 0 || out_dim == 0) throw BuildError("in_dim and out_dim must be >= 1");
  std::mt19937_64 gen(seed);
  SequentialMlp<T> m;
  m.activation = spec.activation;
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden));
  m.W1 = Tensor<T>({spec.hidden, in_dim});
  detail::fill_uniform(m.W1, gen, bound1);
  if (biases) {
    m.b1 = Tensor<T>({spec.hidden});
    detail::fill_uniform(*m.b1, gen, bound1);
  }
  m.W2 = Tensor<T>({out_dim, spec.hidden});
  detail::fill_uniform(m.W2, gen, bound2);
  if (biases) {
    m.b2 = Tensor<T>({out_dim});
    detail::fill_uniform(*m.b2, gen, bound2);
  }
  return m;
}

template <typename T>
struct SequentialCache {
  Tensor<T> X;   // [batch, in]
  Tensor<T> H;   // [batch, hidden], pre-activation
  Tensor<T> Hp;  // [batch, hidden], post-activation
  Tensor<T> Y;   // [batch, out]
};

template <typename T>
SequentialCache<T> seq_forward(const SequentialMlp<T>& m, const Tensor<T>& X) {
  require_rank(X, 2, "seq_forward input");
  if (X.extent(1) != m.in_dim()) {
    throw DimensionError("seq_forward: input width " + std::to_string(X.extent(1)) +
                         " != model in_dim " + std::to_string(m.in_dim()));
  }
  SequentialCache<T> c;
  c.X = X;
  c.H = matmul_t(X, m.W1);
  if (m.b1) add_row_bias(c.H, *m.b1);
  const Segment whole{0, m.hidden(), m.activation};
  c.Hp = segment_activate(c.H, std::span<const Segment>(&whole, 1));
  c.Y = matmul_t(c.Hp, m.W2);
  if (m.b2) add_row_bias(c.Y, *m.b2);
  return c;
}

template <typename T>
Gradients<T> seq_backward(const SequentialMlp<T>& m, const SequentialCache<T>& c, const Tensor<T>& dY) {
  if (c.X.empty() || c.X.extent(1) != m.in_dim() || c.H.shape() != Shape{c.X.extent(0), m.hidden()} ||
      c.Y.shape() != Shape{c.X.extent(0), m.out_dim()}) {
    throw StateError("seq_backward: cache was not produced by this model");
  }
  require_shape(dY, c.Y.shape(), "seq_backward cotangent");
  Gradients<T> g;
  g.dW2 = matmul_tn(dY, c.Hp);
  const Tensor<T> dHp = matmul(dY, m.W2);
  const Segment whole{0, m.hidden(), m.activation};
  const Tensor<T> dH = segment_activate_backward(dHp, c.H, c.Hp, std::span<const Segment>(&whole, 1));
  g.dW1 = matmul_tn(dH, c.X);
  if (m.has_biases()) {
    g.db1 = column_sums(dH);
    g.db2 = column_sums(dY);
  }
  return g;
}

// p <- p - lr * g
template <typename T>
void sgd_step(Tensor<T>& p, const Tensor<T>& g, T lr) {
  if (p.shape() != g.shape()) {
    throw DimensionError("sgd_step: parameter shape " + shape_string(p.shape()) +
                         " != gradient shape " + shape_string(g.shape()));
  }
  T* pv = p.raw();
  const T* gv = g.raw();
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) pv[i] -= lr * gv[i];
}

namespace detail {
template <typename Params, typename T>
void sgd_step_params(Params& p, const Gradients<T>& g, T lr) {
  if (!(lr > T(0))) throw ConfigError("learning rate must be > 0");
  if (p.b1.has_value() != g.db1.has_value() || p.b2.has_value() != g.db2.has_value()) {
    throw DimensionError("sgd_step: bias presence differs between parameters and gradients");
  }
  sgd_step(p.W1, g.dW1, lr);
  sgd_step(p.W2, g.dW2, lr);
  if (p.b1) sgd_step(*p.b1, *g.db1, lr);
  if (p.b2) sgd_step(*p.b2, *g.db2, lr);
}
}  // namespace detail

template <typename T>
void sgd_step(SequentialMlp<T>& m, const Gradients<T>& g, T lr) {
  detail::sgd_step_params(m, g, lr);
}

}  // namespace mlpbank
