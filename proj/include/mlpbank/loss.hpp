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

// Per-model losses (MSE, softmax cross-entropy) and their gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "mlpbank/errors.hpp"
#include "mlpbank/tensor.hpp"

namespace mlpbank {

enum class LossKind { MSE, SoftmaxCrossEntropy };

inline const char* loss_name(LossKind k) { return k == LossKind::MSE ? "mse" : "xent"; }

namespace detail {

// Target of sample i as a distribution over outputs. T is either [b, out]
// (one-hot or soft rows) or [b] / [b, 1] class indices.
template <typename T>
struct TargetView {
  const Tensor<T>& t;
  std::size_t out;
  bool indices;

  TargetView(const Tensor<T>& targets, std::size_t batch, std::size_t out_dim, LossKind kind)
      : t(targets), out(out_dim), indices(false) {
    if (targets.empty() || targets.extent(0) != batch) {
      throw DimensionError("loss: target rows " + shape_string(targets.shape()) + " != batch " +
                           std::to_string(batch));
    }
    const bool full = targets.rank() == 2 && targets.extent(1) == out_dim;
    if (full) return;
    const bool idx = targets.rank() == 1 || (targets.rank() == 2 && targets.extent(1) == 1);
    if (kind == LossKind::SoftmaxCrossEntropy && idx) {
      indices = true;
      for (std::size_t i = 0; i < batch; ++i) {
        const T v = targets[i];
        if (!(v >= T(0)) || v >= static_cast<T>(out_dim) || v != std::floor(v)) {
          throw DataError("label index " + std::to_string(static_cast<double>(v)) + " at row " +
                          std::to_string(i) + " outside [0, " + std::to_string(out_dim) + ")");
        }
      }
      return;
    }
    throw DimensionError("loss: target shape " + shape_string(targets.shape()) + " does not match " +
                         std::to_string(out_dim) + " outputs");
  }

  T operator()(std::size_t i, std::size_t o) const {
    if (indices) return static_cast<std::size_t>(t[i]) == o ? T(1) : T(0);
    return t[i * out + o];
  }
};

// Loss of one model over a batch whose predictions sit at y[i * stride + o].
// Writes dL/dy with the same layout and returns L.
template <typename T>
T model_loss(const T* y, std::size_t stride, const TargetView<T>& target, std::size_t batch, std::size_t out,
             LossKind kind, T* dy) {
  if (kind == LossKind::MSE) {
    const T denom = static_cast<T>(batch * out);
    T sum = T(0);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t o = 0; o < out; ++o) {
        const T d = y[i * stride + o] - target(i, o);
        sum += d * d;
        dy[i * stride + o] = T(2) * d / denom;
      }
    }
    return sum / denom;
  }
  const T denom = static_cast<T>(batch);
  T sum = T(0);
  for (std::size_t i = 0; i < batch; ++i) {
    const T* yi = y + i * stride;
    T mx = yi[0];
    for (std::size_t o = 1; o < out; ++o) mx = std::max(mx, yi[o]);
    T z = T(0);
    for (std::size_t o = 0; o < out; ++o) z += std::exp(yi[o] - mx);
    const T logz = std::log(z) + mx;
    for (std::size_t o = 0; o < out; ++o) {
      const T p = std::exp(yi[o] - logz);
      const T t = target(i, o);
      sum -= t * (yi[o] - logz);
      dy[i * stride + o] = (p - t) / denom;
    }
  }
  return sum / denom;
}

}  // namespace detail

template <typename T>
struct BankLoss {
  Tensor<T> losses;  // [n_models]
  Tensor<T> dY;      // [batch, n_models, out]
};

// Per-model losses of a bank output. dY is the gradient of sum_m L_m, which
// for each model equals the gradient of its own loss.
template <typename T>
BankLoss<T> per_model_loss(const Tensor<T>& Y, const Tensor<T>& targets, LossKind kind) {
  require_rank(Y, 3, "per_model_loss predictions");
  const std::size_t b = Y.extent(0);
  const std::size_t nm = Y.extent(1);
  const std::size_t out = Y.extent(2);
  const detail::TargetView<T> tv(targets, b, out, kind);
  BankLoss<T> r{Tensor<T>({nm}), Tensor<T>(Y.shape())};
  for (std::size_t m = 0; m < nm; ++m) {
    r.losses[m] = detail::model_loss(Y.raw() + m * out, nm * out, tv, b, out, kind, r.dY.raw() + m * out);
  }
  return r;
}

template <typename T>
struct ModelLoss {
  T loss;
  Tensor<T> dY;  // [batch, out]
};

template <typename T>
ModelLoss<T> seq_loss(const Tensor<T>& Y, const Tensor<T>& targets, LossKind kind) {
  require_rank(Y, 2, "seq_loss predictions");
  const std::size_t b = Y.extent(0);
  const std::size_t out = Y.extent(1);
  const detail::TargetView<T> tv(targets, b, out, kind);
  ModelLoss<T> r{T(0), Tensor<T>(Y.shape())};
  r.loss = detail::model_loss(Y.raw(), out, tv, b, out, kind, r.dY.raw());
  return r;
}

}  // namespace mlpbank
