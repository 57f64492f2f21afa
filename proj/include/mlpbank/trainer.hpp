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

// Mini-batch SGD loops for the fused bank and for the one-model-at-a-time
// baseline, plus the epoch timing protocol (warm-up epochs timed but not
// averaged).

#include <algorithm>
#include <atomic>
#include <exception>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <mutex>
#include <thread>
#include <vector>

#include "mlpbank/datagen.hpp"
#include "mlpbank/errors.hpp"
#include "mlpbank/fused_step.hpp"
#include "mlpbank/loss.hpp"
#include "mlpbank/model_bank.hpp"
#include "mlpbank/sequential.hpp"
#include "mlpbank/tensor.hpp"

namespace mlpbank {

enum class FusedSchedule { Tiled, Whole };

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 12;
  std::size_t warmup_epochs = 2;
  double lr = 0.01;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::MSE;
  bool drop_last = false;
  // Tiled runs the cache-blocked step; Whole runs forward, loss, backward
  // and SGD over the whole bank with `path`. Both give identical parameters.
  FusedSchedule schedule = FusedSchedule::Tiled;
  ForwardPath path = ForwardPath::Fused;
  // Opt-in: train disjoint models of the sequential strategy on this many
  // threads. 1 is the one-model-at-a-time protocol.
  int sequential_threads = 1;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (warmup_epochs >= epochs) {
      throw ConfigError("warmup_epochs (" + std::to_string(warmup_epochs) + ") must be < epochs (" +
                        std::to_string(epochs) + ")");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a positive number");
    if (sequential_threads < 1) throw ConfigError("sequential_threads must be >= 1");
  }
};

struct EpochTiming {
  std::vector<double> seconds;  // every epoch, warm-up included
  std::size_t warmup = 0;

  [[nodiscard]] std::size_t counted() const { return seconds.size() > warmup ? seconds.size() - warmup : 0; }

  [[nodiscard]] double mean() const {
    if (counted() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t e = warmup; e < seconds.size(); ++e) s += seconds[e];
    return s / static_cast<double>(counted());
  }

  // Sample standard deviation over the counted epochs.
  [[nodiscard]] double stddev() const {
    const std::size_t n = counted();
    if (n < 2) return 0.0;
    const double mu = mean();
    double s = 0.0;
    for (std::size_t e = warmup; e < seconds.size(); ++e) s += (seconds[e] - mu) * (seconds[e] - mu);
    return std::sqrt(s / static_cast<double>(n - 1));
  }
};

// Seeded permutation of [0, n) cut into consecutive batches.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n_samples, std::size_t batch_size,
                                                           std::uint64_t seed, bool drop_last) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  std::vector<std::size_t> perm(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) perm[i] = i;
  std::mt19937_64 gen(seed);
  for (std::size_t i = n_samples - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(gen() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < n_samples; s += batch_size) {
    const std::size_t e = std::min(n_samples, s + batch_size);
    if (drop_last && e - s < batch_size) break;
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(s), perm.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return batches;
}

// Shuffle seed of one epoch; identical for both strategies.
inline std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& A, std::span<const std::size_t> rows) {
  require_rank(A, 2, "gather_rows");
  const std::size_t w = A.extent(1);
  Tensor<T> out({rows.size(), w});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= A.extent(0)) throw IndexError("gather_rows: row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(A.raw() + rows[r] * w, w, out.raw() + r * w);
  }
  return out;
}

namespace detail {

template <typename T>
void check_dataset(const Dataset<T>& ds, std::size_t in_dim, std::size_t out_dim) {
  if (ds.n_features() != in_dim) {
    throw DataError("dataset has " + std::to_string(ds.n_features()) + " features but the models take " +
                    std::to_string(in_dim) + " inputs");
  }
  if (ds.n_outputs() != out_dim) {
    throw DataError("dataset has " + std::to_string(ds.n_outputs()) + " target columns but the models have " +
                    std::to_string(out_dim) + " outputs");
  }
}

inline constexpr std::size_t kEvalChunk = 256;

}  // namespace detail

// Full-dataset loss of every model, in sample order, evaluated in chunks.
template <typename T>
std::vector<T> evaluate_losses(const FusedBank<T>& bank, const Dataset<T>& ds, LossKind kind) {
  detail::check_dataset(ds, bank.layout.in_dim, bank.layout.out_dim);
  const std::size_t n = ds.n_samples();
  const std::size_t nm = bank.n_models();
  std::vector<T> sums(nm, T(0));
  std::vector<std::size_t> rows;
  for (std::size_t s = 0; s < n; s += detail::kEvalChunk) {
    rows.clear();
    for (std::size_t i = s; i < std::min(n, s + detail::kEvalChunk); ++i) rows.push_back(i);
    const auto c = forward(bank, gather_rows(ds.X, rows));
    const auto l = per_model_loss(c.Y, gather_rows(ds.targets, rows), kind);
    const T w = static_cast<T>(rows.size());
    for (std::size_t m = 0; m < nm; ++m) sums[m] += l.losses[m] * w;
  }
  for (T& v : sums) v /= static_cast<T>(n);
  return sums;
}

template <typename T>
T evaluate_loss(const SequentialMlp<T>& model, const Dataset<T>& ds, LossKind kind) {
  detail::check_dataset(ds, model.in_dim(), model.out_dim());
  const std::size_t n = ds.n_samples();
  T sum = T(0);
  std::vector<std::size_t> rows;
  for (std::size_t s = 0; s < n; s += detail::kEvalChunk) {
    rows.clear();
    for (std::size_t i = s; i < std::min(n, s + detail::kEvalChunk); ++i) rows.push_back(i);
    const auto c = seq_forward(model, gather_rows(ds.X, rows));
    sum += seq_loss(c.Y, gather_rows(ds.targets, rows), kind).loss * static_cast<T>(rows.size());
  }
  return sum / static_cast<T>(n);
}

template <typename T>
struct FusedTrainResult {
  EpochTiming timing;
  std::vector<T> final_losses;  // full-dataset loss per model after training
};

template <typename T>
struct SequentialTrainResult {
  std::vector<SequentialMlp<T>> models;
  EpochTiming timing;  // epoch e = sum over models of their epoch-e durations
  std::vector<T> final_losses;
};

using Clock = std::chrono::steady_clock;

// forward -> per-model loss -> backward -> SGD for every batch. Each epoch is
// timed end to end, batch construction included.
template <typename T>
FusedTrainResult<T> train_fused(FusedBank<T>& bank, const Dataset<T>& ds, const TrainConfig& cfg) {
  cfg.validate();
  detail::check_dataset(ds, bank.layout.in_dim, bank.layout.out_dim);
  const T lr = static_cast<T>(cfg.lr);
  FusedTrainResult<T> r;
  r.timing.warmup = cfg.warmup_epochs;
  std::optional<FusedStepper<T>> stepper;
  if (cfg.schedule == FusedSchedule::Tiled) stepper.emplace(bank);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto t0 = Clock::now();
    const auto batches = make_batches(ds.n_samples(), cfg.batch_size, epoch_seed(cfg.seed, e), cfg.drop_last);
    for (const auto& rows : batches) {
      const Tensor<T> xb = gather_rows(ds.X, rows);
      const Tensor<T> tb = gather_rows(ds.targets, rows);
      if (cfg.schedule == FusedSchedule::Tiled) {
        stepper->step(xb, tb, cfg.loss, lr);
        continue;
      }
      const auto cache = forward(bank, xb, cfg.path);
      const auto loss = per_model_loss(cache.Y, tb, cfg.loss);
      const auto grads = backward(bank, cache, loss.dY);
      sgd_step(bank, grads, lr);
    }
    r.timing.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  if (stepper) stepper->sync();
  r.final_losses = evaluate_losses(bank, ds, cfg.loss);
  return r;
}

namespace detail {

template <typename T>
void train_one(SequentialMlp<T>& model, const Dataset<T>& ds, const TrainConfig& cfg, std::vector<double>& seconds) {
  const T lr = static_cast<T>(cfg.lr);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto t0 = Clock::now();
    const auto batches = make_batches(ds.n_samples(), cfg.batch_size, epoch_seed(cfg.seed, e), cfg.drop_last);
    for (const auto& rows : batches) {
      const Tensor<T> xb = gather_rows(ds.X, rows);
      const Tensor<T> tb = gather_rows(ds.targets, rows);
      const auto cache = seq_forward(model, xb);
      const auto loss = seq_loss(cache.Y, tb, cfg.loss);
      const auto grads = seq_backward(model, cache, loss.dY);
      sgd_step(model, grads, lr);
    }
    seconds[e] += std::chrono::duration<double>(Clock::now() - t0).count();
  }
}

}  // namespace detail

// Trains each model to completion before starting the next, with the same
// per-model seeds and batch sequence as train_fused.
template <typename T>
SequentialTrainResult<T> train_sequential(std::span<const ModelSpec> specs, const Dataset<T>& ds,
                                          const InitConfig& init, const TrainConfig& cfg) {
  cfg.validate();
  if (specs.empty()) throw BuildError("no models to train");
  SequentialTrainResult<T> r;
  r.timing.warmup = cfg.warmup_epochs;
  r.timing.seconds.assign(cfg.epochs, 0.0);
  r.models.reserve(specs.size());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    r.models.push_back(init_mlp<T>(specs[m], ds.n_features(), ds.n_outputs(), model_seed(init.seed, m), init.biases));
  }
  if (cfg.sequential_threads <= 1) {
    for (auto& model : r.models) detail::train_one(model, ds, cfg, r.timing.seconds);
  } else {
    // Per-thread timing buffers; epoch durations are summed like the
    // single-threaded protocol, so they measure work, not wall-clock.
    const auto nt = static_cast<std::size_t>(cfg.sequential_threads);
    std::vector<std::vector<double>> secs(nt, std::vector<double>(cfg.epochs, 0.0));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (std::size_t t = 0; t < nt; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t m = next++; m < r.models.size(); m = next++) {
            detail::train_one(r.models[m], ds, cfg, secs[t]);
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    for (const auto& s : secs) {
      for (std::size_t e = 0; e < cfg.epochs; ++e) r.timing.seconds[e] += s[e];
    }
  }
  r.final_losses.reserve(r.models.size());
  for (const auto& model : r.models) r.final_losses.push_back(evaluate_loss(model, ds, cfg.loss));
  return r;
}

}  // namespace mlpbank
