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

// Benchmark grid runner. Every cell gets its own seeded dataset; both
// strategies see the same dataset, per-model seeds and batch sequence.

#include <cstddef>
#include <functional>
#include <new>
#include <string>
#include <vector>

#include "mlpbank/bank_spec.hpp"
#include "mlpbank/datagen.hpp"
#include "mlpbank/parallel.hpp"
#include "mlpbank/report.hpp"
#include "mlpbank/trainer.hpp"

namespace mlpbank {

inline const std::vector<std::size_t> kDeskSamples = {100, 1000};
inline const std::vector<std::size_t> kDeskFeatures = {5, 10};
inline const std::vector<std::size_t> kDeskBatches = {32, 256};
inline constexpr const char* kDeskModels = "1-100:all:1";

inline const std::vector<std::size_t> kPaperSamples = {100, 1000, 10000};
inline const std::vector<std::size_t> kPaperFeatures = {5, 10, 50, 100};
inline const std::vector<std::size_t> kPaperBatches = {32, 128, 256};
inline constexpr const char* kPaperModels = "1-100:all:10";

struct BenchOptions {
  std::vector<std::size_t> samples = kDeskSamples;
  std::vector<std::size_t> features = kDeskFeatures;
  std::vector<std::size_t> batch_sizes = kDeskBatches;
  BankSpec models = parse_grid_expr(kDeskModels);
  std::string models_source = kDeskModels;
  TrainConfig train;  // batch_size is overridden per cell
  Strategy strategy = Strategy::Both;
  int threads = 1;
  std::uint64_t data_seed = 0;
};

// Called after each cell completes, e.g. for progress output.
using CellCallback = std::function<void(const BenchCell&)>;

template <typename T>
BenchCell run_cell(const BenchOptions& opt, const CellKey& key) {
  BenchCell cell{key, std::nullopt, std::nullopt};
  const Task task = opt.train.loss == LossKind::MSE ? Task::Regression : Task::Classification;
  try {
    const Dataset<T> ds =
        synth_dataset<T>(key.n_samples, key.n_features, opt.models.out_dim, opt.data_seed, task);
    TrainConfig cfg = opt.train;
    cfg.batch_size = key.batch_size;
    const auto specs = opt.models.specs();
    if (runs_parallel(opt.strategy)) {
      auto bank = build_bank<T>(specs, key.n_features, opt.models.out_dim, opt.models.init());
      cell.parallel = train_fused(bank, ds, cfg).timing;
    }
    if (runs_sequential(opt.strategy)) {
      cell.sequential = train_sequential<T>(specs, ds, opt.models.init(), cfg).timing;
    }
  } catch (const std::bad_alloc&) {
    throw Error("out of memory in cell " + cell_name(key) + " with " + std::to_string(opt.models.n_models()) +
                " models; reduce the model grid or the sample count");
  }
  return cell;
}

template <typename T>
BenchReport run_bench(const BenchOptions& opt, const CellCallback& on_cell = {}) {
  opt.train.validate();
  if (opt.samples.empty() || opt.features.empty() || opt.batch_sizes.empty()) {
    throw ConfigError("bench grid needs at least one sample count, feature count and batch size");
  }
  set_threads(opt.threads);
  BenchReport r;
  r.meta.n_models = opt.models.n_models();
  for (const ModelSpec& s : opt.models.specs()) r.meta.hidden_total += s.hidden;
  r.meta.models = opt.models_source;
  r.meta.dtype = dtype_name(dtype_of<T>());
  r.meta.threads = threads();
  r.meta.epochs = opt.train.epochs;
  r.meta.warmup = opt.train.warmup_epochs;
  r.meta.lr = opt.train.lr;
  r.meta.loss = loss_name(opt.train.loss);
  r.meta.seed = opt.models.seed;
  for (std::size_t n : opt.samples) {
    for (std::size_t f : opt.features) {
      for (std::size_t b : opt.batch_sizes) {
        r.cells.push_back(run_cell<T>(opt, CellKey{n, f, b}));
        if (on_cell) on_cell(r.cells.back());
      }
    }
  }
  return r;
}

}  // namespace mlpbank
