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

// Trains a bank of 128 candidate models on one dataset and picks the best.
//
//   model_selection [spec.json]

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "mlpbank/mlpbank.hpp"

using namespace mlpbank;

int main(int argc, char** argv) {
  BankSpec spec;
  if (argc > 1) {
    std::ifstream in(argv[1]);
    spec = read_bank_spec(in, argv[1]);
  } else {
    spec = parse_grid_expr("1-16:relu,tanh,gelu,mish:2");
    spec.in_dim = 10;
    spec.biases = true;
    spec.seed = 7;
  }
  const std::size_t in_dim = spec.in_dim.value_or(10);
  const auto ds = synth_dataset<float>(1000, in_dim, spec.out_dim, /*seed=*/3);

  auto bank = build_bank<float>(spec.specs(), in_dim, spec.out_dim, spec.init());
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.warmup_epochs = 0;
  const auto result = train_fused(bank, ds, cfg);

  std::vector<std::size_t> order(spec.n_models());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return result.final_losses[a] < result.final_losses[b]; });

  std::printf("%zu models, %zu hidden neurons, %.4f s per epoch\n", spec.n_models(), bank.layout.hidden_total,
              result.timing.mean());
  for (std::size_t r = 0; r < 5 && r < order.size(); ++r) {
    const auto at = spec.coordinates(order[r]);
    std::printf("%zu. model %zu  width %zu  %s  repeat %zu  loss %.6f\n", r + 1, order[r], at.width,
                std::string(activation_name(at.activation)).c_str(), at.repeat, result.final_losses[order[r]]);
  }

  // The winner as a standalone network.
  const SequentialMlp<float> best = extract(bank, order.front());
  const auto y = seq_forward(best, ds.X).Y;
  std::printf("best model output[0] = (%.6f, %.6f)\n", y(0, 0), y(0, 1));
  return 0;
}
