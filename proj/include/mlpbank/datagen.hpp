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

// Seeded synthetic datasets for the timing grid. Targets come from a fixed
// random teacher MLP so the data carries a learnable signal.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mlpbank/errors.hpp"
#include "mlpbank/sequential.hpp"
#include "mlpbank/tensor.hpp"

namespace mlpbank {

enum class Task { Regression, Classification };

inline const char* task_name(Task t) { return t == Task::Regression ? "regression" : "classification"; }

template <typename T>
struct Dataset {
  Tensor<T> X;  // [n_samples, n_features]
  Tensor<T> targets;  // [n_samples, n_outputs]; one-hot rows for classification
  Task task = Task::Regression;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t n_samples() const { return X.extent(0); }
  [[nodiscard]] std::size_t n_features() const { return X.extent(1); }
  [[nodiscard]] std::size_t n_outputs() const { return targets.extent(1); }
};

inline constexpr std::size_t kTeacherHidden = 8;
inline constexpr double kTeacherNoiseStd = 0.01;

// The teacher is a tanh MLP with N(0, 1/fan_in) weights and biases drawn
// first from the dataset's stream.
inline SequentialMlp<double> make_teacher(std::size_t n_features, std::size_t n_outputs, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  SequentialMlp<double> t;
  t.activation = Activation::Tanh;
  t.W1 = Tensor<double>({kTeacherHidden, n_features});
  const double s1 = 1.0 / std::sqrt(static_cast<double>(n_features));
  for (double& v : t.W1.data()) v = normal(gen) * s1;
  t.b1 = Tensor<double>({kTeacherHidden});
  for (double& v : t.b1->data()) v = normal(gen) * 0.1;
  t.W2 = Tensor<double>({n_outputs, kTeacherHidden});
  const double s2 = 1.0 / std::sqrt(static_cast<double>(kTeacherHidden));
  for (double& v : t.W2.data()) v = normal(gen) * s2;
  t.b2 = Tensor<double>({n_outputs});
  return t;
}

// X ~ N(0, 1). Regression targets are teacher(X) + N(0, 0.01^2); classification
// targets are the one-hot argmax of the teacher's outputs.
template <typename T>
Dataset<T> synth_dataset(std::size_t n_samples, std::size_t n_features, std::size_t n_outputs,
                         std::uint64_t seed, Task task = Task::Regression) {
  if (n_samples == 0 || n_features == 0 || n_outputs == 0) {
    throw ConfigError("dataset counts must be >= 1 (samples=" + std::to_string(n_samples) +
                      ", features=" + std::to_string(n_features) + ", outputs=" + std::to_string(n_outputs) +
                      ")");
  }
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const SequentialMlp<double> teacher = make_teacher(n_features, n_outputs, gen);

  Dataset<T> ds;
  ds.task = task;
  ds.seed = seed;
  ds.X = Tensor<T>({n_samples, n_features});
  for (T& v : ds.X.data()) v = static_cast<T>(normal(gen));

  const Tensor<double> logits = seq_forward(teacher, cast<double>(ds.X)).Y;
  ds.targets = Tensor<T>({n_samples, n_outputs});
  for (std::size_t i = 0; i < n_samples; ++i) {
    if (task == Task::Regression) {
      for (std::size_t o = 0; o < n_outputs; ++o) {
        ds.targets(i, o) = static_cast<T>(logits(i, o) + kTeacherNoiseStd * normal(gen));
      }
    } else {
      std::size_t best = 0;
      for (std::size_t o = 1; o < n_outputs; ++o) {
        if (logits(i, o) > logits(i, best)) best = o;
      }
      ds.targets(i, best) = T(1);
    }
  }
  return ds;
}

// Header "x0,...,x{f-1},t0,...,t{o-1}", then one sample per line.
template <typename T>
void write_csv(const Dataset<T>& ds, std::ostream& os) {
  const std::size_t f = ds.n_features();
  const std::size_t o = ds.n_outputs();
  for (std::size_t j = 0; j < f; ++j) os << (j ? "," : "") << 'x' << j;
  for (std::size_t j = 0; j < o; ++j) os << ",t" << j;
  os << '\n';
  os << std::setprecision(std::numeric_limits<T>::max_digits10);
  for (std::size_t i = 0; i < ds.n_samples(); ++i) {
    for (std::size_t j = 0; j < f; ++j) os << (j ? "," : "") << ds.X(i, j);
    for (std::size_t j = 0; j < o; ++j) os << ',' << ds.targets(i, j);
    os << '\n';
  }
}

template <typename T>
Dataset<T> read_csv(std::istream& is, Task task = Task::Regression) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("csv line 1: missing header");
  std::size_t f = 0;
  std::size_t o = 0;
  {
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (!col.empty() && col.back() == '\r') col.pop_back();
      if (col.size() >= 2 && col[0] == 'x' && o == 0) {
        ++f;
      } else if (col.size() >= 2 && col[0] == 't') {
        ++o;
      } else {
        throw ParseError("csv line 1: unexpected header column '" + col +
                         "' (features x*, then targets t*)");
      }
    }
  }
  if (f == 0 || o == 0) throw ParseError("csv line 1: need at least one x and one t column");
  std::vector<T> xs;
  std::vector<T> ts;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ls, cell, ',')) {
      double v = 0;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("csv line " + std::to_string(lineno) + ", column " + std::to_string(col + 1) +
                         ": not a number: '" + cell + "'");
      }
      (col < f ? xs : ts).push_back(static_cast<T>(v));
      ++col;
    }
    if (col != f + o) {
      throw ParseError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(f + o) +
                       " columns, got " + std::to_string(col));
    }
  }
  const std::size_t n = xs.size() / f;
  if (n == 0) throw ParseError("csv: no samples");
  Dataset<T> ds;
  ds.task = task;
  ds.X = Tensor<T>({n, f}, std::move(xs));
  ds.targets = Tensor<T>({n, o}, std::move(ts));
  return ds;
}

}  // namespace mlpbank
