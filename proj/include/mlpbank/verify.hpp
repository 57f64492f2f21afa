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

// Self-verification suites run by `mlpbank verify`. Each suite compares the
// library against an independent oracle and reports its largest deviation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mlpbank/datagen.hpp"
#include "mlpbank/kernels.hpp"
#include "mlpbank/loss.hpp"
#include "mlpbank/model_bank.hpp"
#include "mlpbank/sequential.hpp"
#include "mlpbank/trainer.hpp"

namespace mlpbank {

struct SuiteResult {
  std::string name;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  std::size_t cases = 0;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  // Test hook: reassign the first neuron of model 1 to model 0 in the
  // independence suite's bank. The suite must then fail.
  bool corrupt_owner = false;
};

// Finite-difference step and the floor of the relative-error denominator,
// below which errors are measured absolutely.
inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTolerance = 1e-6;
inline constexpr double kGradFloor = 1e-3;

namespace verify_detail {

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
}

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (T& v : t.data()) v = static_cast<T>(u(gen));
  return t;
}

template <typename T>
std::vector<Tensor<T>*> params(FusedBank<T>& b) {
  std::vector<Tensor<T>*> p{&b.W1, &b.W2};
  if (b.b1) p.push_back(&*b.b1);
  if (b.b2) p.push_back(&*b.b2);
  return p;
}

template <typename T>
std::vector<Tensor<T>*> params(SequentialMlp<T>& m) {
  std::vector<Tensor<T>*> p{&m.W1, &m.W2};
  if (m.b1) p.push_back(&*m.b1);
  if (m.b2) p.push_back(&*m.b2);
  return p;
}

template <typename T>
std::vector<const Tensor<T>*> grads(const Gradients<T>& g) {
  std::vector<const Tensor<T>*> p{&g.dW1, &g.dW2};
  if (g.db1) p.push_back(&*g.db1);
  if (g.db2) p.push_back(&*g.db2);
  return p;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(double(a[i]) - double(b[i])));
  return d;
}

// Brute-force scatter-add over every source position in row-major order.
inline Tensor<double> scatter_oracle(std::size_t dim, const Tensor<double>& S, const IndexTensor& I,
                                     std::size_t extent) {
  Shape rs = S.shape();
  rs[dim] = extent;
  Tensor<double> R(rs);
  const std::size_t rank = S.rank();
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t pos = 0; pos < S.size(); ++pos) {
    std::size_t rem = pos;
    for (std::size_t d = rank; d-- > 0;) {
      idx[d] = rem % S.extent(d);
      rem /= S.extent(d);
    }
    idx[dim] = static_cast<std::size_t>(I[pos]);
    std::size_t dst = 0;
    for (std::size_t d = 0; d < rank; ++d) dst = dst * rs[d] + idx[d];
    R[dst] += S[pos];
  }
  return R;
}

// Sum over models of each model's loss on (X, T).
inline double total_loss(const FusedBank<double>& bank, const Tensor<double>& X, const Tensor<double>& T,
                         LossKind kind) {
  const auto l = per_model_loss(forward(bank, X).Y, T, kind);
  double s = 0.0;
  for (double v : l.losses.data()) s += v;
  return s;
}

inline double seq_total_loss(const SequentialMlp<double>& m, const Tensor<double>& X, const Tensor<double>& T,
                             LossKind kind) {
  return seq_loss(seq_forward(m, X).Y, T, kind).loss;
}

template <typename Model, typename LossFn, typename GradFn>
double fd_check(Model& model, LossFn loss, GradFn grad_fn, std::size_t& cases) {
  const Gradients<double> g = grad_fn(model);
  const auto ps = params(model);
  const auto gs = grads(g);
  double worst = 0.0;
  for (std::size_t t = 0; t < ps.size(); ++t) {
    for (std::size_t i = 0; i < ps[t]->size(); ++i) {
      double& p = (*ps[t])[i];
      const double saved = p;
      p = saved + kFdStep;
      const double up = loss(model);
      p = saved - kFdStep;
      const double down = loss(model);
      p = saved;
      worst = std::max(worst, rel_error((*gs[t])[i], (up - down) / (2.0 * kFdStep)));
      ++cases;
    }
  }
  return worst;
}

inline SuiteResult finish(SuiteResult r) {
  r.passed = r.max_deviation <= r.tolerance;
  return r;
}

}  // namespace verify_detail

inline SuiteResult verify_scatter(const VerifyOptions& opt) {
  using namespace verify_detail;
  SuiteResult r{"scatter", 0.0, 0.0, 0, false, ""};
  const Tensor<double> S({1, 6}, {1, 2, 3, 4, 5, 6});
  const IndexTensor I({1, 6}, {0, 1, 1, 2, 2, 2});
  const Tensor<double> expected({1, 3}, {1, 5, 15});
  r.max_deviation = max_abs_diff(scatter_add(1, S, I, 3), expected);
  const Tensor<double> back = scatter_add_backward(1, expected, I);
  r.max_deviation = std::max(r.max_deviation, max_abs_diff(back, Tensor<double>({1, 6}, {1, 5, 5, 15, 15, 15})));
  r.cases = 1;

  std::mt19937_64 gen(opt.seed);
  std::uniform_int_distribution<std::size_t> ext(1, 8);
  for (int c = 0; c < 1000; ++c) {
    const std::size_t rank = 2 + static_cast<std::size_t>(c % 2);
    Shape shape(rank);
    for (auto& e : shape) e = ext(gen);
    const std::size_t dim = std::uniform_int_distribution<std::size_t>(0, rank - 1)(gen);
    const std::size_t extent = ext(gen);
    // Mixed magnitudes so that accumulation order shows up in the low bits.
    Tensor<double> src(shape);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> scale(-20, 20);
    for (double& v : src.data()) v = std::ldexp(u(gen), scale(gen));
    IndexTensor idx(shape);
    std::uniform_int_distribution<std::int64_t> pick(0, static_cast<std::int64_t>(extent) - 1);
    for (auto& v : idx.data()) v = pick(gen);
    const Tensor<double> got = scatter_add(dim, src, idx, extent);
    const Tensor<double> want = scatter_oracle(dim, src, idx, extent);
    if (got != want) {
      r.max_deviation = std::max(r.max_deviation, std::max(max_abs_diff(got, want), 1e-300));
      if (r.detail.empty()) r.detail = "first mismatch at case " + std::to_string(c);
    }
    ++r.cases;
  }
  return finish(r);
}

// Every parameter gradient of the total loss of a 3-model bank (and of each
// standalone model) against central differences.
inline SuiteResult verify_gradients(const VerifyOptions& opt) {
  using namespace verify_detail;
  SuiteResult r{"gradcheck", 0.0, kGradTolerance, 0, false, ""};
  const std::vector<ModelSpec> specs = {{1, Activation::Sigmoid}, {2, Activation::ReLU}, {3, Activation::Mish}};
  std::mt19937_64 gen(opt.seed + 11);
  const Tensor<double> X = random_tensor<double>({4, 5}, gen);
  const Tensor<double> T = random_tensor<double>({4, 2}, gen);
  const IndexTensor dummy;
  for (bool biases : {false, true}) {
    for (LossKind kind : {LossKind::MSE, LossKind::SoftmaxCrossEntropy}) {
      const Tensor<double> target =
          kind == LossKind::MSE ? T : Tensor<double>({4}, {0, 1, 1, 0});
      auto bank = build_bank<double>(specs, 5, 2, {opt.seed, biases});
      auto loss = [&](const FusedBank<double>& b) { return total_loss(b, X, target, kind); };
      auto grad = [&](const FusedBank<double>& b) {
        const auto c = forward(b, X);
        return backward(b, c, per_model_loss(c.Y, target, kind).dY);
      };
      r.max_deviation = std::max(r.max_deviation, fd_check(bank, loss, grad, r.cases));
      for (std::size_t m = 0; m < specs.size(); ++m) {
        auto model = init_mlp<double>(specs[m], 5, 2, model_seed(opt.seed, m), biases);
        auto sl = [&](const SequentialMlp<double>& md) { return seq_total_loss(md, X, target, kind); };
        auto sg = [&](const SequentialMlp<double>& md) {
          const auto c = seq_forward(md, X);
          return seq_backward(md, c, seq_loss(c.Y, target, kind).dY);
        };
        r.max_deviation = std::max(r.max_deviation, fd_check(model, sl, sg, r.cases));
      }
    }
  }
  r.detail = "relative error, denominator floor " + std::to_string(kGradFloor);
  return finish(r);
}

// Bank forward slices against standalone models built from the same seeds.
inline SuiteResult verify_fusion(const VerifyOptions& opt) {
  using namespace verify_detail;
  SuiteResult r{"fusion", 0.0, 1e-12, 0, false, ""};
  std::mt19937_64 gen(opt.seed + 23);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(gen); };
  for (int c = 0; c < 50; ++c) {
    std::vector<ModelSpec> specs(pick(1, 8));
    for (auto& s : specs) s = {pick(1, 8), kAllActivations[pick(0, kAllActivations.size() - 1)]};
    const std::size_t in = pick(1, 6);
    const std::size_t out = pick(1, 4);
    const InitConfig init{gen(), pick(0, 1) == 1};
    const auto bank = build_bank<double>(specs, in, out, init);
    const Tensor<double> X = random_tensor<double>({pick(1, 6), in}, gen, -2.0, 2.0);
    for (ForwardPath path : {ForwardPath::Fused, ForwardPath::Materialized}) {
      const auto Y = forward(bank, X, path).Y;
      for (std::size_t m = 0; m < specs.size(); ++m) {
        const auto model = init_mlp<double>(specs[m], in, out, model_seed(init.seed, m), init.biases);
        const auto y = seq_forward(model, X).Y;
        for (std::size_t i = 0; i < X.extent(0); ++i) {
          for (std::size_t o = 0; o < out; ++o) {
            r.max_deviation = std::max(r.max_deviation, std::abs(Y(i, m, o) - y(i, o)));
          }
        }
      }
    }
    ++r.cases;
  }
  return finish(r);
}

// Fused and sequential training of 8 models over 5 epochs, both fused
// schedules, every parameter compared.
inline SuiteResult verify_trajectory(const VerifyOptions& opt) {
  using namespace verify_detail;
  SuiteResult r{"trajectory", 0.0, 1e-8, 0, false, ""};
  const std::vector<ModelSpec> specs = {{1, Activation::Identity}, {3, Activation::Sigmoid},
                                        {5, Activation::Tanh},     {8, Activation::ReLU},
                                        {2, Activation::ELU},      {7, Activation::SELU},
                                        {4, Activation::GELU},     {6, Activation::Mish}};
  const auto ds = synth_dataset<double>(200, 8, 2, opt.seed + 31);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 5;
  cfg.warmup_epochs = 0;
  cfg.lr = 0.01;
  cfg.seed = opt.seed;
  const InitConfig init{opt.seed + 37, true};
  const auto seq = train_sequential<double>(specs, ds, init, cfg);
  for (FusedSchedule schedule : {FusedSchedule::Tiled, FusedSchedule::Whole}) {
    cfg.schedule = schedule;
    auto bank = build_bank<double>(specs, 8, 2, init);
    train_fused(bank, ds, cfg);
    for (std::size_t m = 0; m < specs.size(); ++m) {
      auto fused = extract(bank, m);
      auto twin = seq.models[m];
      const auto a = params(fused);
      const auto b = params(twin);
      for (std::size_t t = 0; t < a.size(); ++t) r.max_deviation = std::max(r.max_deviation, max_abs_diff(*a[t], *b[t]));
      ++r.cases;
    }
  }
  return finish(r);
}

// Perturbs every parameter of every model by 0.1 and requires the outputs
// and gradients of all other models to stay bit-identical.
inline SuiteResult verify_independence(const VerifyOptions& opt) {
  using namespace verify_detail;
  SuiteResult r{"independence", 0.0, 0.0, 0, false, ""};
  const std::vector<ModelSpec> specs = {
      {2, Activation::Tanh}, {3, Activation::Tanh}, {1, Activation::ReLU}, {2, Activation::Mish}};
  auto base = build_bank<double>(specs, 3, 2, {opt.seed + 41, true});
  if (opt.corrupt_owner) {
    base.layout.owner[base.layout.model_slices[1].start] = 0;
    r.detail = "owner vector corrupted";
  }
  std::mt19937_64 gen(opt.seed + 43);
  const Tensor<double> X = random_tensor<double>({5, 3}, gen);
  const Tensor<double> T = random_tensor<double>({5, 2}, gen);
  const BankLayout& L = base.layout;

  for (ForwardPath path : {ForwardPath::Fused, ForwardPath::Materialized}) {
    const auto c0 = forward(base, X, path);
    const auto g0 = backward(base, c0, per_model_loss(c0.Y, T, LossKind::MSE).dY);
    for (std::size_t m = 0; m < specs.size(); ++m) {
      // Parameter positions owned by model m.
      std::vector<std::pair<std::size_t, std::size_t>> owned;  // (tensor, flat index)
      const auto [s, e] = L.model_slices[m];
      for (std::size_t h = s; h < e; ++h) {
        for (std::size_t k = 0; k < L.in_dim; ++k) owned.push_back({0, h * L.in_dim + k});
        for (std::size_t o = 0; o < L.out_dim; ++o) owned.push_back({1, o * L.hidden_total + h});
        owned.push_back({2, h});
      }
      for (std::size_t o = 0; o < L.out_dim; ++o) owned.push_back({3, m * L.out_dim + o});

      for (const auto& [t, idx] : owned) {
        auto bank = base;
        (*params(bank)[t])[idx] += 0.1;
        const auto c = forward(bank, X, path);
        const auto g = backward(bank, c, per_model_loss(c.Y, T, LossKind::MSE).dY);
        for (std::size_t mo = 0; mo < specs.size(); ++mo) {
          if (mo == m) continue;
          for (std::size_t i = 0; i < X.extent(0); ++i) {
            for (std::size_t o = 0; o < L.out_dim; ++o) {
              r.max_deviation = std::max(r.max_deviation, std::abs(c.Y(i, mo, o) - c0.Y(i, mo, o)));
            }
          }
          const auto [s2, e2] = L.model_slices[mo];
          for (std::size_t h = s2; h < e2; ++h) {
            for (std::size_t k = 0; k < L.in_dim; ++k) {
              r.max_deviation = std::max(r.max_deviation, std::abs(g.dW1(h, k) - g0.dW1(h, k)));
            }
            for (std::size_t o = 0; o < L.out_dim; ++o) {
              r.max_deviation = std::max(r.max_deviation, std::abs(g.dW2(o, h) - g0.dW2(o, h)));
            }
          }
        }
        ++r.cases;
      }
    }
  }
  return finish(r);
}

struct VerifyReport {
  std::vector<SuiteResult> suites;

  [[nodiscard]] bool passed() const {
    return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
  }

  void print(std::ostream& os) const {
    for (const SuiteResult& s : suites) {
      char line[256];
      std::snprintf(line, sizeof line, "%-13s %s  max deviation %.3e  tolerance %.1e  cases %zu", s.name.c_str(),
                    s.passed ? "PASS" : "FAIL", s.max_deviation, s.tolerance, s.cases);
      os << line;
      if (!s.detail.empty()) os << "  (" << s.detail << ")";
      os << '\n';
    }
    os << (passed() ? "all suites passed" : "verification FAILED") << '\n';
  }
};

inline VerifyReport run_verify(const VerifyOptions& opt = {}) {
  VerifyReport r;
  r.suites.push_back(verify_scatter(opt));
  r.suites.push_back(verify_gradients(opt));
  r.suites.push_back(verify_fusion(opt));
  r.suites.push_back(verify_trajectory(opt));
  r.suites.push_back(verify_independence(opt));
  return r;
}

}  // namespace mlpbank
