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

// The fused bank: N independent single-hidden-layer MLPs stored as one.
//
// Hidden neurons of all models are concatenated along one axis (model m owns
// the contiguous slice [start_m, end_m)), so the input projection is a single
// matmul. The output projection is the modified matrix multiplication: a
// broadcast element-wise product followed by a scatter-add keyed by the owner
// of each hidden neuron, which keeps every model's outputs, and therefore its
// gradients, separate.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlpbank/activation.hpp"
#include "mlpbank/errors.hpp"
#include "mlpbank/kernels.hpp"
#include "mlpbank/model_spec.hpp"
#include "mlpbank/parallel.hpp"
#include "mlpbank/sequential.hpp"
#include "mlpbank/tensor.hpp"

namespace mlpbank {

struct ModelSlice {
  std::size_t start = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const { return end - start; }
  bool operator==(const ModelSlice&) const = default;
};

struct BankLayout {
  std::size_t n_models = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t hidden_total = 0;
  std::vector<std::int64_t> owner;         // owner[h] = model id of hidden neuron h
  std::vector<Segment> segments;           // maximal same-activation runs
  std::vector<ModelSlice> model_slices;    // hidden range of each model
  std::vector<Activation> model_activations;

  static BankLayout build(std::span<const ModelSpec> specs, std::size_t in_dim, std::size_t out_dim) {
    if (specs.empty()) throw BuildError("bank needs at least one model spec");
    if (in_dim == 0 || out_dim == 0) throw BuildError("in_dim and out_dim must be >= 1");
    BankLayout l;
    l.n_models = specs.size();
    l.in_dim = in_dim;
    l.out_dim = out_dim;
    l.model_slices.reserve(specs.size());
    l.model_activations.reserve(specs.size());
    for (std::size_t m = 0; m < specs.size(); ++m) {
      if (specs[m].hidden == 0) {
        throw BuildError("model " + std::to_string(m) + " has a zero-width hidden layer");
      }
      l.model_slices.push_back({l.hidden_total, l.hidden_total + specs[m].hidden});
      l.model_activations.push_back(specs[m].activation);
      l.hidden_total += specs[m].hidden;
    }
    l.owner.resize(l.hidden_total);
    for (std::size_t m = 0; m < l.n_models; ++m) {
      const auto& s = l.model_slices[m];
      std::fill(l.owner.begin() + static_cast<std::ptrdiff_t>(s.start),
                l.owner.begin() + static_cast<std::ptrdiff_t>(s.end), static_cast<std::int64_t>(m));
      if (!l.segments.empty() && l.segments.back().activation == specs[m].activation) {
        l.segments.back().end = s.end;
      } else {
        l.segments.push_back({s.start, s.end, specs[m].activation});
      }
    }
    return l;
  }

  [[nodiscard]] std::size_t fused_output_count() const { return n_models * out_dim; }

  [[nodiscard]] ModelSpec spec(std::size_t m) const {
    return {model_slices.at(m).size(), model_activations.at(m)};
  }

  void validate() const {
    if (n_models == 0 || model_slices.size() != n_models || model_activations.size() != n_models) {
      throw LayoutError("layout model count is inconsistent");
    }
    if (owner.size() != hidden_total) throw LayoutError("owner vector length != hidden_total");
    std::size_t cursor = 0;
    for (std::size_t m = 0; m < n_models; ++m) {
      const auto& s = model_slices[m];
      if (s.start != cursor || s.end <= s.start) {
        throw LayoutError("model " + std::to_string(m) + " slice is not contiguous");
      }
      for (std::size_t h = s.start; h < s.end; ++h) {
        if (owner[h] != static_cast<std::int64_t>(m)) {
          throw LayoutError("owner[" + std::to_string(h) + "] = " + std::to_string(owner[h]) +
                            " but neuron lies in model " + std::to_string(m) + "'s slice");
        }
      }
      cursor = s.end;
    }
    if (cursor != hidden_total) throw LayoutError("model slices do not cover the hidden axis");
    validate_segments(segments, hidden_total);
    for (const Segment& seg : segments) {
      for (std::size_t h = seg.start; h < seg.end; ++h) {
        if (model_activations[static_cast<std::size_t>(owner[h])] != seg.activation) {
          throw LayoutError("segment activation disagrees with model " + std::to_string(owner[h]));
        }
      }
    }
  }

  // The index matrix I[o, h] = owner[h] for one sample.
  [[nodiscard]] IndexTensor index_matrix() const {
    IndexTensor I({out_dim, hidden_total});
    for (std::size_t o = 0; o < out_dim; ++o) std::copy(owner.begin(), owner.end(), I.row(o).begin());
    return I;
  }

  // The index tensor I[b, o, h] = owner[h] used by the scatter-add step.
  [[nodiscard]] IndexTensor index_tensor(std::size_t batch) const {
    IndexTensor I({batch, out_dim, hidden_total});
    std::int64_t* dst = I.raw();
    for (std::size_t r = 0; r < batch * out_dim; ++r) {
      std::copy(owner.begin(), owner.end(), dst + r * hidden_total);
    }
    return I;
  }

  bool operator==(const BankLayout&) const = default;
};

template <typename T>
struct FusedBank {
  BankLayout layout;
  Tensor<T> W1;                 // [hidden_total, in]
  Tensor<T> W2;                 // [out, hidden_total]
  std::optional<Tensor<T>> b1;  // [hidden_total]
  std::optional<Tensor<T>> b2;  // [n_models, out]

  [[nodiscard]] bool has_biases() const { return b1.has_value(); }
  [[nodiscard]] std::size_t n_models() const { return layout.n_models; }

  void validate() const {
    layout.validate();
    require_shape(W1, {layout.hidden_total, layout.in_dim}, "bank W1");
    require_shape(W2, {layout.out_dim, layout.hidden_total}, "bank W2");
    if (b1.has_value() != b2.has_value()) throw BuildError("bank biases must be all or none");
    if (b1) require_shape(*b1, {layout.hidden_total}, "bank b1");
    if (b2) require_shape(*b2, {layout.n_models, layout.out_dim}, "bank b2");
  }

  bool operator==(const FusedBank&) const = default;
};

// Concatenates standalone models into one bank, in the given order.
template <typename T>
FusedBank<T> fuse(std::span<const SequentialMlp<T>> models) {
  if (models.empty()) throw BuildError("cannot fuse an empty model list");
  std::vector<ModelSpec> specs;
  specs.reserve(models.size());
  const std::size_t in = models[0].in_dim();
  const std::size_t out = models[0].out_dim();
  const bool biases = models[0].has_biases();
  for (std::size_t m = 0; m < models.size(); ++m) {
    models[m].validate();
    if (models[m].in_dim() != in || models[m].out_dim() != out || models[m].has_biases() != biases) {
      throw BuildError("model " + std::to_string(m) + " does not match the bank's in/out dims or biases");
    }
    specs.push_back({models[m].hidden(), models[m].activation});
  }
  FusedBank<T> bank;
  bank.layout = BankLayout::build(specs, in, out);
  const std::size_t htot = bank.layout.hidden_total;
  bank.W1 = Tensor<T>({htot, in});
  bank.W2 = Tensor<T>({out, htot});
  if (biases) {
    bank.b1 = Tensor<T>({htot});
    bank.b2 = Tensor<T>({models.size(), out});
  }
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& src = models[m];
    const auto [start, end] = bank.layout.model_slices[m];
    std::copy(src.W1.data().begin(), src.W1.data().end(), bank.W1.row(start).begin());
    for (std::size_t o = 0; o < out; ++o) {
      const auto r = src.W2.row(o);
      std::copy(r.begin(), r.end(), bank.W2.row(o).begin() + static_cast<std::ptrdiff_t>(start));
    }
    if (biases) {
      std::copy(src.b1->data().begin(), src.b1->data().end(),
                bank.b1->data().begin() + static_cast<std::ptrdiff_t>(start));
      std::copy(src.b2->data().begin(), src.b2->data().end(), bank.b2->row(m).begin());
    }
    (void)end;
  }
  return bank;
}

// Model m is initialized exactly like init_mlp(spec[m], ..., model_seed(seed, m)).
template <typename T>
FusedBank<T> build_bank(std::span<const ModelSpec> specs, std::size_t in_dim, std::size_t out_dim,
                        const InitConfig& init) {
  // Validate first so a bad list fails before any allocation.
  (void)BankLayout::build(specs, in_dim, out_dim);
  std::vector<SequentialMlp<T>> models;
  models.reserve(specs.size());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    models.push_back(init_mlp<T>(specs[m], in_dim, out_dim, model_seed(init.seed, m), init.biases));
  }
  return fuse<T>(models);
}

template <typename T>
SequentialMlp<T> extract(const FusedBank<T>& bank, std::size_t model_id) {
  if (model_id >= bank.layout.n_models) {
    throw IndexError("model id " + std::to_string(model_id) + " outside [0, " +
                     std::to_string(bank.layout.n_models) + ")");
  }
  const auto [start, end] = bank.layout.model_slices[model_id];
  const std::size_t h = end - start;
  const std::size_t in = bank.layout.in_dim;
  const std::size_t out = bank.layout.out_dim;
  SequentialMlp<T> m;
  m.activation = bank.layout.model_activations[model_id];
  const auto w1 = bank.W1.data().subspan(start * in, h * in);
  m.W1 = Tensor<T>({h, in}, std::vector<T>(w1.begin(), w1.end()));
  m.W2 = Tensor<T>({out, h});
  for (std::size_t o = 0; o < out; ++o) {
    const auto r = bank.W2.row(o).subspan(start, h);
    std::copy(r.begin(), r.end(), m.W2.row(o).begin());
  }
  if (bank.has_biases()) {
    const auto b1 = bank.b1->data().subspan(start, h);
    m.b1 = Tensor<T>({h}, std::vector<T>(b1.begin(), b1.end()));
    const auto b2 = bank.b2->row(model_id);
    m.b2 = Tensor<T>({out}, std::vector<T>(b2.begin(), b2.end()));
  }
  return m;
}

// Fused: per-model segment reduction without materializing S.
// Materialized: S = H' (x) W2 broadcast, then scatter_add by owner. Both give
// identical results; Materialized needs batch*out*hidden_total extra scalars.
enum class ForwardPath { Fused, Materialized };

template <typename T>
struct BankCache {
  Tensor<T> X;               // [batch, in]
  Tensor<T> H;               // [batch, hidden_total], pre-activation
  Tensor<T> Hp;              // [batch, hidden_total], post-activation
  std::optional<Tensor<T>> S;  // [batch, out, hidden_total], Materialized only
  Tensor<T> Y;               // [batch, n_models, out]
  ForwardPath path = ForwardPath::Fused;
};

namespace detail {

template <typename T>
void add_output_bias(Tensor<T>& Y, const Tensor<T>& b2) {
  const std::size_t row = b2.size();
  const T* bv = b2.raw();
  for (std::size_t i = 0; i < Y.extent(0); ++i) {
    T* yi = Y.raw() + i * row;
    for (std::size_t j = 0; j < row; ++j) yi[j] += bv[j];
  }
}

}  // namespace detail

template <typename T>
BankCache<T> forward(const FusedBank<T>& bank, const Tensor<T>& X, ForwardPath path = ForwardPath::Fused) {
  const BankLayout& L = bank.layout;
  require_rank(X, 2, "bank forward input");
  if (X.extent(1) != L.in_dim) {
    throw DimensionError("bank forward: input width " + std::to_string(X.extent(1)) +
                         " != bank in_dim " + std::to_string(L.in_dim));
  }
  const std::size_t b = X.extent(0);
  const std::size_t htot = L.hidden_total;
  const std::size_t out = L.out_dim;
  const std::size_t nm = L.n_models;

  BankCache<T> c;
  c.path = path;
  c.X = X;
  c.H = matmul_t(X, bank.W1);
  if (bank.b1) add_row_bias(c.H, *bank.b1);
  c.Hp = segment_activate(c.H, std::span<const Segment>(L.segments));

  if (path == ForwardPath::Materialized) {
    c.S = broadcast_mul(c.Hp.reshaped({b, 1, htot}), bank.W2.reshaped({1, out, htot}));
    const Tensor<T> R = scatter_add(2, *c.S, L.index_tensor(b), nm);  // [b, out, n_models]
    c.Y = Tensor<T>({b, nm, out});
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t m = 0; m < nm; ++m) {
        for (std::size_t o = 0; o < out; ++o) c.Y(i, m, o) = R(i, o, m);
      }
    }
  } else {
    c.Y = Tensor<T>({b, nm, out});
    const T* w2 = bank.W2.raw();
    parallel_for(b, out * htot, [&](std::size_t i) {
      const T* hp = c.Hp.raw() + i * htot;
      T* yi = c.Y.raw() + i * nm * out;
      for (std::size_t m = 0; m < nm; ++m) {
        const auto [start, end] = L.model_slices[m];
        for (std::size_t o = 0; o < out; ++o) {
          const T* w = w2 + o * htot;
          T acc = T(0);
          for (std::size_t h = start; h < end; ++h) acc += hp[h] * w[h];
          yi[m * out + o] = acc;
        }
      }
    });
  }
  if (bank.b2) detail::add_output_bias(c.Y, *bank.b2);
  return c;
}

template <typename T>
Gradients<T> backward(const FusedBank<T>& bank, const BankCache<T>& c, const Tensor<T>& dY) {
  const BankLayout& L = bank.layout;
  if (c.X.empty() || c.X.extent(1) != L.in_dim || c.H.shape() != Shape{c.X.extent(0), L.hidden_total} ||
      c.Y.shape() != Shape{c.X.extent(0), L.n_models, L.out_dim}) {
    throw StateError("bank backward: cache was not produced by this bank");
  }
  require_shape(dY, c.Y.shape(), "bank backward cotangent");
  const std::size_t b = c.X.extent(0);
  const std::size_t htot = L.hidden_total;
  const std::size_t out = L.out_dim;
  const std::size_t nm = L.n_models;

  Gradients<T> g;
  g.dW2 = Tensor<T>({out, htot});
  Tensor<T> dHp({b, htot});
  const T* w2 = bank.W2.raw();

  if (c.path == ForwardPath::Materialized) {
    Tensor<T> dR({b, out, nm});
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t m = 0; m < nm; ++m) {
        for (std::size_t o = 0; o < out; ++o) dR(i, o, m) = dY(i, m, o);
      }
    }
    const Tensor<T> dS = scatter_add_backward(2, dR, L.index_tensor(b));  // [b, out, htot]
    for (std::size_t o = 0; o < out; ++o) {
      T* dw = g.dW2.raw() + o * htot;
      for (std::size_t i = 0; i < b; ++i) {
        const T* ds = dS.raw() + (i * out + o) * htot;
        const T* hp = c.Hp.raw() + i * htot;
        for (std::size_t h = 0; h < htot; ++h) dw[h] += ds[h] * hp[h];
      }
    }
    for (std::size_t i = 0; i < b; ++i) {
      T* dh = dHp.raw() + i * htot;
      for (std::size_t o = 0; o < out; ++o) {
        const T* ds = dS.raw() + (i * out + o) * htot;
        const T* w = w2 + o * htot;
        for (std::size_t h = 0; h < htot; ++h) dh[h] += ds[h] * w[h];
      }
    }
  } else {
    // dS[i,o,h] = dY[i, owner(h), o] is constant over each model slice.
    parallel_for(out, b * htot, [&](std::size_t o) {
      T* dw = g.dW2.raw() + o * htot;
      for (std::size_t i = 0; i < b; ++i) {
        const T* hp = c.Hp.raw() + i * htot;
        const T* dyi = dY.raw() + i * nm * out;
        for (std::size_t m = 0; m < nm; ++m) {
          const auto [start, end] = L.model_slices[m];
          const T gy = dyi[m * out + o];
          for (std::size_t h = start; h < end; ++h) dw[h] += gy * hp[h];
        }
      }
    });
    parallel_for(b, out * htot, [&](std::size_t i) {
      T* dh = dHp.raw() + i * htot;
      const T* dyi = dY.raw() + i * nm * out;
      for (std::size_t o = 0; o < out; ++o) {
        const T* w = w2 + o * htot;
        for (std::size_t m = 0; m < nm; ++m) {
          const auto [start, end] = L.model_slices[m];
          const T gy = dyi[m * out + o];
          for (std::size_t h = start; h < end; ++h) dh[h] += gy * w[h];
        }
      }
    });
  }

  const Tensor<T> dH = segment_activate_backward(dHp, c.H, c.Hp, std::span<const Segment>(L.segments));
  g.dW1 = matmul_tn(dH, c.X);
  if (bank.has_biases()) {
    g.db1 = column_sums(dH);
    Tensor<T> db2 = column_sums(dY.reshaped({b, nm * out}));
    db2.reshape({nm, out});
    g.db2 = std::move(db2);
  }
  return g;
}

// Position of one model in a (repeat, activation, width) grid.
struct GridCoordinates {
  std::size_t width = 0;
  Activation activation = Activation::Identity;
  std::size_t repeat = 0;
};

// Grid order: repeat-major, then activation, then width; model id
//   id = (r * |activations| + a) * |widths| + w.
// Each repeat block therefore lists whole same-activation runs, which keeps
// the number of activation segments at repeats * |activations|.
inline std::vector<ModelSpec> grid_specs(std::span<const std::size_t> widths,
                                         std::span<const Activation> activations, std::size_t repeats) {
  if (widths.empty()) throw BuildError("grid needs at least one width");
  if (activations.empty()) throw BuildError("grid needs at least one activation");
  if (repeats == 0) throw BuildError("grid repeats must be >= 1");
  for (std::size_t w : widths) {
    if (w == 0) throw BuildError("grid widths must be >= 1");
  }
  std::vector<ModelSpec> specs;
  specs.reserve(widths.size() * activations.size() * repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    for (Activation a : activations) {
      for (std::size_t w : widths) specs.push_back({w, a});
    }
  }
  return specs;
}

inline std::vector<std::size_t> width_range(std::size_t min_width, std::size_t max_width) {
  if (min_width == 0 || max_width < min_width) {
    throw BuildError("width range must satisfy 1 <= min <= max");
  }
  std::vector<std::size_t> w;
  for (std::size_t v = min_width; v <= max_width; ++v) w.push_back(v);
  return w;
}

inline GridCoordinates grid_coordinates(std::size_t model_id, std::span<const std::size_t> widths,
                                        std::span<const Activation> activations) {
  const std::size_t nw = widths.size();
  const std::size_t na = activations.size();
  return {widths[model_id % nw], activations[(model_id / nw) % na], model_id / (nw * na)};
}

template <typename T>
void sgd_step(FusedBank<T>& bank, const Gradients<T>& g, T lr) {
  detail::sgd_step_params(bank, g, lr);
}

}  // namespace mlpbank
