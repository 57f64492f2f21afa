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

// Cache-tiled SGD step for a fused bank.
//
// The step walks the bank in tiles of whole models (roughly kTileHidden
// hidden neurons each) and runs forward, per-model loss, backward and the
// SGD update on one tile while its activations are still in cache. Models
// never read each other's parameters, so the schedule changes nothing
// numerically: every parameter after a step is bit-identical to
// forward -> per_model_loss -> backward -> sgd_step on the whole bank with
// the same batch.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "mlpbank/activation.hpp"
#include "mlpbank/kernels.hpp"
#include "mlpbank/loss.hpp"
#include "mlpbank/model_bank.hpp"
#include "mlpbank/parallel.hpp"
#include "mlpbank/tensor.hpp"
#include "mlpbank/vec.hpp"

namespace mlpbank {

inline constexpr std::size_t kTileHidden = 1024;

struct BankTile {
  std::size_t first_model = 0;
  std::size_t end_model = 0;
  std::size_t h0 = 0;
  std::size_t h1 = 0;
  std::vector<Segment> segments;  // activation runs, tile-local columns
};

// Greedy grouping of consecutive models; a model wider than the target gets
// a tile of its own.
inline std::vector<BankTile> make_tiles(const BankLayout& layout, std::size_t tile_hidden = kTileHidden) {
  std::vector<BankTile> tiles;
  std::size_t m = 0;
  while (m < layout.n_models) {
    BankTile t;
    t.first_model = m;
    t.h0 = layout.model_slices[m].start;
    t.h1 = layout.model_slices[m].end;
    ++m;
    while (m < layout.n_models && layout.model_slices[m].end - t.h0 <= tile_hidden) {
      t.h1 = layout.model_slices[m].end;
      ++m;
    }
    t.end_model = m;
    for (std::size_t k = t.first_model; k < t.end_model; ++k) {
      const auto& s = layout.model_slices[k];
      const Activation a = layout.model_activations[k];
      if (!t.segments.empty() && t.segments.back().activation == a) {
        t.segments.back().end = s.end - t.h0;
      } else {
        t.segments.push_back({s.start - t.h0, s.end - t.h0, a});
      }
    }
    tiles.push_back(std::move(t));
  }
  return tiles;
}

namespace detail {

// Columns per register block: eight 256-bit vectors.
template <typename T>
inline constexpr std::size_t kTileBlock = 8 * vec::kLanes<T>;

template <typename T>
inline std::size_t padded_width(std::size_t hc) {
  return (hc + kTileBlock<T> - 1) / kTileBlock<T> * kTileBlock<T>;
}

template <typename T>
struct TileScratch {
  std::vector<T> h, hp, hpt, dhp, dh, dw2, acc, y, dy;

  void resize(std::size_t b, std::size_t out, std::size_t ld, std::size_t models) {
    h.resize(b * ld);
    hp.resize(b * ld);
    hpt.resize(b * ld);
    acc.resize(b);
    dhp.resize(b * ld);
    dh.resize(b * ld);
    dw2.resize(ld);
    y.resize(b * out);
    dy.resize(models * b * out);
  }
};

// t[j * b + i] = a[i * ld + j] for j < cols (a multiple of 8), in 8 x 8
// blocks.
template <typename T>
void transpose_rows(const T* a, std::size_t b, std::size_t ld, std::size_t cols, T* t) {
  std::size_t i0 = 0;
  for (; i0 + 8 <= b; i0 += 8) {
    for (std::size_t j0 = 0; j0 < cols; j0 += 8) {
      for (std::size_t j = 0; j < 8; ++j) {
        for (std::size_t i = 0; i < 8; ++i) t[(j0 + j) * b + i0 + i] = a[(i0 + i) * ld + j0 + j];
      }
    }
  }
  for (; i0 < b; ++i0) {
    for (std::size_t j = 0; j < cols; ++j) t[j * b + i0] = a[i0 * ld + j];
  }
}

// y[i * y_stride] = sum over h in [s, e) of ht[h * b + i] * w[h], ascending
// h for every row.
template <typename T>
void slice_dots(const T* ht, std::size_t b, const T* w, std::size_t s, std::size_t e, T* acc, T* y,
                std::size_t y_stride) {
  std::fill_n(acc, b, T(0));
  for (std::size_t h = s; h < e; ++h) {
    const T wv = w[h];
    const T* __restrict r = ht + h * b;
    for (std::size_t i = 0; i < b; ++i) acc[i] += r[i] * wv;
  }
  for (std::size_t i = 0; i < b; ++i) y[i * y_stride] = acc[i];
}

}  // namespace detail

// Runs SGD steps on a fused bank tile by tile. While a stepper is alive it
// owns the bank's W1, kept per tile as W1^T [in, padded tile width] so the
// hot loops stream contiguous columns; sync() writes it back. The other
// parameters are updated in place.
template <typename T>
class FusedStepper {
 public:
  explicit FusedStepper(FusedBank<T>& bank, std::size_t tile_hidden = kTileHidden)
      : bank_(bank), tiles_(make_tiles(bank.layout, tile_hidden)) {
    bank_.validate();
    const std::size_t in = bank_.layout.in_dim;
    std::size_t off = 0;
    for (const BankTile& t : tiles_) {
      offsets_.push_back(off);
      off += in * detail::padded_width<T>(t.h1 - t.h0);
    }
    w1t_.assign(off, T(0));
    for (std::size_t n = 0; n < tiles_.size(); ++n) {
      const BankTile& t = tiles_[n];
      const std::size_t ld = detail::padded_width<T>(t.h1 - t.h0);
      for (std::size_t j = 0; j < t.h1 - t.h0; ++j) {
        for (std::size_t k = 0; k < in; ++k) w1t_[offsets_[n] + k * ld + j] = bank_.W1.raw()[(t.h0 + j) * in + k];
      }
    }
  }

  std::span<const BankTile> tiles() const { return tiles_; }

  // One SGD step of every model on batch (X, targets).
  void step(const Tensor<T>& X, const Tensor<T>& targets, LossKind kind, T lr) {
    require_rank(X, 2, "fused step input");
    if (X.extent(1) != bank_.layout.in_dim) {
      throw DimensionError("fused step: input width " + std::to_string(X.extent(1)) + " != bank in_dim " +
                           std::to_string(bank_.layout.in_dim));
    }
    if (!(lr > T(0))) throw ConfigError("learning rate must be > 0");
    const detail::TargetView<T> tv(targets, X.extent(0), bank_.layout.out_dim, kind);
    parallel_for(tiles_.size(), std::size_t{1} << 20, [&](std::size_t n) {
      thread_local detail::TileScratch<T> scratch;
      tile_step(n, X, tv, kind, lr, scratch);
    });
  }

  // Copies the tiled W1 back into the bank.
  void sync() {
    const std::size_t in = bank_.layout.in_dim;
    for (std::size_t n = 0; n < tiles_.size(); ++n) {
      const BankTile& t = tiles_[n];
      const std::size_t ld = detail::padded_width<T>(t.h1 - t.h0);
      for (std::size_t j = 0; j < t.h1 - t.h0; ++j) {
        for (std::size_t k = 0; k < in; ++k) bank_.W1.raw()[(t.h0 + j) * in + k] = w1t_[offsets_[n] + k * ld + j];
      }
    }
  }

 private:
  void tile_step(std::size_t n, const Tensor<T>& X, const detail::TargetView<T>& target, LossKind kind, T lr,
                 detail::TileScratch<T>& sc) {
    using V = vec::Vec<T>;
    constexpr std::size_t L = vec::kLanes<T>;
    constexpr std::size_t B = detail::kTileBlock<T>;
    const BankTile& tile = tiles_[n];
    const BankLayout& lay = bank_.layout;
    const std::size_t b = X.extent(0);
    const std::size_t in = lay.in_dim;
    const std::size_t out = lay.out_dim;
    const std::size_t htot = lay.hidden_total;
    const std::size_t h0 = tile.h0;
    const std::size_t hc = tile.h1 - tile.h0;
    const std::size_t ld = detail::padded_width<T>(hc);
    const std::size_t nmt = tile.end_model - tile.first_model;
    sc.resize(b, out, ld, nmt);
    T* __restrict w1t = w1t_.data() + offsets_[n];
    T* __restrict w2 = bank_.W2.raw();
    const T* x = X.raw();

    // H = X W1^T (+ b1), ascending k.
    for (std::size_t j0 = 0; j0 < ld; j0 += B) {
      for (std::size_t i = 0; i < b; ++i) {
        V acc[8] = {};
        for (std::size_t k = 0; k < in; ++k) {
          const T xv = x[i * in + k];
          const T* wr = w1t + k * ld + j0;
          for (std::size_t q = 0; q < 8; ++q) acc[q] += xv * vec::load(wr + q * L);
        }
        for (std::size_t q = 0; q < 8; ++q) vec::store(sc.h.data() + i * ld + j0 + q * L, acc[q]);
      }
    }
    if (bank_.b1) {
      const T* __restrict bv = bank_.b1->raw() + h0;
      for (std::size_t i = 0; i < b; ++i) {
        T* __restrict hr = sc.h.data() + i * ld;
        for (std::size_t j = 0; j < hc; ++j) hr[j] += bv[j];
      }
    }

    const std::span<const T> hs(sc.h);
    const std::span<T> hps(sc.hp);
    for (std::size_t i = 0; i < b; ++i) {
      for (const Segment& seg : tile.segments) {
        const std::size_t len = seg.end - seg.start;
        activate_span<T>(hs.subspan(i * ld + seg.start, len), hps.subspan(i * ld + seg.start, len), seg.activation);
      }
    }

    detail::transpose_rows(sc.hp.data(), b, ld, ld, sc.hpt.data());

    // Per model: outputs, loss and dY, then the slice of dH' (read before W2
    // moves) and the W2 update. dS[i,o,h] = dY[i,m,o] on the slice.
    for (std::size_t mm = 0; mm < nmt; ++mm) {
      const std::size_t m = tile.first_model + mm;
      const std::size_t s = lay.model_slices[m].start - h0;
      const std::size_t e = lay.model_slices[m].end - h0;
      const std::size_t w = e - s;
      for (std::size_t o = 0; o < out; ++o) {
        detail::slice_dots(sc.hpt.data(), b, w2 + o * htot + h0, s, e, sc.acc.data(), sc.y.data() + o, out);
      }
      if (bank_.b2) {
        const T* bv = bank_.b2->raw() + m * out;
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t o = 0; o < out; ++o) sc.y[i * out + o] += bv[o];
        }
      }
      T* dy = sc.dy.data() + mm * b * out;
      detail::model_loss(sc.y.data(), out, target, b, out, kind, dy);

      for (std::size_t i = 0; i < b; ++i) {
        T* __restrict dr = sc.dhp.data() + i * ld + s;
        std::fill_n(dr, w, T(0));
        for (std::size_t o = 0; o < out; ++o) {
          const T g = dy[i * out + o];
          const T* __restrict wr = w2 + o * htot + h0 + s;
          for (std::size_t j = 0; j < w; ++j) dr[j] += g * wr[j];
        }
      }
      for (std::size_t o = 0; o < out; ++o) {
        T* __restrict acc = sc.dw2.data();
        std::fill_n(acc, w, T(0));
        for (std::size_t i = 0; i < b; ++i) {
          const T g = dy[i * out + o];
          const T* __restrict hpr = sc.hp.data() + i * ld + s;
          for (std::size_t j = 0; j < w; ++j) acc[j] += g * hpr[j];
        }
        T* __restrict wr = w2 + o * htot + h0 + s;
        for (std::size_t j = 0; j < w; ++j) wr[j] -= lr * acc[j];
      }
    }

    const std::span<const T> dhps(sc.dhp);
    const std::span<T> dhs(sc.dh);
    for (std::size_t i = 0; i < b; ++i) {
      for (const Segment& seg : tile.segments) {
        const std::size_t len = seg.end - seg.start;
        const std::size_t at = i * ld + seg.start;
        activation_backward_span<T>(dhps.subspan(at, len), hs.subspan(at, len), std::span<const T>(hps.subspan(at, len)),
                                    dhs.subspan(at, len), seg.activation);
      }
      std::fill(sc.dh.begin() + i * ld + hc, sc.dh.begin() + (i + 1) * ld, T(0));
    }

    if (bank_.b1) {
      T* bv = bank_.b1->raw() + h0;
      for (std::size_t j0 = 0; j0 < hc; j0 += B) {
        T acc[B] = {};
        for (std::size_t i = 0; i < b; ++i) {
          const T* dhr = sc.dh.data() + i * ld + j0;
          for (std::size_t j = 0; j < B; ++j) acc[j] += dhr[j];
        }
        const std::size_t width = std::min(B, hc - j0);
        for (std::size_t j = 0; j < width; ++j) bv[j0 + j] -= lr * acc[j];
      }
      for (std::size_t mm = 0; mm < nmt; ++mm) {
        const T* dy = sc.dy.data() + mm * b * out;
        T* b2 = bank_.b2->raw() + (tile.first_model + mm) * out;
        for (std::size_t o = 0; o < out; ++o) {
          T g = T(0);
          for (std::size_t i = 0; i < b; ++i) g += dy[i * out + o];
          b2[o] -= lr * g;
        }
      }
    }

    // dW1^T[k,h] = sum_i X[i,k] dH[i,h]; padding columns see zero gradient.
    for (std::size_t j0 = 0; j0 < ld; j0 += B) {
      for (std::size_t k = 0; k < in; ++k) {
        V acc[8] = {};
        for (std::size_t i = 0; i < b; ++i) {
          const T xv = x[i * in + k];
          const T* dhr = sc.dh.data() + i * ld + j0;
          for (std::size_t q = 0; q < 8; ++q) acc[q] += vec::load(dhr + q * L) * xv;
        }
        T* wr = w1t + k * ld + j0;
        for (std::size_t q = 0; q < 8; ++q) vec::store(wr + q * L, vec::load(wr + q * L) - lr * acc[q]);
      }
    }
  }

  FusedBank<T>& bank_;
  std::vector<BankTile> tiles_;
  std::vector<std::size_t> offsets_;
  std::vector<T> w1t_;
};

}  // namespace mlpbank
