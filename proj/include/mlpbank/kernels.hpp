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

// Numeric kernels of the fused MLP bank and their vector-Jacobian products.
//
// Every reduction accumulates into a zero-initialized value in ascending
// index order, and parallelism only ever splits independent output elements.
// Results are therefore bit-identical to a naive loop with the same order and
// independent of the thread count (build with -ffp-contract=off).

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlpbank/activation.hpp"
#include "mlpbank/errors.hpp"
#include "mlpbank/parallel.hpp"
#include "mlpbank/tensor.hpp"

namespace mlpbank {

// A run [start, end) of hidden columns sharing one activation.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  Activation activation = Activation::Identity;

  bool operator==(const Segment&) const = default;
};

namespace detail {

inline std::string pair_shapes(const Shape& a, const Shape& b) {
  return shape_string(a) + " and " + shape_string(b);
}

// Column block width of matmul_t; sized for a few vector registers of
// accumulators per batch row.
inline constexpr std::size_t kMatmulBlock = 64;

}  // namespace detail

// out[i,j] = sum_k X[i,k] * W[j,k]   (X * W^T)
namespace detail {

// Outputs narrower than this skip the blocked transpose in matmul_t and
// accumulate matmul_tn in a transposed scratch tile.
inline constexpr std::size_t kNarrow = 16;
inline constexpr std::size_t kRowBlock = 256;

// Dot products of eight X rows against each W row at a time.
template <typename T>
void matmul_t_narrow(const T* x, const T* w, T* o, std::size_t b, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= b; i += 8) {
    for (std::size_t j = 0; j < n; ++j) {
      const T* wj = w + j * k;
      T a[8] = {};
      for (std::size_t kk = 0; kk < k; ++kk) {
        for (std::size_t q = 0; q < 8; ++q) a[q] += x[(i + q) * k + kk] * wj[kk];
      }
      for (std::size_t q = 0; q < 8; ++q) o[(i + q) * n + j] = a[q];
    }
  }
  for (; i < b; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const T* wj = w + j * k;
      T a = T(0);
      for (std::size_t kk = 0; kk < k; ++kk) a += x[i * k + kk] * wj[kk];
      o[i * n + j] = a;
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul_t(const Tensor<T>& X, const Tensor<T>& W) {
  require_rank(X, 2, "matmul_t lhs");
  require_rank(W, 2, "matmul_t rhs");
  if (X.extent(1) != W.extent(1)) {
    throw DimensionError("matmul_t: inner extents differ for shapes " +
                         detail::pair_shapes(X.shape(), W.shape()));
  }
  const std::size_t b = X.extent(0);
  const std::size_t k = X.extent(1);
  const std::size_t n = W.extent(0);
  Tensor<T> out({b, n});
  if (n < detail::kNarrow) {
    detail::matmul_t_narrow(X.raw(), W.raw(), out.raw(), b, k, n);
    return out;
  }
  constexpr std::size_t B = detail::kMatmulBlock;
  const std::size_t blocks = (n + B - 1) / B;
  const T* x = X.raw();
  const T* w = W.raw();
  T* o = out.raw();
  parallel_for(blocks, b * k * B, [&](std::size_t blk) {
    const std::size_t j0 = blk * B;
    const std::size_t width = std::min(B, n - j0);
    // Transpose the W block so the k-loop streams contiguous columns.
    std::vector<T> wt(k * B, T(0));
    for (std::size_t j = 0; j < width; ++j) {
      for (std::size_t kk = 0; kk < k; ++kk) wt[kk * B + j] = w[(j0 + j) * k + kk];
    }
    std::array<T, B> acc;
    for (std::size_t i = 0; i < b; ++i) {
      acc.fill(T(0));
      const T* xi = x + i * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T xv = xi[kk];
        const T* wr = wt.data() + kk * B;
        for (std::size_t j = 0; j < B; ++j) acc[j] += xv * wr[j];
      }
      std::copy_n(acc.begin(), width, o + i * n + j0);
    }
  });
  return out;
}

// out[i,j] = sum_k A[i,k] * B[k,j]
template <typename T>
Tensor<T> matmul(const Tensor<T>& A, const Tensor<T>& Bm) {
  require_rank(A, 2, "matmul lhs");
  require_rank(Bm, 2, "matmul rhs");
  if (A.extent(1) != Bm.extent(0)) {
    throw DimensionError("matmul: inner extents differ for shapes " +
                         detail::pair_shapes(A.shape(), Bm.shape()));
  }
  const std::size_t r = A.extent(0);
  const std::size_t k = A.extent(1);
  const std::size_t n = Bm.extent(1);
  Tensor<T> out({r, n});
  const T* a = A.raw();
  const T* bm = Bm.raw();
  T* o = out.raw();
  parallel_for(r, k * n, [&](std::size_t i) {
    T* oi = o + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = a[i * k + kk];
      const T* br = bm + kk * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += av * br[j];
    }
  });
  return out;
}

// out[p,j] = sum_r A[r,p] * B[r,j]   (A^T * B)
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& A, const Tensor<T>& Bm) {
  require_rank(A, 2, "matmul_tn lhs");
  require_rank(Bm, 2, "matmul_tn rhs");
  if (A.extent(0) != Bm.extent(0)) {
    throw DimensionError("matmul_tn: leading extents differ for shapes " +
                         detail::pair_shapes(A.shape(), Bm.shape()));
  }
  const std::size_t r = A.extent(0);
  const std::size_t m = A.extent(1);
  const std::size_t n = Bm.extent(1);
  Tensor<T> out({m, n});
  const T* a = A.raw();
  const T* bm = Bm.raw();
  T* o = out.raw();
  if (n >= detail::kNarrow) {
    parallel_for(m, r * n, [&](std::size_t p) {
      T* op = o + p * n;
      for (std::size_t rr = 0; rr < r; ++rr) {
        const T av = a[rr * m + p];
        const T* br = bm + rr * n;
        for (std::size_t j = 0; j < n; ++j) op[j] += av * br[j];
      }
    });
    return out;
  }
  constexpr std::size_t P = detail::kRowBlock;
  parallel_for((m + P - 1) / P, r * n * P, [&](std::size_t blk) {
    const std::size_t p0 = blk * P;
    const std::size_t width = std::min(P, m - p0);
    std::vector<T> acc(n * P, T(0));
    for (std::size_t rr = 0; rr < r; ++rr) {
      const T* __restrict ar = a + rr * m + p0;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = bm[rr * n + j];
        T* __restrict aj = acc.data() + j * P;
        for (std::size_t p = 0; p < width; ++p) aj[p] += ar[p] * bv;
      }
    }
    for (std::size_t p = 0; p < width; ++p) {
      for (std::size_t j = 0; j < n; ++j) o[(p0 + p) * n + j] = acc[j * P + p];
    }
  });
  return out;
}

// out[i,j,k] = Hp[i,0,k] * W2[0,j,k]
template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& Hp, const Tensor<T>& W2) {
  require_rank(Hp, 3, "broadcast_mul lhs");
  require_rank(W2, 3, "broadcast_mul rhs");
  if (Hp.extent(1) != 1 || W2.extent(0) != 1 || Hp.extent(2) != W2.extent(2)) {
    throw DimensionError("broadcast_mul: shapes " + detail::pair_shapes(Hp.shape(), W2.shape()) +
                         " are not [b,1,h] x [1,o,h]");
  }
  const std::size_t b = Hp.extent(0);
  const std::size_t o = W2.extent(1);
  const std::size_t h = Hp.extent(2);
  Tensor<T> out({b, o, h});
  const T* hp = Hp.raw();
  const T* w = W2.raw();
  T* dst = out.raw();
  parallel_for(b, o * h, [&](std::size_t i) {
    const T* hi = hp + i * h;
    for (std::size_t j = 0; j < o; ++j) {
      const T* wj = w + j * h;
      T* dj = dst + (i * o + j) * h;
      for (std::size_t k = 0; k < h; ++k) dj[k] = hi[k] * wj[k];
    }
  });
  return out;
}

namespace detail {

// View of a rank<=3 shape as [outer, len, inner] around `dim`.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t dim) {
  AxisSplit a;
  for (std::size_t d = 0; d < dim; ++d) a.outer *= s[d];
  a.len = s[dim];
  for (std::size_t d = dim + 1; d < s.size(); ++d) a.inner *= s[d];
  return a;
}

inline std::string position_string(const Shape& s, std::size_t flat) {
  Shape pos(s.size());
  for (std::size_t d = s.size(); d-- > 0;) {
    pos[d] = flat % s[d];
    flat /= s[d];
  }
  return shape_string(pos);
}

template <typename T>
void check_scatter_args(std::size_t dim, const Tensor<T>& S, const IndexTensor& I, std::size_t extent,
                        const char* op) {
  if (S.empty() || dim >= S.rank()) {
    throw DimensionError(std::string(op) + ": dim " + std::to_string(dim) + " invalid for shape " +
                         shape_string(S.shape()));
  }
  if (S.shape() != I.shape()) {
    throw DimensionError(std::string(op) + ": source and index shapes differ: " +
                         pair_shapes(S.shape(), I.shape()));
  }
  const auto lim = static_cast<std::int64_t>(extent);
  const auto idx = I.data();
  for (std::size_t p = 0; p < idx.size(); ++p) {
    if (idx[p] < 0 || idx[p] >= lim) {
      throw IndexError(std::string(op) + ": index " + std::to_string(idx[p]) + " at position " +
                       position_string(I.shape(), p) + " outside [0, " + std::to_string(extent) + ")");
    }
  }
}

}  // namespace detail

// Scatter-add along `dim` into a zero tensor whose extent along `dim` is
// `extent`: R[..., I[pos], ...] += S[pos]. Sources sharing a destination are
// added in ascending source order.
template <typename T>
Tensor<T> scatter_add(std::size_t dim, const Tensor<T>& S, const IndexTensor& I, std::size_t extent) {
  if (extent == 0) throw DimensionError("scatter_add: result extent must be >= 1");
  detail::check_scatter_args(dim, S, I, extent, "scatter_add");
  Shape rshape = S.shape();
  rshape[dim] = extent;
  Tensor<T> R(rshape);
  const auto src = detail::split_axis(S.shape(), dim);
  const T* s = S.raw();
  const std::int64_t* idx = I.raw();
  T* r = R.raw();
  parallel_for(src.outer, src.len * src.inner, [&](std::size_t o) {
    const std::size_t sbase = o * src.len * src.inner;
    const std::size_t rbase = o * extent * src.inner;
    for (std::size_t l = 0; l < src.len; ++l) {
      const std::size_t srow = sbase + l * src.inner;
      for (std::size_t i = 0; i < src.inner; ++i) {
        const auto dst = static_cast<std::size_t>(idx[srow + i]);
        r[rbase + dst * src.inner + i] += s[srow + i];
      }
    }
  });
  return R;
}

// VJP of scatter_add: dS[pos] = dR[destination(pos)]. A pure gather, so no
// two source positions ever share a summed cotangent.
template <typename T>
Tensor<T> scatter_add_backward(std::size_t dim, const Tensor<T>& dR, const IndexTensor& I) {
  if (dR.empty() || dim >= dR.rank() || I.rank() != dR.rank()) {
    throw DimensionError("scatter_add_backward: cotangent shape " + shape_string(dR.shape()) +
                         " incompatible with index shape " + shape_string(I.shape()));
  }
  for (std::size_t d = 0; d < dR.rank(); ++d) {
    if (d != dim && dR.extent(d) != I.extent(d)) {
      throw DimensionError("scatter_add_backward: shapes " +
                           detail::pair_shapes(dR.shape(), I.shape()) + " differ outside dim " +
                           std::to_string(dim));
    }
  }
  const std::size_t extent = dR.extent(dim);
  {
    const auto lim = static_cast<std::int64_t>(extent);
    const auto idx = I.data();
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (idx[p] < 0 || idx[p] >= lim) {
        throw IndexError("scatter_add_backward: index " + std::to_string(idx[p]) + " at position " +
                         detail::position_string(I.shape(), p) + " outside [0, " +
                         std::to_string(extent) + ")");
      }
    }
  }
  Tensor<T> dS(I.shape());
  const auto src = detail::split_axis(I.shape(), dim);
  const T* g = dR.raw();
  const std::int64_t* idx = I.raw();
  T* out = dS.raw();
  parallel_for(src.outer, src.len * src.inner, [&](std::size_t o) {
    const std::size_t sbase = o * src.len * src.inner;
    const std::size_t rbase = o * extent * src.inner;
    for (std::size_t l = 0; l < src.len; ++l) {
      const std::size_t srow = sbase + l * src.inner;
      for (std::size_t i = 0; i < src.inner; ++i) {
        out[srow + i] = g[rbase + static_cast<std::size_t>(idx[srow + i]) * src.inner + i];
      }
    }
  });
  return dS;
}

// Throws LayoutError unless segments cover [0, total) contiguously in order.
inline void validate_segments(std::span<const Segment> segments, std::size_t total) {
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    if (seg.start != cursor || seg.end <= seg.start) {
      throw LayoutError("segment " + std::to_string(s) + " [" + std::to_string(seg.start) + ", " +
                        std::to_string(seg.end) + ") does not continue the partition at " +
                        std::to_string(cursor));
    }
    cursor = seg.end;
  }
  if (cursor != total) {
    throw LayoutError("segments cover [0, " + std::to_string(cursor) + ") but the hidden axis has " +
                      std::to_string(total) + " columns");
  }
}

// Split-apply-concat: each column run gets its own activation.
template <typename T>
Tensor<T> segment_activate(const Tensor<T>& H, std::span<const Segment> segments) {
  require_rank(H, 2, "segment_activate");
  validate_segments(segments, H.extent(1));
  Tensor<T> out(H.shape());
  const std::size_t b = H.extent(0);
  const std::size_t n = H.extent(1);
  parallel_for(b, n * 8, [&](std::size_t i) {
    const auto src = H.row(i);
    auto dst = out.row(i);
    for (const Segment& seg : segments) {
      const std::size_t len = seg.end - seg.start;
      activate_span<T>(src.subspan(seg.start, len), dst.subspan(seg.start, len), seg.activation);
    }
  });
  return out;
}

// dH = dHp * f'(H), per segment.
template <typename T>
Tensor<T> segment_activate_backward(const Tensor<T>& dHp, const Tensor<T>& H,
                                    std::span<const Segment> segments) {
  require_rank(H, 2, "segment_activate_backward");
  require_shape(dHp, H.shape(), "segment_activate_backward cotangent");
  validate_segments(segments, H.extent(1));
  Tensor<T> out(H.shape());
  const std::size_t b = H.extent(0);
  const std::size_t n = H.extent(1);
  parallel_for(b, n * 8, [&](std::size_t i) {
    const auto g = dHp.row(i);
    const auto x = H.row(i);
    auto dst = out.row(i);
    for (const Segment& seg : segments) {
      const std::size_t len = seg.end - seg.start;
      activation_backward_span<T>(g.subspan(seg.start, len), x.subspan(seg.start, len),
                                  dst.subspan(seg.start, len), seg.activation);
    }
  });
  return out;
}

// Same result, with Hp = f(H) supplied so output-form derivatives skip f.
template <typename T>
Tensor<T> segment_activate_backward(const Tensor<T>& dHp, const Tensor<T>& H, const Tensor<T>& Hp,
                                    std::span<const Segment> segments) {
  require_rank(H, 2, "segment_activate_backward");
  require_shape(dHp, H.shape(), "segment_activate_backward cotangent");
  require_shape(Hp, H.shape(), "segment_activate_backward activations");
  validate_segments(segments, H.extent(1));
  Tensor<T> out(H.shape());
  const std::size_t b = H.extent(0);
  const std::size_t n = H.extent(1);
  parallel_for(b, n * 8, [&](std::size_t i) {
    const auto g = dHp.row(i);
    const auto x = H.row(i);
    const auto y = Hp.row(i);
    auto dst = out.row(i);
    for (const Segment& seg : segments) {
      const std::size_t len = seg.end - seg.start;
      activation_backward_span<T>(g.subspan(seg.start, len), x.subspan(seg.start, len),
                                  y.subspan(seg.start, len), dst.subspan(seg.start, len), seg.activation);
    }
  });
  return out;
}

// out[j] = sum_i A[i,j], ascending i.
template <typename T>
Tensor<T> column_sums(const Tensor<T>& A) {
  require_rank(A, 2, "column_sums");
  const std::size_t r = A.extent(0);
  const std::size_t n = A.extent(1);
  Tensor<T> out({n});
  T* o = out.raw();
  for (std::size_t i = 0; i < r; ++i) {
    const T* ai = A.raw() + i * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += ai[j];
  }
  return out;
}

// A[i,:] += bias
template <typename T>
void add_row_bias(Tensor<T>& A, const Tensor<T>& bias) {
  require_rank(A, 2, "add_row_bias");
  require_shape(bias, {A.extent(1)}, "add_row_bias bias");
  const std::size_t n = A.extent(1);
  const T* bv = bias.raw();
  for (std::size_t i = 0; i < A.extent(0); ++i) {
    T* ai = A.raw() + i * n;
    for (std::size_t j = 0; j < n; ++j) ai[j] += bv[j];
  }
}

}  // namespace mlpbank
