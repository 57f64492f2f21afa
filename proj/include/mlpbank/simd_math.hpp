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

// Branch-free exp / expm1 / tanh that GCC and Clang auto-vectorize.
//
// Each function is a fixed sequence of IEEE operations, so a value computed
// in a SIMD lane is bit-identical to the same value computed by the scalar
// remainder loop or by a direct call. Accuracy is within a few ulp of libm
// over the clamped ranges below. Build with -ffp-contract=off.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <type_traits>

namespace mlpbank::simd_math {

namespace detail {

template <typename T>
struct Consts;

template <>
struct Consts<double> {
  using Int = std::int64_t;
  static constexpr double kLog2e = 1.4426950408889634074;
  static constexpr double kLn2Hi = 6.93147180369123816490e-01;  // low 21 bits zero
  static constexpr double kLn2Lo = 1.90821492927058770002e-10;
  static constexpr double kShifter = 6755399441055744.0;  // 1.5 * 2^52
  static constexpr double kMaxArg = 709.0;
  static constexpr double kMinArg = -708.0;
  static constexpr double kTanhClamp = 20.0;
  static constexpr int kMantissaBits = 52;
  static constexpr Int kBias = 1023;
};

template <>
struct Consts<float> {
  using Int = std::int32_t;
  static constexpr float kLog2e = 1.44269504f;
  static constexpr float kLn2Hi = 0.693359375f;  // exact in 9 bits
  static constexpr float kLn2Lo = -2.12194440e-4f;
  static constexpr float kShifter = 12582912.0f;  // 1.5 * 2^23
  static constexpr float kMaxArg = 88.0f;
  static constexpr float kMinArg = -87.0f;
  static constexpr float kTanhClamp = 10.0f;
  static constexpr int kMantissaBits = 23;
  static constexpr Int kBias = 127;
};

// e^r - 1 for |r| <= ln2/2; Taylor to degree 13 (double) / 7 (float), whose
// truncation error is below half an ulp on that interval.
inline double expm1_reduced(double r) {
  double p = 1.0 / 6227020800.0;  // 1/13!
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  return p * r;
}

inline float expm1_reduced(float r) {
  float p = 1.0f / 5040.0f;
  p = p * r + 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  return p * r;
}

// x = n ln2 + r with |r| <= ln2/2. Returns r; `scale` receives 2^n.
template <typename T>
inline T reduce(T x, T& scale) {
  using C = Consts<T>;
  using Int = typename C::Int;
  x = std::min(std::max(x, C::kMinArg), C::kMaxArg);
  T n = (x * C::kLog2e + C::kShifter) - C::kShifter;
  n = (n == n) ? n : T(0);  // NaN must not reach the integer conversion
  const T r = (x - n * C::kLn2Hi) - n * C::kLn2Lo;
  const Int bits = (static_cast<Int>(n) + C::kBias) << C::kMantissaBits;
  scale = std::bit_cast<T>(bits);
  return r;
}

}  // namespace detail

template <typename T>
inline T exp(T x) {
  static_assert(std::is_floating_point_v<T>);
  T scale;
  const T r = detail::reduce(x, scale);
  const T y = scale * (T(1) + detail::expm1_reduced(r));
  return (x == x) ? y : x;
}

// e^x - 1 without cancellation near 0.
template <typename T>
inline T expm1(T x) {
  static_assert(std::is_floating_point_v<T>);
  T scale;
  const T r = detail::reduce(x, scale);
  const T y = scale * detail::expm1_reduced(r) + (scale - T(1));
  return (x == x) ? y : x;
}

// tanh|x| = -e / (2 + e), e = expm1(-2|x|); |x| is clamped where tanh == 1.
template <typename T>
inline T tanh(T x) {
  static_assert(std::is_floating_point_v<T>);
  const T a = std::min(x < T(0) ? -x : x, detail::Consts<T>::kTanhClamp);
  const T e = expm1(T(-2) * a);
  const T t = -e / (T(2) + e);
  return x < T(0) ? -t : t;
}

}  // namespace mlpbank::simd_math
