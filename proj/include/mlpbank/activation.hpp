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

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "mlpbank/simd_math.hpp"

namespace mlpbank {

enum class Activation { Identity, Sigmoid, Tanh, ReLU, ELU, SELU, GELU, LeakyReLU, Hardshrink, Mish };

inline constexpr std::array<Activation, 10> kAllActivations = {
    Activation::Identity, Activation::Sigmoid, Activation::Tanh, Activation::ReLU,
    Activation::ELU,      Activation::SELU,    Activation::GELU, Activation::LeakyReLU,
    Activation::Hardshrink, Activation::Mish};

// Fixed constants of the parameterized activations.
namespace act {
inline constexpr double kEluAlpha = 1.0;
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluScale = 1.0507009873554805;
inline constexpr double kLeakySlope = 0.01;
inline constexpr double kHardshrinkLambda = 0.5;
inline constexpr double kGeluCoeff = 0.044715;
inline constexpr double kSqrt2OverPi = 0.79788456080286535588;
}  // namespace act

inline constexpr std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Identity:
      return "identity";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Tanh:
      return "tanh";
    case Activation::ReLU:
      return "relu";
    case Activation::ELU:
      return "elu";
    case Activation::SELU:
      return "selu";
    case Activation::GELU:
      return "gelu";
    case Activation::LeakyReLU:
      return "leakyrelu";
    case Activation::Hardshrink:
      return "hardshrink";
    case Activation::Mish:
      return "mish";
  }
  return "?";
}

// Case-insensitive; accepts "leaky_relu" / "leaky-relu" as aliases.
inline std::optional<Activation> parse_activation(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c == '_' || c == '-') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (Activation a : kAllActivations) {
    if (activation_name(a) == key) return a;
  }
  return std::nullopt;
}

namespace detail {

template <typename T>
inline T sigmoid(T x) {
  const T e = simd_math::exp(x < T(0) ? x : -x);  // e^{-|x|}, never overflows
  const T d = T(1) + e;
  return x < T(0) ? e / d : T(1) / d;
}

// tanh(softplus(x)) = n(n+2) / (n(n+2) + 2) with n = e^x; exact to rounding
// for x > 20, where it equals 1.
template <typename T>
inline T tanh_softplus(T x) {
  const T n = simd_math::exp(std::min(x, T(20)));
  const T q = n * (n + T(2));
  return q / (q + T(2));
}

template <typename T, Activation A>
inline T activate_fixed(T x) {
  if constexpr (A == Activation::Identity) {
    return x;
  } else if constexpr (A == Activation::Sigmoid) {
    return sigmoid(x);
  } else if constexpr (A == Activation::Tanh) {
    return simd_math::tanh(x);
  } else if constexpr (A == Activation::ReLU) {
    return x < T(0) ? T(0) : x;
  } else if constexpr (A == Activation::ELU) {
    const T neg = T(act::kEluAlpha) * simd_math::expm1(x);
    return x > T(0) ? x : neg;
  } else if constexpr (A == Activation::SELU) {
    const T neg = T(act::kSeluAlpha) * simd_math::expm1(x);
    return T(act::kSeluScale) * (x > T(0) ? x : neg);
  } else if constexpr (A == Activation::GELU) {
    const T u = T(act::kSqrt2OverPi) * (x + T(act::kGeluCoeff) * x * x * x);
    return T(0.5) * x * (T(1) + simd_math::tanh(u));
  } else if constexpr (A == Activation::LeakyReLU) {
    return x < T(0) ? T(act::kLeakySlope) * x : x;
  } else if constexpr (A == Activation::Hardshrink) {
    return (x >= -T(act::kHardshrinkLambda) && x <= T(act::kHardshrinkLambda)) ? T(0) : x;
  } else {
    static_assert(A == Activation::Mish);
    return x * tanh_softplus(x);
  }
}

// `nan_or` keeps NaN inputs NaN in the piecewise-constant derivatives.
template <typename T>
inline T nan_or(T x, T v) {
  return x == x ? v : x;
}

template <typename T, Activation A>
inline T grad_fixed(T x) {
  if constexpr (A == Activation::Identity) {
    return nan_or(x, T(1));
  } else if constexpr (A == Activation::Sigmoid) {
    const T s = sigmoid(x);
    return s * (T(1) - s);
  } else if constexpr (A == Activation::Tanh) {
    const T t = simd_math::tanh(x);
    return T(1) - t * t;
  } else if constexpr (A == Activation::ReLU) {
    return nan_or(x, x > T(0) ? T(1) : T(0));
  } else if constexpr (A == Activation::ELU) {
    const T neg = T(act::kEluAlpha) * simd_math::exp(x);
    return nan_or(x, x > T(0) ? T(1) : neg);
  } else if constexpr (A == Activation::SELU) {
    const T neg = T(act::kSeluAlpha) * simd_math::exp(x);
    return nan_or(x, T(act::kSeluScale) * (x > T(0) ? T(1) : neg));
  } else if constexpr (A == Activation::GELU) {
    const T c = T(act::kSqrt2OverPi);
    const T k = T(act::kGeluCoeff);
    const T t = simd_math::tanh(c * (x + k * x * x * x));
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * k * x * x);
  } else if constexpr (A == Activation::LeakyReLU) {
    return nan_or(x, x < T(0) ? T(act::kLeakySlope) : T(1));
  } else if constexpr (A == Activation::Hardshrink) {
    const bool dead = x >= -T(act::kHardshrinkLambda) && x <= T(act::kHardshrinkLambda);
    return nan_or(x, dead ? T(0) : T(1));
  } else {
    static_assert(A == Activation::Mish);
    const T t = tanh_softplus(x);
    return t + x * (T(1) - t * t) * sigmoid(x);
  }
}

// Calls f(std::integral_constant<Activation, a>) for the runtime value a.
template <typename F>
inline decltype(auto) dispatch(Activation a, F&& f) {
  switch (a) {
    case Activation::Identity:
      return f(std::integral_constant<Activation, Activation::Identity>{});
    case Activation::Sigmoid:
      return f(std::integral_constant<Activation, Activation::Sigmoid>{});
    case Activation::Tanh:
      return f(std::integral_constant<Activation, Activation::Tanh>{});
    case Activation::ReLU:
      return f(std::integral_constant<Activation, Activation::ReLU>{});
    case Activation::ELU:
      return f(std::integral_constant<Activation, Activation::ELU>{});
    case Activation::SELU:
      return f(std::integral_constant<Activation, Activation::SELU>{});
    case Activation::GELU:
      return f(std::integral_constant<Activation, Activation::GELU>{});
    case Activation::LeakyReLU:
      return f(std::integral_constant<Activation, Activation::LeakyReLU>{});
    case Activation::Hardshrink:
      return f(std::integral_constant<Activation, Activation::Hardshrink>{});
    case Activation::Mish:
      break;
  }
  return f(std::integral_constant<Activation, Activation::Mish>{});
}

}  // namespace detail

// NaN inputs propagate to NaN outputs for every variant.
template <typename T>
inline T activate(T x, Activation a) {
  return detail::dispatch(a, [x](auto tag) { return detail::activate_fixed<T, decltype(tag)::value>(x); });
}

// Derivative at the pre-activation value x. Kinks take the right-hand
// convention of the usual frameworks: ReLU'(0) = 0, LeakyReLU'(0) = 1,
// Hardshrink'(+-lambda) = 0.
template <typename T>
inline T activation_grad(T x, Activation a) {
  return detail::dispatch(a, [x](auto tag) { return detail::grad_fixed<T, decltype(tag)::value>(x); });
}

// out[i] = activate(in[i]); one vectorizable loop per activation.
template <typename T>
inline void activate_span(std::span<const T> in, std::span<T> out, Activation a) {
  detail::dispatch(a, [&](auto tag) {
    constexpr Activation A = decltype(tag)::value;
    const std::size_t n = in.size();
    const T* __restrict src = in.data();
    T* __restrict dst = out.data();
    for (std::size_t i = 0; i < n; ++i) dst[i] = detail::activate_fixed<T, A>(src[i]);
  });
}

// grad_out[i] = upstream[i] * activation_grad(pre[i]).
template <typename T>
inline void activation_backward_span(std::span<const T> upstream, std::span<const T> pre,
                                     std::span<T> grad_out, Activation a) {
  detail::dispatch(a, [&](auto tag) {
    constexpr Activation A = decltype(tag)::value;
    const std::size_t n = pre.size();
    const T* __restrict g = upstream.data();
    const T* __restrict x = pre.data();
    T* __restrict dst = grad_out.data();
    for (std::size_t i = 0; i < n; ++i) dst[i] = g[i] * detail::grad_fixed<T, A>(x[i]);
  });
}

// As above, reusing post[i] = activate(pre[i]) where the derivative is a
// function of the output (sigmoid, tanh). Bit-identical to the overload above.
template <typename T>
inline void activation_backward_span(std::span<const T> upstream, std::span<const T> pre,
                                     std::span<const T> post, std::span<T> grad_out, Activation a) {
  const std::size_t n = pre.size();
  const T* __restrict g = upstream.data();
  const T* __restrict y = post.data();
  T* __restrict dst = grad_out.data();
  if (a == Activation::Sigmoid) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = g[i] * (y[i] * (T(1) - y[i]));
  } else if (a == Activation::Tanh) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = g[i] * (T(1) - y[i] * y[i]);
  } else {
    activation_backward_span<T>(upstream, pre, grad_out, a);
  }
}

}  // namespace mlpbank
