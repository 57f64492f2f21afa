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

// 256-bit vector type (GCC/Clang vector extensions) and unaligned
// load/store. Lane operations are plain IEEE mul/add, so results match the
// scalar loops bit for bit under -ffp-contract=off.

#include <cstddef>
#include <cstring>

namespace mlpbank::vec {

template <typename T>
struct VecOf {
  typedef T type __attribute__((vector_size(32)));
};

template <typename T>
using Vec = typename VecOf<T>::type;

template <typename T>
inline constexpr std::size_t kLanes = 32 / sizeof(T);

template <typename T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
inline void store(T* p, Vec<T> v) {
  std::memcpy(p, &v, sizeof v);
}

}  // namespace mlpbank::vec
