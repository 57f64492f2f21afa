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
#include <atomic>
#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mlpbank {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

// Number of threads kernels may use. Defaults to 1 so runs are reproducible
// unless parallelism is requested explicitly.
inline int threads() { return detail::thread_setting().load(std::memory_order_relaxed); }

// n <= 0 selects every hardware thread.
inline void set_threads(int n) {
  if (n <= 0) {
#ifdef _OPENMP
    n = omp_get_num_procs();
#else
    n = 1;
#endif
  }
  detail::thread_setting().store(std::max(1, n), std::memory_order_relaxed);
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_num_procs();
#else
  return 1;
#endif
}

// Runs body(i) for i in [0, n). Iterations must write disjoint outputs.
// `work_per_item` is a rough op count used to skip thread start-up on tiny
// problems; results never depend on the thread count.
template <typename Body>
void parallel_for(std::size_t n, std::size_t work_per_item, Body&& body) {
  const int t = threads();
  constexpr std::size_t kMinParallelWork = 1 << 15;
  if (t <= 1 || n < 2 || n * work_per_item < kMinParallelWork) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef _OPENMP
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(t)
  for (std::ptrdiff_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
#else
  for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

}  // namespace mlpbank
