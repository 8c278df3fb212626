// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace eresfd::detail {

// Splits [0, count) into contiguous chunks and runs fn(begin, end) on up to
// `threads` workers. threads <= 1 runs inline on the caller.
template <class Fn>
void parallel_for(std::int64_t count, int threads, Fn&& fn) {
    if (count <= 0) return;
    const std::int64_t workers = std::clamp<std::int64_t>(threads, 1, count);
    if (workers == 1) {
        fn(std::int64_t{0}, count);
        return;
    }
    const std::int64_t chunk = (count + workers - 1) / workers;
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (std::int64_t w = 1; w < workers; ++w) {
        const std::int64_t begin = w * chunk;
        const std::int64_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(std::int64_t{0}, std::min(count, chunk));
}

}  // namespace eresfd::detail
