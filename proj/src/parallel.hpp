#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

#include "qk/kernels.hpp"

namespace qk::detail {

/// Splits [0, count) into contiguous ranges, one per thread. Each worker gets
/// private counters which are summed into `counters` after the join.
template <class Fn>
void parallel_ranges(std::size_t count, int threads, PerfCounters* counters, Fn&& fn) {
    const std::size_t workers = std::clamp<std::size_t>(threads < 1 ? 1 : static_cast<std::size_t>(threads), 1,
                                                        std::max<std::size_t>(count, 1));
    std::vector<PerfCounters> local(workers);
    if (workers == 1) {
        fn(std::size_t{0}, count, local[0]);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = count * w / workers;
            const std::size_t end = count * (w + 1) / workers;
            pool.emplace_back([&fn, &local, w, begin, end] { fn(begin, end, local[w]); });
        }
    }
    if (counters) {
        for (const auto& c : local) *counters += c;
    }
}

}  // namespace qk::detail
