// SPDX-License-Identifier: MIT
#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace awdro {

/// Resolve a thread-count request: positive values win, otherwise the
/// AWDRO_THREADS environment variable, otherwise 1.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("AWDRO_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

/// Static-partition parallel map. Worker t handles the contiguous index range
/// [t*n/T, (t+1)*n/T); each index writes only its own output slot, so results
/// are bit-identical for any thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    threads = resolve_threads(threads);
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t t = static_cast<std::size_t>(threads);
    if (t > n) t = n;
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (std::size_t w = 0; w < t; ++w) {
        std::size_t lo = n * w / t;
        std::size_t hi = n * (w + 1) / t;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace awdro
