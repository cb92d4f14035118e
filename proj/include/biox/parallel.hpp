#pragma once

// Minimal data-parallel loop. Work items must be independent and write only
// to their own output slots; results are then identical for any worker count.
// The BIOX_WORKERS environment variable caps the thread count (1 = serial).

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace biox {

inline int64_t worker_count() {
    if (const char* env = std::getenv("BIOX_WORKERS")) {
        try {
            int64_t n = std::stoll(env);
            if (n >= 1) return n;
        } catch (...) {
            // Fall through to the hardware default on unparsable values.
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int64_t>(hw);
}

inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    int64_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    for (int64_t w = 0; w < workers; ++w) {
        // Contiguous block per worker keeps cache behavior predictable.
        int64_t lo = n * w / workers;
        int64_t hi = n * (w + 1) / workers;
        pool.emplace_back([&, lo, hi, w] {
            try {
                for (int64_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace biox
