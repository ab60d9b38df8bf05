#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace flexris {

/// Worker cap shared by the parallel loops; 0 means hardware concurrency.
inline unsigned& thread_limit() {
    static unsigned limit = 0;
    return limit;
}

inline unsigned effective_threads() {
    unsigned n = thread_limit();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so results written to per-index slots are independent of the thread count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const std::size_t workers = std::min<std::size_t>(effective_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace flexris
