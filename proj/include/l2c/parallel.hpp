#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace l2c {

// Thread budget: L2C_THREADS env var if set (min 1), else hardware concurrency.
inline unsigned thread_budget() {
    if (const char* env = std::getenv("L2C_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
        return 1;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

// Static-partition parallel loop over [0, n). Each worker owns a contiguous
// index range, so callers writing to disjoint per-index slots are
// deterministic regardless of the thread count. A throw from any index is
// rethrown on the calling thread (lowest worker index wins).
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    unsigned nt = thread_budget();
    if (n == 0) return;
    if (nt <= 1 || n == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (static_cast<size_t>(nt) > n) nt = static_cast<unsigned>(n);
    std::vector<std::thread> workers;
    workers.reserve(nt);
    size_t chunk = (n + nt - 1) / nt;
    std::vector<std::exception_ptr> errors(nt);
    for (unsigned w = 0; w < nt; ++w) {
        size_t lo = static_cast<size_t>(w) * chunk;
        size_t hi = lo + chunk < n ? lo + chunk : n;
        if (lo >= hi) break;
        workers.emplace_back([lo, hi, w, &fn, &errors] {
            try {
                for (size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace l2c
