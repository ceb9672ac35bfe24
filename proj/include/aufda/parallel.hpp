#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace aufda {

/// Runs fn(i) for i in [0, n). Each index must write only to its own output
/// slot; results are then independent of scheduling. Falls back to a serial
/// loop on single-core hosts or tiny workloads.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t hw = std::thread::hardware_concurrency();
    if (hw <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t n_threads = std::min(hw, n);
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    std::vector<std::exception_ptr> errors(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
        workers.emplace_back([&, t]() {
            try {
                for (std::size_t i = t; i < n; i += n_threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace aufda
