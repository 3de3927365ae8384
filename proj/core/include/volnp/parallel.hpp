#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace volnp {

// Runs fn(i) for every i in [0, n) across at most n_threads workers and
// blocks until all complete. The first exception thrown by any worker is
// rethrown on the caller's thread.
inline void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, n));
    if (n_threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }

    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) {
        workers.emplace_back([&, t]() {
            try {
                for (int i = t; i < n; i += n_threads) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (std::thread& w : workers) w.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace volnp
