#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <stop_token>
#include <thread>
#include <vector>

namespace alstream {

struct Cancelled : std::runtime_error {
    Cancelled() : std::runtime_error("task cancelled") {}
};

// Runs body(i) for i in [0, n) on at most `workers` threads owned by this
// call. Indices are claimed dynamically, so callers must write results by
// index. When several bodies throw, the exception from the smallest index is
// rethrown; remaining indices are skipped once any failure is seen.
inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t)>& body,
                         std::stop_token stop = {}) {
    if (n == 0) return;
    workers = std::clamp<std::size_t>(workers, 1, n);

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::size_t error_index = std::numeric_limits<std::size_t>::max();
    std::exception_ptr error;

    auto run = [&] {
        for (;;) {
            if (failed.load(std::memory_order_relaxed)) return;
            if (stop.stop_requested()) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::make_exception_ptr(Cancelled{});
                failed = true;
                return;
            }
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
                failed = true;
            }
        }
    };

    if (workers == 1) {
        run();
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(run);
        run();
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace alstream
