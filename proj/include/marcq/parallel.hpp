#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace marcq {

namespace detail {
inline thread_local bool inside_parallel_for = false;
}

/// Runs body(i) for every i in [0, n) on up to hardware_concurrency threads.
/// Callers write results into per-index slots, so the outcome does not depend
/// on which thread ran which index. The first exception thrown is rethrown.
/// Nested calls from inside a worker run serially.
template <typename Body>
void parallel_for(std::size_t n, Body body) {
    const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1 || detail::inside_parallel_for) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                detail::inside_parallel_for = true;
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) {
                            failure = std::current_exception();
                        }
                        next = n;
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace marcq
