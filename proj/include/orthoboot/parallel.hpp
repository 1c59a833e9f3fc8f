// parallel.hpp
//
// Index-parallel loop over a bounded worker pool. Work items write into
// slots addressed by their index, so output never depends on scheduling.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace orthoboot {

struct Execution {
    // 0 means std::thread::hardware_concurrency().
    unsigned threads = 0;

    unsigned resolved() const noexcept
    {
        if (threads != 0) return threads;
        return std::max(1u, std::thread::hardware_concurrency());
    }
};

// Calls fn(k) for k in [0, count). If any call throws, the exception from
// the smallest failing index is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t count, Execution exec, Fn&& fn)
{
    const std::size_t workers = std::min<std::size_t>(exec.resolved(), count);
    if (workers <= 1) {
        for (std::size_t k = 0; k < count; ++k) fn(k);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::size_t error_index = count;
    std::exception_ptr error;

    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t k = next.fetch_add(1, std::memory_order_relaxed);
            if (k >= count) return;
            try {
                fn(k);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (k < error_index) {
                    error_index = k;
                    error = std::current_exception();
                }
                failed.store(true, std::memory_order_relaxed);
            }
        }
    };

    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace orthoboot
