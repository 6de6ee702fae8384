#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace deco {

/// Runs body(i) for i in [0, count) on up to `threads` threads. Each index is
/// executed exactly once and writes only its own output slot, so results never
/// depend on the thread count. The first exception (by index) is rethrown.
template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body)
{
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    auto run = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(run);
    run();
    pool.clear();

    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

/// Thread count from an explicit value, else DECO_THREADS, else 1.
inline std::size_t resolve_threads(long requested)
{
    if (requested > 0) return static_cast<std::size_t>(requested);
    if (const char* env = std::getenv("DECO_THREADS")) {
        try {
            long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (...) {
        }
    }
    return 1;
}

} // namespace deco
