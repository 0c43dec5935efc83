#include "chaosflow/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace chaosflow {

namespace {

std::atomic<std::size_t> g_thread_count{0};

std::size_t env_thread_count() {
    if (const char* s = std::getenv("CHAOSFLOW_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(s, &end, 10);
        if (end != s && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return 0;
}

} // namespace

std::size_t thread_count() {
    if (const std::size_t n = g_thread_count.load(std::memory_order_relaxed); n > 0) return n;
    if (const std::size_t n = env_thread_count(); n > 0) return n;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

void set_thread_count(std::size_t n) { g_thread_count.store(n, std::memory_order_relaxed); }

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t, std::size_t)>& chunk_body) {
    if (begin >= end) return;
    const std::size_t total = end - begin;
    std::size_t workers = thread_count();
    if (workers > total) workers = total;
    if (workers <= 1) {
        chunk_body(begin, end);
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::size_t chunk = (total + workers - 1) / workers;

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = begin + w * chunk;
        if (lo >= end) break;
        const std::size_t hi = std::min(end, lo + chunk);
        pool.emplace_back([&, lo, hi] {
            try {
                chunk_body(lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace chaosflow
