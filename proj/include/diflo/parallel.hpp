#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace diflo {

// Worker-pool size: hardware concurrency, capped by the DIFLO_THREADS env var.
inline int worker_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("DIFLO_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n;
}

// Runs fn(chunk_index, begin, end) over [0, count) split into fixed-size
// chunks. Chunk boundaries depend only on count and chunk_size, so any
// reduction that combines per-chunk results in chunk order is deterministic
// regardless of the worker-pool size.
template <typename Fn>
void parallel_chunks(std::int64_t count, std::int64_t chunk_size, Fn&& fn) {
    if (count <= 0) return;
    const std::int64_t n_chunks = (count + chunk_size - 1) / chunk_size;
    const int workers = std::min<std::int64_t>(worker_count(), n_chunks);

    if (workers <= 1) {
        for (std::int64_t ci = 0; ci < n_chunks; ++ci) {
            fn(ci, ci * chunk_size, std::min(count, (ci + 1) * chunk_size));
        }
        return;
    }

    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto body = [&] {
        for (;;) {
            const std::int64_t ci = next.fetch_add(1);
            if (ci >= n_chunks || failed.load()) return;
            try {
                fn(ci, ci * chunk_size, std::min(count, (ci + 1) * chunk_size));
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int i = 1; i < workers; ++i) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(error);
}

}  // namespace diflo
