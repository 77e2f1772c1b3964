#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace siss {

/// Worker count: SISS_THREADS if set, else hardware concurrency (at least 1).
inline int default_threads()
{
    if (const char* env = std::getenv("SISS_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0)
            return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Splits [0, n) into contiguous chunks, one per worker; fn(begin, end, worker).
template <class Fn>
void parallel_chunks(long long n, int threads, Fn&& fn)
{
    if (threads <= 0)
        threads = default_threads();
    threads = static_cast<int>(std::min<long long>(threads, std::max<long long>(1, n)));
    if (threads == 1) {
        fn(0LL, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    const long long chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const long long b = t * chunk, e = std::min(n, b + chunk);
        if (b >= e)
            break;
        pool.emplace_back([&fn, b, e, t] { fn(b, e, t); });
    }
    for (auto& th : pool)
        th.join();
}

}  // namespace siss
