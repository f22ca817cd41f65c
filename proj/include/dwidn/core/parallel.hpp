#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dwidn {

/// Splits [0, n) into `workers` contiguous chunks (chunk w covers a fixed
/// range that depends only on n and workers) and runs fn(begin, end, w) on
/// each. Callers that accumulate per-worker partials and reduce them in
/// worker order get results that are reproducible for a fixed worker count.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t workers, Fn&& fn)
{
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        if (n > 0)
            fn(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t base = n / workers, extra = n % workers;
    std::size_t begin = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t end = begin + base + (w < extra ? 1 : 0);
        pool.emplace_back([&, begin, end, w] {
            try {
                fn(begin, end, w);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
        begin = end;
    }
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

inline std::size_t chunk_count(std::size_t n, std::size_t workers)
{
    return std::max<std::size_t>(1, std::min(workers, n));
}

} // namespace dwidn
