#pragma once

#include "lmm/core.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace lmm {

// Runs fn(i) for i in [0, n) on up to `threads` workers using contiguous
// chunks. The first exception thrown by a worker is rethrown here.
template <typename Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
    const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(n, 1));
    if (workers == 1) {
        for (Index i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const Index chunk = (n + workers - 1) / workers;
    for (Index w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const Index end = std::min(n, (w + 1) * chunk);
                for (Index i = w * chunk; i < end; ++i) {
                    fn(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

// Pairwise summation; result does not depend on how values were produced.
template <typename It>
double pairwise_sum(It first, It last) {
    const auto n = std::distance(first, last);
    if (n <= 8) {
        double s = 0.0;
        for (; first != last; ++first) {
            s += *first;
        }
        return s;
    }
    const It mid = std::next(first, n / 2);
    return pairwise_sum(first, mid) + pairwise_sum(mid, last);
}

}  // namespace lmm
