#pragma once

// Block-parallel execution with deterministic reduction.
//
// Work over [0,n) is cut into fixed-size blocks; each block writes only its own
// results, and callers combine block results in block order.  Because every path
// owns a counter-based stream and the block partition is independent of the
// worker count, results are bit-identical for any COUPLING_LAB_THREADS setting.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace clab {

inline int worker_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("COUPLING_LAB_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1 && cap < hw) hw = static_cast<int>(cap);
    }
    return hw;
}

inline std::int64_t num_blocks(std::int64_t n, std::int64_t block_size) {
    return (n + block_size - 1) / block_size;
}

// fn(block_index, begin, end) must touch only block-local state.
template <class Fn>
void parallel_blocks(std::int64_t n, std::int64_t block_size, Fn&& fn) {
    const std::int64_t nb = num_blocks(n, block_size);
    const int workers = worker_count();
    if (workers <= 1 || nb <= 1) {
        for (std::int64_t b = 0; b < nb; ++b)
            fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto run = [&] {
        for (;;) {
            const std::int64_t b = next.fetch_add(1);
            if (b >= nb) return;
            fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        }
    };
    std::vector<std::thread> pool;
    const int k = static_cast<int>(std::min<std::int64_t>(workers, nb));
    pool.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) pool.emplace_back(run);
    for (auto& t : pool) t.join();
}

// pairwise sum in fixed order: O(eps log n) roundoff, independent of scheduling
inline double pairwise_sum(const double* v, std::int64_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::int64_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(v.data(), static_cast<std::int64_t>(v.size()));
}

} // namespace clab
