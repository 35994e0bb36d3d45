#pragma once

// Block-sharded reductions whose result does not depend on the worker count.
//
// Work items are cut into fixed-size blocks. Each block is reduced
// sequentially, and block results are merged in block order, so the floating
// point result is identical for 1 or 64 workers.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mkit {

inline constexpr std::size_t kReductionBlock = 2048;

/// Worker count from MKIT_WORKERS, falling back to the hardware concurrency.
inline int default_workers() {
    if (const char* env = std::getenv("MKIT_WORKERS")) {
        try {
            const int w = std::stoi(env);
            if (w >= 1) return w;
        } catch (...) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(block_index, begin, end) for every block, on up to `workers`
/// threads. The first exception thrown by any block is rethrown.
template <class Body>
void for_each_block(std::size_t n_items, int workers, Body&& body, std::size_t block = kReductionBlock) {
    const std::size_t n_blocks = (n_items + block - 1) / block;
    if (n_blocks == 0) return;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n_blocks);
    if (n_threads == 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) body(b, b * block, std::min(n_items, (b + 1) * block));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                body(b, b * block, std::min(n_items, (b + 1) * block));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n_blocks);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

/// Deterministic map-reduce: `make(begin, end)` reduces one block into an
/// accumulator; `merge(acc, block_acc)` folds block results in block order.
template <class Acc, class Make, class Merge>
Acc reduce_blocks(std::size_t n_items, int workers, Acc init, Make&& make, Merge&& merge,
                  std::size_t block = kReductionBlock) {
    const std::size_t n_blocks = (n_items + block - 1) / block;
    std::vector<Acc> partial(n_blocks, init);
    for_each_block(
        n_items, workers,
        [&](std::size_t b, std::size_t begin, std::size_t end) { partial[b] = make(begin, end); }, block);
    for (auto& p : partial) merge(init, p);
    return init;
}

}  // namespace mkit
