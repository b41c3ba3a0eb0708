#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace plastiscan {

inline int resolve_workers(int workers) {
    if (workers > 0) return workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Static row partition: fn(begin, end) on disjoint chunks. Callers own the
/// guarantee that chunks write disjoint state, so results do not depend on
/// the partitioning.
inline void parallel_chunks(std::size_t n, int workers,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
    workers = resolve_workers(workers);
    if (workers <= 1 || n < 2) {
        if (n > 0) fn(0, n);
        return;
    }
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    const std::size_t chunk = (n + w - 1) / w;
    std::vector<std::thread> threads;
    threads.reserve(w - 1);
    for (std::size_t i = 1; i < w; ++i) {
        const std::size_t begin = i * chunk;
        if (begin >= n) break;
        threads.emplace_back(fn, begin, std::min(n, begin + chunk));
    }
    fn(0, std::min(n, chunk));
    for (auto& t : threads) t.join();
}

}  // namespace plastiscan
