#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace im2mesh {

/// Static row partition across `threads` workers; inline when threads <= 1.
/// Workers receive (worker_index, row_begin, row_end).
inline void parallel_rows(int rows, int threads,
                          const std::function<void(int, int, int)>& fn) {
    if (threads <= 1 || rows <= 1) {
        fn(0, 0, rows);
        return;
    }
    int workers = std::min(threads, rows);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    int chunk = (rows + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int begin = w * chunk;
        int end = std::min(rows, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(fn, w, begin, end);
    }
    for (auto& t : pool) t.join();
}

}  // namespace im2mesh
