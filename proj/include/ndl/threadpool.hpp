#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ndl {

// Minimal fork-join pool for data-parallel chunks. Work is partitioned by
// the caller into an indexed range; results must be reduced by the caller in
// index order so the outcome does not depend on the thread count.
class ThreadPool {
  public:
    explicit ThreadPool(int threads) {
        if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads < 1) threads = 1;
        n_threads_ = threads;
    }

    int size() const { return n_threads_; }

    // Runs fn(i) for i in [0, count). Blocks until all complete.
    void parallel_for(int count, const std::function<void(int)>& fn) {
        if (count <= 0) return;
        if (n_threads_ == 1 || count == 1) {
            for (int i = 0; i < count; ++i) fn(i);
            return;
        }
        std::atomic<int> next{0};
        auto worker = [&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        };
        const int spawn = std::min(n_threads_, count) - 1;
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(spawn));
        for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
    }

  private:
    int n_threads_ = 1;
};

}  // namespace ndl
