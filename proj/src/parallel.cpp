#include "embrel/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace embrel {

void parallel_for_blocked(std::size_t count, std::size_t block,
                          const std::function<void(std::size_t, std::size_t)>& body,
                          unsigned threads) {
    if (count == 0) return;
    if (block == 0) block = 1;
    unsigned hw = threads ? threads : std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    const std::size_t n_blocks = (count + block - 1) / block;
    const unsigned n_workers =
        static_cast<unsigned>(std::min<std::size_t>(hw, n_blocks));

    if (n_workers <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b)
            body(b * block, std::min(count, (b + 1) * block));
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= n_blocks) return;
            try {
                body(b * block, std::min(count, (b + 1) * block));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  unsigned threads) {
    parallel_for_blocked(
        count, 1, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) body(i);
        },
        threads);
}

}  // namespace embrel
