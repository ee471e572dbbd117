#include "pvi/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace pvi {

int worker_count() {
    if (const char* env = std::getenv("PVI_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1)
            return static_cast<int>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_blocks(std::size_t n, std::size_t block_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0)
        return;
    if (block_size == 0)
        block_size = n;
    const std::size_t n_blocks = (n + block_size - 1) / block_size;
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n_blocks);

    if (workers <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b)
            fn(b * block_size, std::min(n, (b + 1) * block_size), b);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (;;) {
            std::size_t b = next.fetch_add(1);
            if (b >= n_blocks || failed.load())
                return;
            try {
                fn(b * block_size, std::min(n, (b + 1) * block_size), b);
            } catch (...) {
                if (!failed.exchange(true))
                    first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

} // namespace pvi
