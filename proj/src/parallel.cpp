#include "kae/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace kae {

int worker_count() {
    static const int count = [] {
        int n = static_cast<int>(std::thread::hardware_concurrency());
        if (n < 1) n = 1;
        if (const char* env = std::getenv("KAE_THREADS")) {
            const int cap = std::atoi(env);
            if (cap >= 1) n = std::min(n, cap);
        }
        return n;
    }();
    return count;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    static thread_local bool nested = false;
    const std::size_t workers = std::min<std::size_t>(worker_count(), n);
    if (workers <= 1 || nested) {
        fn(0, n);
        return;
    }
    nested = true;
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end] {
            nested = true;
            fn(begin, end);
            nested = false;
        });
    }
    fn(0, std::min(n, chunk));
    for (auto& t : threads) t.join();
    nested = false;
}

}  // namespace kae
