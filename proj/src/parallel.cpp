#include "spde/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <vector>

namespace spde {

int worker_count() {
    int n = 0;
    if (const char* env = std::getenv("SPDE_THREADS")) {
        n = std::atoi(env);
    }
    if (n <= 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
    }
    return std::max(1, n);
}

void parallel_for_blocks(long n, const std::function<void(long, long)>& body) {
    if (n <= 0) return;
    const long workers = std::min<long>(worker_count(), n);
    if (workers == 1) {
        body(0, n);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    const long chunk = (n + workers - 1) / workers;
    for (long w = 0; w < workers; ++w) {
        const long begin = w * chunk;
        const long end = std::min(n, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    for (auto& t : threads) t.join();
}

double pairwise_sum(std::span<const double> values) {
    const size_t n = values.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = values[0];
        for (size_t i = 1; i < n; ++i) s += values[i];
        return s;
    }
    const size_t half = n / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

MeanStderr mean_stderr(std::span<const double> values) {
    const size_t n = values.size();
    if (n == 0) return {0.0, 0.0};
    const double mean = pairwise_sum(values) / static_cast<double>(n);
    if (n < 2) return {mean, 0.0};
    std::vector<double> sq(n);
    for (size_t i = 0; i < n; ++i) {
        const double d = values[i] - mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace spde
