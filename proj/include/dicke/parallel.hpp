// parallel.hpp - Order-preserving parallel map over independent cells.

#pragma once

#include <atomic>
#include <exception>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace dicke {

template <class T>
struct CellResult {
    std::optional<T> value;
    std::string error;

    bool ok() const { return value.has_value(); }
};

/// Default worker count: $DICKE_WORKERS if set and positive, otherwise the
/// hardware concurrency.
int default_workers();

/// Evaluates f on every cell with `workers` threads. Result k always belongs
/// to cell k; exceptions thrown by f are caught and stored as the cell error.
template <class In, class F>
auto parallel_map(const std::vector<In>& cells, F&& f, int workers)
    -> std::vector<CellResult<std::decay_t<std::invoke_result_t<F&, const In&>>>> {
    using Out = std::decay_t<std::invoke_result_t<F&, const In&>>;
    if (workers < 1) throw std::invalid_argument("worker count must be >= 1");
    std::vector<CellResult<Out>> results(cells.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= cells.size()) return;
            try {
                results[k].value.emplace(f(cells[k]));
            } catch (const std::exception& e) {
                results[k].error = e.what();
            } catch (...) {
                results[k].error = "unknown exception";
            }
        }
    };
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), cells.size());
    if (n_threads <= 1) {
        work();
        return results;
    }
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    return results;
}

}  // namespace dicke
