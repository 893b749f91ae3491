// Index-ordered parallel map over a fixed worker count. Calls made from inside
// a worker run serially, so nested use never oversubscribes.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace varhom {

namespace detail {
inline int& default_jobs_slot() {
    static int jobs = 0;
    return jobs;
}
inline bool& in_worker() {
    thread_local bool flag = false;
    return flag;
}
}  // namespace detail

/// 0 selects the number of logical cores.
inline void set_default_jobs(int jobs) { detail::default_jobs_slot() = std::max(0, jobs); }

inline int default_jobs() {
    const int j = detail::default_jobs_slot();
    if (j > 0) return j;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// out[i] = fn(i) for i in [0, n). The first exception (lowest index) is rethrown.
template <class Fn>
auto parallel_map(std::size_t n, Fn&& fn, int jobs = 0) -> std::vector<decltype(fn(std::size_t{}))> {
    using T = decltype(fn(std::size_t{}));
    std::vector<T> out(n);
    const std::size_t workers =
        detail::in_worker() ? 1 : std::min<std::size_t>(n, static_cast<std::size_t>(jobs > 0 ? jobs : default_jobs()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto work = [&] {
        detail::in_worker() = true;
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                out[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
        detail::in_worker() = false;
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace varhom
