#pragma once

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace prograde {

/// Library-wide error type. Every failure surfaces as one of these with a
/// single-line, machine-parsable reason.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void raise(const std::string& msg) { throw Error(msg); }

inline void check(bool cond, const std::string& msg) {
    if (!cond) raise(msg);
}

// ---------------------------------------------------------------------------
// Thread pool. Work is split into static per-thread ranges, so any given
// output element is always produced by exactly one worker with a fixed
// reduction order; results do not depend on the number of threads.
// ---------------------------------------------------------------------------

class ThreadPool {
  public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int size() const { return static_cast<int>(workers_.size()) + 1; }

    void set_size(int n) {
        std::lock_guard<std::mutex> lk(api_mutex_);
        stop_workers();
        start_workers(n);
    }

    // Runs fn(thread_index, begin, end) on [0, n) split into contiguous ranges.
    void run(std::int64_t n, const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
        if (n <= 0) return;
        std::lock_guard<std::mutex> lk(api_mutex_);
        const int nt = std::min<std::int64_t>(size(), n);
        if (nt <= 1) {
            fn(0, 0, n);
            return;
        }
        pending_.store(nt - 1);
        const std::int64_t chunk = (n + nt - 1) / nt;
        {
            std::lock_guard<std::mutex> g(mutex_);
            jobs_.clear();
            for (int t = 1; t < nt; ++t) {
                std::int64_t b = t * chunk, e = std::min<std::int64_t>(n, b + chunk);
                if (b < e) jobs_.push_back([=, &fn] { fn(t, b, e); });
                else pending_.fetch_sub(1);
            }
        }
        cv_.notify_all();
        fn(0, 0, std::min<std::int64_t>(n, chunk));
        std::unique_lock<std::mutex> g(mutex_);
        done_cv_.wait(g, [&] { return pending_.load() == 0; });
    }

    ~ThreadPool() { stop_workers(); }

  private:
    ThreadPool() { start_workers(default_size()); }

    static int default_size() {
        if (const char* env = std::getenv("PROGRADE_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }

    void start_workers(int n) {
        stopping_ = false;
        for (int i = 1; i < n; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    void stop_workers() {
        {
            std::lock_guard<std::mutex> g(mutex_);
            stopping_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
        workers_.clear();
    }

    void worker_loop() {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock<std::mutex> g(mutex_);
                cv_.wait(g, [&] { return stopping_ || !jobs_.empty(); });
                if (stopping_ && jobs_.empty()) return;
                job = std::move(jobs_.back());
                jobs_.pop_back();
            }
            job();
            if (pending_.fetch_sub(1) == 1) {
                std::lock_guard<std::mutex> g(mutex_);
                done_cv_.notify_all();
            }
        }
    }

    std::mutex api_mutex_;
    std::mutex mutex_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> workers_;
    std::vector<std::function<void()>> jobs_;
    std::atomic<int> pending_{0};
    bool stopping_ = false;
};

inline int max_threads() { return ThreadPool::instance().size(); }
inline void set_max_threads(int n) { ThreadPool::instance().set_size(std::max(1, n)); }

template <typename F>
void parallel_for(std::int64_t n, F&& fn, std::int64_t serial_cutoff = 1) {
    if (n <= serial_cutoff || max_threads() <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    ThreadPool::instance().run(n, [&](int, std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) fn(i);
    });
}

template <typename T>
bool is_finite_value(T v) {
    return std::isfinite(static_cast<double>(v));
}

}  // namespace prograde
