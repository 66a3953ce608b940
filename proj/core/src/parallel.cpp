#include "zamba/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace zamba {
namespace {

// Lazily started pool; workers park on a condition variable between jobs.
class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    void resize(int n) {
        std::unique_lock<std::mutex> lk(mu_);
        if (n == static_cast<int>(workers_.size()) + 1) return;
        shutdown_locked(lk);
        target_ = n;
        for (int i = 1; i < n; ++i) {
            // workers must not wake for generations that predate them
            workers_.emplace_back([this, i, gen = generation_] { worker(i, gen); });
        }
    }

    int size() const { return target_; }

    void run(int64_t begin, int64_t end, const std::function<void(int64_t, int64_t)>& body) {
        const int n = target_;
        const int64_t total = end - begin;
        if (n <= 1 || total <= 1) {
            if (total > 0) body(begin, end);
            return;
        }
        const int chunks = static_cast<int>(std::min<int64_t>(n, total));
        {
            std::unique_lock<std::mutex> lk(mu_);
            job_begin_ = begin;
            job_end_ = end;
            job_chunks_ = chunks;
            body_ = &body;
            pending_ = chunks - 1;
            ++generation_;
        }
        cv_.notify_all();
        run_chunk(0);
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        body_ = nullptr;
    }

    ~Pool() {
        std::unique_lock<std::mutex> lk(mu_);
        shutdown_locked(lk);
    }

private:
    void run_chunk(int c) {
        const int64_t total = job_end_ - job_begin_;
        const int64_t lo = job_begin_ + total * c / job_chunks_;
        const int64_t hi = job_begin_ + total * (c + 1) / job_chunks_;
        if (lo < hi) (*body_)(lo, hi);
    }

    void worker(int id, uint64_t seen) {
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
            }
            if (id < job_chunks_) {
                run_chunk(id);
                std::unique_lock<std::mutex> lk(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    void shutdown_locked(std::unique_lock<std::mutex>& lk) {
        stop_ = true;
        cv_.notify_all();
        lk.unlock();
        for (auto& w : workers_) w.join();
        lk.lock();
        workers_.clear();
        stop_ = false;
        target_ = 1;
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(int64_t, int64_t)>* body_ = nullptr;
    int64_t job_begin_ = 0, job_end_ = 0;
    int job_chunks_ = 0;
    int pending_ = 0;
    uint64_t generation_ = 0;
    int target_ = 1;
    bool stop_ = false;
};

}  // namespace

void set_num_threads(int n) { Pool::instance().resize(n < 1 ? 1 : n); }

int num_threads() { return Pool::instance().size(); }

void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t, int64_t)>& body) {
    Pool::instance().run(begin, end, body);
}

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
#endif
}

}  // namespace zamba
