#include "mnet/threading.hpp"

#include <algorithm>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace mnet {
namespace {

class Pool {
public:
    explicit Pool(int workers)
    {
        for (int i = 0; i < workers; ++i)
            threads_.emplace_back([this, i] { worker_main(i + 1); });
    }

    ~Pool()
    {
        {
            std::unique_lock<std::mutex> lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_)
            t.join();
    }

    int width() const { return static_cast<int>(threads_.size()) + 1; }

    void run(const std::function<void(int)>& task)
    {
        {
            std::unique_lock<std::mutex> lk(m_);
            task_ = &task;
            ++generation_;
            pending_ = static_cast<int>(threads_.size());
        }
        cv_.notify_all();
        task(0); // caller takes slot 0
        std::unique_lock<std::mutex> lk(m_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        task_ = nullptr;
    }

private:
    void worker_main(int slot)
    {
        uint64_t seen = 0;
        for (;;) {
            const std::function<void(int)>* task = nullptr;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_)
                    return;
                seen = generation_;
                task = task_;
            }
            (*task)(slot);
            {
                std::unique_lock<std::mutex> lk(m_);
                if (--pending_ == 0)
                    done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(int)>* task_ = nullptr;
    uint64_t generation_ = 0;
    int pending_ = 0;
    bool stop_ = false;
};

std::mutex g_mutex;           // serializes parallel regions and pool resizes
std::unique_ptr<Pool> g_pool; // guarded by g_mutex
int g_threads = 0;            // 0 = not yet initialized

int default_threads()
{
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

Pool& pool_locked()
{
    if (!g_pool) {
        if (g_threads == 0)
            g_threads = default_threads();
        g_pool = std::make_unique<Pool>(g_threads - 1);
    }
    return *g_pool;
}

} // namespace

void set_num_threads(int n)
{
    std::unique_lock<std::mutex> lk(g_mutex);
    if (n < 1)
        n = default_threads();
    if (n == g_threads && g_pool)
        return;
    g_pool.reset();
    g_threads = n;
}

int num_threads()
{
    std::unique_lock<std::mutex> lk(g_mutex);
    if (g_threads == 0)
        g_threads = default_threads();
    return g_threads;
}

void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& body)
{
    if (end <= begin)
        return;
    std::unique_lock<std::mutex> lk(g_mutex);
    Pool& pool = pool_locked();
    const int64_t count = end - begin;
    const int width = static_cast<int>(std::min<int64_t>(pool.width(), count));
    if (width <= 1) {
        lk.unlock();
        body(begin, end);
        return;
    }
    const int64_t chunk = (count + width - 1) / width;
    auto task = [&](int slot) {
        const int64_t b = begin + chunk * slot;
        const int64_t e = std::min(end, b + chunk);
        if (b < e)
            body(b, e);
    };
    pool.run(task);
}

} // namespace mnet
