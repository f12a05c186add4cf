#pragma once

#include <functional>
#include <utility>
#include <vector>

namespace mnet {

// Records backward closures in execution order. Replaying them in reverse
// visits every recorded op exactly once; closures accumulate (+=) into the
// gradient buffers of their inputs, so fan-out adds up naturally.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(BackwardFn fn)
    {
        if (enabled_)
            entries_.push_back(std::move(fn));
    }

    bool enabled() const { return enabled_; }
    void set_enabled(bool on) { enabled_ = on; }

    size_t size() const { return entries_.size(); }

    void clear() { entries_.clear(); }

    void replay_backward()
    {
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
            (*it)();
    }

private:
    std::vector<BackwardFn> entries_;
    bool enabled_ = true;
};

// Disables recording for the tape while alive (inference mode).
template <typename T>
class NoGradGuard {
public:
    explicit NoGradGuard(Tape<T>& tape) : tape_(tape), prev_(tape.enabled())
    {
        tape_.set_enabled(false);
    }
    ~NoGradGuard() { tape_.set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape<T>& tape_;
    bool prev_;
};

} // namespace mnet
