#pragma once

#include <memory>
#include <vector>

#include "mnet/common.hpp"
#include "mnet/shape.hpp"

namespace mnet {

namespace detail {
template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad; // same length as values when requires_grad
    bool requires_grad = false;
};
} // namespace detail

// Shared-ownership handle to a dense buffer. Values are immutable by
// convention once an op has produced them; only the optimizer rewrites
// parameter values in place. Precision is fixed by the template parameter,
// so one computation graph is uniformly float or double.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, bool requires_grad = false)
        : s_(std::make_shared<detail::TensorStorage<T>>())
    {
        s_->shape = shape;
        s_->values.assign(static_cast<size_t>(shape.numel()), T(0));
        s_->requires_grad = requires_grad;
        if (requires_grad)
            s_->grad.assign(s_->values.size(), T(0));
    }

    static Tensor zeros(Shape shape) { return Tensor(shape); }

    static Tensor full(Shape shape, T value)
    {
        Tensor t(shape);
        std::fill(t.s_->values.begin(), t.s_->values.end(), value);
        return t;
    }

    static Tensor scalar(T value)
    {
        Tensor t((Shape{}));
        t.s_->values[0] = value;
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false)
    {
        check(static_cast<int64_t>(values.size()) == shape.numel(), ErrorKind::Shape,
              "buffer length ", values.size(), " does not match shape ", shape.str());
        Tensor t;
        t.s_ = std::make_shared<detail::TensorStorage<T>>();
        t.s_->shape = shape;
        t.s_->values = std::move(values);
        t.s_->requires_grad = requires_grad;
        if (requires_grad)
            t.s_->grad.assign(t.s_->values.size(), T(0));
        return t;
    }

    bool defined() const { return s_ != nullptr; }
    const Shape& shape() const { return s_->shape; }
    int64_t numel() const { return s_->shape.numel(); }
    bool requires_grad() const { return s_ && s_->requires_grad; }

    T* data() { return s_->values.data(); }
    const T* data() const { return s_->values.data(); }
    std::vector<T>& values() { return s_->values; }
    const std::vector<T>& values() const { return s_->values; }

    T* grad_data()
    {
        check(requires_grad(), ErrorKind::Logic, "tensor has no gradient buffer");
        return s_->grad.data();
    }
    const T* grad_data() const
    {
        check(requires_grad(), ErrorKind::Logic, "tensor has no gradient buffer");
        return s_->grad.data();
    }
    const std::vector<T>& grad() const
    {
        check(requires_grad(), ErrorKind::Logic, "tensor has no gradient buffer");
        return s_->grad;
    }

    void zero_grad()
    {
        if (requires_grad())
            std::fill(s_->grad.begin(), s_->grad.end(), T(0));
    }

    T item() const
    {
        check(numel() == 1, ErrorKind::Shape, "item() on non-scalar tensor ",
              s_->shape.str());
        return s_->values[0];
    }

    // identity comparison (same storage)
    bool same_storage(const Tensor& o) const { return s_ == o.s_; }

private:
    std::shared_ptr<detail::TensorStorage<T>> s_;
};

} // namespace mnet
