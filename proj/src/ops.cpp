#include "mnet/ops.hpp"

#include <cstring>
#include <memory>

#include "mnet/common.hpp"
#include "mnet/kernels.hpp"

namespace mnet::ops {

namespace {

const char* kAxisNames5[5] = {"N", "C", "z", "y", "x"};

template <typename T>
bool wants_grad(Tape<T>& tape, std::initializer_list<const Tensor<T>*> inputs)
{
    if (!tape.enabled())
        return false;
    for (const Tensor<T>* t : inputs)
        if (t->defined() && t->requires_grad())
            return true;
    return false;
}

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* what)
{
    check(t.shape().rank() == rank, ErrorKind::Shape, what, " must have rank ", rank,
          ", got shape ", t.shape().str());
}

} // namespace

template <typename T>
Tensor<T> conv3d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, Extent3 padding)
{
    require_rank(input, 5, "conv3d input");
    require_rank(weight, 5, "conv3d weight");
    require_rank(bias, 1, "conv3d bias");
    check(input.shape()[1] == weight.shape()[1], ErrorKind::Shape,
          "conv3d channel axis (C) mismatch: input has ", input.shape()[1],
          ", weight expects ", weight.shape()[1]);
    check(bias.shape()[0] == weight.shape()[0], ErrorKind::Shape,
          "conv3d bias extent ", bias.shape()[0], " != output channels ",
          weight.shape()[0]);

    kernels::ConvGeom g;
    g.n = input.shape()[0];
    g.cin = input.shape()[1];
    g.cout = weight.shape()[0];
    g.d = input.shape()[2];
    g.h = input.shape()[3];
    g.w = input.shape()[4];
    g.kd = weight.shape()[2];
    g.kh = weight.shape()[3];
    g.kw = weight.shape()[4];
    g.pz = padding[0];
    g.py = padding[1];
    g.px = padding[2];

    const int64_t ks[3] = {g.kd, g.kh, g.kw};
    const int64_t in[3] = {g.d, g.h, g.w};
    const int64_t pad[3] = {g.pz, g.py, g.px};
    int64_t out[3];
    for (int axis = 0; axis < 3; ++axis) {
        check(ks[axis] % 2 == 1, ErrorKind::Shape, "conv3d kernel extent on axis ",
              kAxisNames5[axis + 2], " must be odd, got ", ks[axis]);
        check(pad[axis] >= 0, ErrorKind::Shape, "conv3d padding on axis ",
              kAxisNames5[axis + 2], " must be >= 0");
        out[axis] = in[axis] + 2 * pad[axis] - ks[axis] + 1;
        check(out[axis] >= 1, ErrorKind::Shape, "conv3d output extent on axis ",
              kAxisNames5[axis + 2], " is ", out[axis], " (input ", in[axis], ", kernel ",
              ks[axis], ", padding ", pad[axis], ")");
    }
    g.od = out[0];
    g.oh = out[1];
    g.ow = out[2];

    Tensor<T> y(Shape{g.n, g.cout, g.od, g.oh, g.ow},
                wants_grad(tape, {&input, &weight, &bias}));
    kernels::conv3d_forward(input.data(), weight.data(), bias.data(), y.data(), g);

    if (y.requires_grad()) {
        Tensor<T> x = input, w = weight, b = bias, out_t = y;
        tape.record([x, w, b, out_t, g]() mutable {
            if (x.requires_grad())
                kernels::conv3d_backward_input(out_t.grad_data(), w.data(), x.grad_data(),
                                               g);
            if (w.requires_grad())
                kernels::conv3d_backward_weight(x.data(), out_t.grad_data(),
                                                w.grad_data(), g);
            if (b.requires_grad())
                kernels::conv3d_backward_bias(out_t.grad_data(), b.grad_data(), g);
        });
    }
    return y;
}

template <typename T>
Tensor<T> maxpool3d(Tape<T>& tape, const Tensor<T>& input, Extent3 window)
{
    require_rank(input, 5, "maxpool3d input");
    kernels::PoolGeom g;
    g.n = input.shape()[0];
    g.c = input.shape()[1];
    g.d = input.shape()[2];
    g.h = input.shape()[3];
    g.w = input.shape()[4];
    g.wz = window[0];
    g.wy = window[1];
    g.wx = window[2];
    const int64_t in[3] = {g.d, g.h, g.w};
    const int64_t win[3] = {g.wz, g.wy, g.wx};
    for (int axis = 0; axis < 3; ++axis) {
        check(win[axis] >= 1, ErrorKind::Shape, "maxpool3d window extent on axis ",
              kAxisNames5[axis + 2], " must be >= 1");
        check(win[axis] <= in[axis], ErrorKind::Shape, "maxpool3d window extent ",
              win[axis], " exceeds input extent ", in[axis], " on axis ",
              kAxisNames5[axis + 2]);
    }
    g.od = g.d / g.wz;
    g.oh = g.h / g.wy;
    g.ow = g.w / g.wx;

    Tensor<T> y(Shape{g.n, g.c, g.od, g.oh, g.ow}, wants_grad(tape, {&input}));
    auto argmax = std::make_shared<std::vector<int64_t>>(
        static_cast<size_t>(g.n * g.c * g.od * g.oh * g.ow));
    kernels::maxpool3d_forward(input.data(), y.data(), argmax->data(), g);

    if (y.requires_grad()) {
        Tensor<T> x = input, out_t = y;
        tape.record([x, out_t, argmax, g]() mutable {
            kernels::maxpool3d_backward(out_t.grad_data(), argmax->data(), x.grad_data(),
                                        g);
        });
    }
    return y;
}

template <typename T>
Tensor<T> upsample_trilinear(Tape<T>& tape, const Tensor<T>& input, Extent3 target)
{
    require_rank(input, 5, "upsample_trilinear input");
    for (int axis = 0; axis < 3; ++axis)
        check(target[axis] >= 1, ErrorKind::Shape,
              "upsample_trilinear target extent on axis ", kAxisNames5[axis + 2],
              " must be >= 1, got ", target[axis]);

    kernels::ResizeGeom g;
    g.n = input.shape()[0];
    g.c = input.shape()[1];
    g.d = input.shape()[2];
    g.h = input.shape()[3];
    g.w = input.shape()[4];
    g.od = target[0];
    g.oh = target[1];
    g.ow = target[2];

    Tensor<T> y(Shape{g.n, g.c, g.od, g.oh, g.ow}, wants_grad(tape, {&input}));
    kernels::upsample3d_forward(input.data(), y.data(), g);

    if (y.requires_grad()) {
        Tensor<T> x = input, out_t = y;
        tape.record([x, out_t, g]() mutable {
            kernels::upsample3d_backward(out_t.grad_data(), x.grad_data(), g);
        });
    }
    return y;
}

template <typename T>
Tensor<T> instance_norm(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma,
                        const Tensor<T>& beta, T eps)
{
    require_rank(input, 5, "instance_norm input");
    require_rank(gamma, 1, "instance_norm gamma");
    require_rank(beta, 1, "instance_norm beta");
    check(eps > T(0), ErrorKind::Shape, "instance_norm eps must be > 0");
    const int64_t c = input.shape()[1];
    check(gamma.shape()[0] == c && beta.shape()[0] == c, ErrorKind::Shape,
          "instance_norm affine extents (", gamma.shape()[0], ", ", beta.shape()[0],
          ") != channel count ", c);

    kernels::NormGeom g;
    g.n = input.shape()[0];
    g.c = c;
    g.m = input.shape()[2] * input.shape()[3] * input.shape()[4];

    Tensor<T> y(input.shape(), wants_grad(tape, {&input, &gamma, &beta}));
    auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(g.n * g.c));
    auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(g.n * g.c));
    kernels::instnorm_forward(input.data(), gamma.data(), beta.data(), eps, y.data(),
                              mean->data(), invstd->data(), g);

    if (y.requires_grad()) {
        Tensor<T> x = input, ga = gamma, be = beta, out_t = y;
        tape.record([x, ga, be, out_t, mean, invstd, g]() mutable {
            // the kernel produces gx, ggamma and gbeta together; route each
            // into the real buffer or a discarded scratch one
            std::vector<T> scratch_x, scratch_g, scratch_b;
            T* gx = nullptr;
            if (x.requires_grad()) {
                gx = x.grad_data();
            } else {
                scratch_x.assign(x.values().size(), T(0));
                gx = scratch_x.data();
            }
            T* gg = nullptr;
            if (ga.requires_grad()) {
                gg = ga.grad_data();
            } else {
                scratch_g.assign(static_cast<size_t>(g.c), T(0));
                gg = scratch_g.data();
            }
            T* gb = nullptr;
            if (be.requires_grad()) {
                gb = be.grad_data();
            } else {
                scratch_b.assign(static_cast<size_t>(g.c), T(0));
                gb = scratch_b.data();
            }
            kernels::instnorm_backward(x.data(), ga.data(), mean->data(), invstd->data(),
                                       out_t.grad_data(), gx, gg, gb, g);
        });
    }
    return y;
}

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& input, T slope)
{
    Tensor<T> y(input.shape(), wants_grad(tape, {&input}));
    kernels::leaky_relu_forward(input.data(), slope, y.data(), input.numel());
    if (y.requires_grad()) {
        Tensor<T> x = input, out_t = y;
        tape.record([x, out_t, slope]() mutable {
            kernels::leaky_relu_backward(x.data(), out_t.grad_data(), slope,
                                         x.grad_data(), x.numel());
        });
    }
    return y;
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op)
{
    check(a.shape() == b.shape(), ErrorKind::Shape, op, " operand shapes differ: ",
          a.shape().str(), " vs ", b.shape().str());
}

} // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "add");
    Tensor<T> y(a.shape(), wants_grad(tape, {&a, &b}));
    kernels::add(a.data(), b.data(), y.data(), a.numel());
    if (y.requires_grad()) {
        Tensor<T> ta = a, tb = b, out_t = y;
        tape.record([ta, tb, out_t]() mutable {
            if (ta.requires_grad())
                kernels::axpy(T(1), out_t.grad_data(), ta.grad_data(), ta.numel());
            if (tb.requires_grad())
                kernels::axpy(T(1), out_t.grad_data(), tb.grad_data(), tb.numel());
        });
    }
    return y;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "sub");
    Tensor<T> y(a.shape(), wants_grad(tape, {&a, &b}));
    kernels::sub(a.data(), b.data(), y.data(), a.numel());
    if (y.requires_grad()) {
        Tensor<T> ta = a, tb = b, out_t = y;
        tape.record([ta, tb, out_t]() mutable {
            if (ta.requires_grad())
                kernels::axpy(T(1), out_t.grad_data(), ta.grad_data(), ta.numel());
            if (tb.requires_grad())
                kernels::axpy(T(-1), out_t.grad_data(), tb.grad_data(), tb.numel());
        });
    }
    return y;
}

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& a)
{
    Tensor<T> y(a.shape(), wants_grad(tape, {&a}));
    kernels::abs_val(a.data(), y.data(), a.numel());
    if (y.requires_grad()) {
        Tensor<T> ta = a, out_t = y;
        tape.record([ta, out_t]() mutable {
            kernels::abs_backward(ta.data(), out_t.grad_data(), ta.grad_data(),
                                  ta.numel());
        });
    }
    return y;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b)
{
    require_rank(a, 5, "concat_channels lhs");
    require_rank(b, 5, "concat_channels rhs");
    for (int axis : {0, 2, 3, 4})
        check(a.shape()[axis] == b.shape()[axis], ErrorKind::Shape,
              "concat_channels extent mismatch on axis ", kAxisNames5[axis], ": ",
              a.shape()[axis], " vs ", b.shape()[axis]);

    const int64_t n = a.shape()[0];
    const int64_t ca = a.shape()[1], cb = b.shape()[1];
    const int64_t s = a.shape()[2] * a.shape()[3] * a.shape()[4];
    Tensor<T> y(Shape{n, ca + cb, a.shape()[2], a.shape()[3], a.shape()[4]},
                wants_grad(tape, {&a, &b}));
    for (int64_t ni = 0; ni < n; ++ni) {
        std::memcpy(y.data() + ni * (ca + cb) * s, a.data() + ni * ca * s,
                    static_cast<size_t>(ca * s) * sizeof(T));
        std::memcpy(y.data() + (ni * (ca + cb) + ca) * s, b.data() + ni * cb * s,
                    static_cast<size_t>(cb * s) * sizeof(T));
    }
    if (y.requires_grad()) {
        Tensor<T> ta = a, tb = b, out_t = y;
        tape.record([ta, tb, out_t, n, ca, cb, s]() mutable {
            const T* gy = out_t.grad_data();
            for (int64_t ni = 0; ni < n; ++ni) {
                if (ta.requires_grad())
                    kernels::axpy(T(1), gy + ni * (ca + cb) * s,
                                  ta.grad_data() + ni * ca * s, ca * s);
                if (tb.requires_grad())
                    kernels::axpy(T(1), gy + (ni * (ca + cb) + ca) * s,
                                  tb.grad_data() + ni * cb * s, cb * s);
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> softmax_channels(Tape<T>& tape, const Tensor<T>& logits)
{
    require_rank(logits, 5, "softmax_channels input");
    const int64_t n = logits.shape()[0];
    const int64_t c = logits.shape()[1];
    const int64_t m = logits.shape()[2] * logits.shape()[3] * logits.shape()[4];

    Tensor<T> y(logits.shape(), wants_grad(tape, {&logits}));
    kernels::softmax_channels_forward(logits.data(), y.data(), n, c, m);
    if (y.requires_grad()) {
        Tensor<T> x = logits, out_t = y;
        tape.record([x, out_t, n, c, m]() mutable {
            kernels::softmax_channels_backward(out_t.data(), out_t.grad_data(),
                                               x.grad_data(), n, c, m);
        });
    }
    return y;
}

template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, const std::vector<Tensor<T>>& xs,
                       const std::vector<T>& weights)
{
    check(!xs.empty(), ErrorKind::Shape, "weighted_sum needs at least one operand");
    check(xs.size() == weights.size(), ErrorKind::Shape, "weighted_sum got ", xs.size(),
          " tensors but ", weights.size(), " weights");
    for (const auto& x : xs)
        require_same_shape(xs[0], x, "weighted_sum");

    bool grad = false;
    for (const auto& x : xs)
        grad = grad || (tape.enabled() && x.requires_grad());

    Tensor<T> y(xs[0].shape(), grad);
    for (size_t k = 0; k < xs.size(); ++k)
        kernels::axpy(weights[k], xs[k].data(), y.data(), y.numel());

    if (y.requires_grad()) {
        std::vector<Tensor<T>> inputs = xs;
        std::vector<T> w = weights;
        Tensor<T> out_t = y;
        tape.record([inputs, w, out_t]() mutable {
            for (size_t k = 0; k < inputs.size(); ++k)
                if (inputs[k].requires_grad())
                    kernels::axpy(w[k], out_t.grad_data(), inputs[k].grad_data(),
                                  inputs[k].numel());
        });
    }
    return y;
}

template <typename T>
Tensor<T> sum_all(Tape<T>& tape, const Tensor<T>& x)
{
    Tensor<T> y((Shape{}), wants_grad(tape, {&x}));
    y.data()[0] = kernels::reduce_sum(x.data(), x.numel());
    if (y.requires_grad()) {
        Tensor<T> tx = x, out_t = y;
        tape.record([tx, out_t]() mutable {
            const T g = out_t.grad_data()[0];
            T* gx = tx.grad_data();
            for (int64_t i = 0; i < tx.numel(); ++i)
                gx[i] += g;
        });
    }
    return y;
}

template <typename T>
void backward(Tape<T>& tape, const Tensor<T>& loss)
{
    check(loss.defined(), ErrorKind::Logic, "backward on undefined tensor");
    check(loss.numel() == 1, ErrorKind::Shape, "backward requires a scalar loss, got ",
          loss.shape().str());
    if (!loss.requires_grad())
        return; // nothing on the tape feeds it; all gradients stay zero
    Tensor<T> l = loss;
    l.grad_data()[0] = T(1);
    tape.replay_backward();
}

#define MNET_INSTANTIATE_OPS(T)                                                           \
    template Tensor<T> conv3d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                 const Tensor<T>&, Extent3);                             \
    template Tensor<T> maxpool3d<T>(Tape<T>&, const Tensor<T>&, Extent3);                \
    template Tensor<T> upsample_trilinear<T>(Tape<T>&, const Tensor<T>&, Extent3);       \
    template Tensor<T> instance_norm<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                        const Tensor<T>&, T);                            \
    template Tensor<T> leaky_relu<T>(Tape<T>&, const Tensor<T>&, T);                     \
    template Tensor<T> add<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> sub<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> abs<T>(Tape<T>&, const Tensor<T>&);                               \
    template Tensor<T> concat_channels<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> softmax_channels<T>(Tape<T>&, const Tensor<T>&);                  \
    template Tensor<T> weighted_sum<T>(Tape<T>&, const std::vector<Tensor<T>>&,          \
                                       const std::vector<T>&);                           \
    template Tensor<T> sum_all<T>(Tape<T>&, const Tensor<T>&);                           \
    template void backward<T>(Tape<T>&, const Tensor<T>&);

MNET_INSTANTIATE_OPS(float)
MNET_INSTANTIATE_OPS(double)

#undef MNET_INSTANTIATE_OPS

} // namespace mnet::ops
