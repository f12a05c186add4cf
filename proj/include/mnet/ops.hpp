#pragma once

#include <array>
#include <vector>

#include "mnet/tape.hpp"
#include "mnet/tensor.hpp"

// Differentiable tensor ops. Rank-5 operands are ordered [N, C, z, y, x].
// Every op validates its preconditions up front and records its backward
// rule on the tape when any input participates in gradients.

namespace mnet::ops {

using Extent3 = std::array<int64_t, 3>; // (z, y, x)

// Cross-correlation plus bias, stride 1, zero padding. Kernel extents must
// be odd and output extents positive.
template <typename T>
Tensor<T> conv3d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, Extent3 padding);

// Window == stride, floor semantics; gradient routes to the first maximal
// element of each window in (z, y, x) scan order.
template <typename T>
Tensor<T> maxpool3d(Tape<T>& tape, const Tensor<T>& input, Extent3 window);

// Half-pixel-offset trilinear resize to an explicit target shape.
template <typename T>
Tensor<T> upsample_trilinear(Tape<T>& tape, const Tensor<T>& input, Extent3 target);

template <typename T>
Tensor<T> instance_norm(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma,
                        const Tensor<T>& beta, T eps);

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& input, T slope);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& a);

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> softmax_channels(Tape<T>& tape, const Tensor<T>& logits);

// Scalar-weighted elementwise sum of equally shaped tensors.
template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, const std::vector<Tensor<T>>& xs,
                       const std::vector<T>& weights);

// Scalar sum of all elements.
template <typename T>
Tensor<T> sum_all(Tape<T>& tape, const Tensor<T>& x);

// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. The loss must
// be a scalar recorded on this tape.
template <typename T>
void backward(Tape<T>& tape, const Tensor<T>& loss);

} // namespace mnet::ops
