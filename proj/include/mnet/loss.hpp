#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mnet/arch.hpp"
#include "mnet/model.hpp"
#include "mnet/tape.hpp"
#include "mnet/tensor.hpp"

namespace mnet {

// Batch of integer label grids, layout (N, D, H, W), x fastest.
struct LabelGrid {
    int64_t n = 1, d = 1, h = 1, w = 1;
    std::vector<int32_t> v;

    int64_t numel() const { return n * d * h * w; }
};

template <typename T>
Tensor<T> one_hot(const LabelGrid& labels, int num_classes);

// Nearest-neighbor batch resize under the shared half-pixel convention.
LabelGrid downsample_labels(const LabelGrid& labels, std::array<int64_t, 3> target);

// Hybrid dice + cross-entropy loss on softmax probabilities:
//   l = -( (2/C) * sum_c (sum_i x*y + eps/2) / (sum_i x + sum_i y + eps)
//          + (1/V) * sum_i sum_c y*log(x + eps) )
// with class sums taken jointly over the whole batch and V the voxel count.
// A perfect one-hot prediction gives l ~ -1.
template <typename T>
Tensor<T> hybrid_loss(Tape<T>& tape, const Tensor<T>& pred_softmax,
                      const Tensor<T>& label_onehot, T eps);

struct LossReport {
    struct AuxEntry {
        GridPos pos;
        double weight = 0.0;
        double value = 0.0;
    };
    double main = 0.0;
    std::vector<AuxEntry> aux;
    double total = 0.0;
};

template <typename T>
struct DeepSupervisionLoss {
    Tensor<T> total; // scalar, differentiable
    LossReport report;
};

// Applies softmax + hybrid loss to the main head and every auxiliary head,
// resampling the labels to each branch resolution, and combines them with
// weights (1/2)^(n-i) per branch pair.
template <typename T>
DeepSupervisionLoss<T> deep_supervision_loss(Tape<T>& tape,
                                             const typename Model<T>::Outputs& outputs,
                                             const LabelGrid& labels,
                                             const MNetConfig& config, T eps);

} // namespace mnet
