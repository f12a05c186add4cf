#pragma once

#include <array>
#include <string>
#include <vector>

#include "mnet/loss.hpp"
#include "mnet/model.hpp"
#include "mnet/volume.hpp"

namespace mnet {

struct TrainConfig {
    double initial_lr = 0.01;
    double momentum = 0.99;
    bool nesterov = true;
    double poly_exponent = 0.9;
    int max_epochs = 500;
    int iterations_per_epoch = 250;
    int batch_size = 2;
    std::array<int64_t, 3> patch_size{16, 32, 32};
    uint64_t seed = 1;
    double loss_eps = 1e-5;
    double fg_oversample_prob = 0.5;
    int eval_every = 0;        // epochs between dice evaluations, 0 = never
    double eval_overlap = 0.0; // sliding-window overlap during evaluation

    void validate() const;
};

struct MetricsRow {
    int epoch = 0;
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_main = 0.0;
    bool has_dice = false;
    std::vector<double> dice; // per class, 0..C-1
    double wall_seconds = 0.0;
};

struct Case {
    std::string id;
    Volume image;
    LabelVolume labels;
};
using Dataset = std::vector<Case>;

// Patch-sampled SGD training with deep supervision. Samples one case per
// batch element, steps the poly learning-rate schedule per epoch, and keeps
// the final-epoch parameters in the model. Aborts with a Numeric error
// naming epoch/iteration if the loss turns non-finite.
template <typename T>
std::vector<MetricsRow> train_loop(Model<T>& model, const Dataset& train_set,
                                   const Dataset* eval_set, const TrainConfig& cfg);

} // namespace mnet
