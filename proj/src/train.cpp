#include "mnet/train.hpp"

#include <chrono>
#include <cmath>

#include "mnet/inference.hpp"
#include "mnet/metrics.hpp"
#include "mnet/optim.hpp"
#include "mnet/sampling.hpp"

namespace mnet {

void TrainConfig::validate() const
{
    // 0 is allowed so a no-op training run can serve as a determinism probe
    check(initial_lr >= 0.0, ErrorKind::Config, "initial_lr must be >= 0");
    check(momentum >= 0.0 && momentum < 1.0, ErrorKind::Config,
          "momentum must be in [0,1)");
    check(poly_exponent > 0.0, ErrorKind::Config, "poly_exponent must be > 0");
    check(max_epochs >= 1, ErrorKind::Config, "max_epochs must be >= 1");
    check(iterations_per_epoch >= 1, ErrorKind::Config,
          "iterations_per_epoch must be >= 1");
    check(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
    for (int64_t e : patch_size)
        check(e >= 16, ErrorKind::Config, "patch extents must be >= 16, got ", e);
    check(loss_eps > 0.0, ErrorKind::Config, "loss_eps must be > 0");
    check(fg_oversample_prob >= 0.0 && fg_oversample_prob <= 1.0, ErrorKind::Config,
          "fg_oversample_prob must be in [0,1]");
    check(eval_every >= 0, ErrorKind::Config, "eval_every must be >= 0");
    check(eval_overlap >= 0.0 && eval_overlap < 1.0, ErrorKind::Config,
          "eval_overlap must be in [0,1)");
}

namespace {

template <typename T>
std::pair<Tensor<T>, LabelGrid> assemble_batch(const Dataset& data,
                                               const TrainConfig& cfg, Rng& rng)
{
    const auto& ps = cfg.patch_size;
    const int64_t c = data.front().image.c;
    Tensor<T> batch(Shape{cfg.batch_size, c, ps[0], ps[1], ps[2]});
    LabelGrid labels;
    labels.n = cfg.batch_size;
    labels.d = ps[0];
    labels.h = ps[1];
    labels.w = ps[2];
    labels.v.resize(static_cast<size_t>(labels.numel()));

    const int64_t patch_voxels = ps[0] * ps[1] * ps[2];
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
        const size_t case_idx = data.size() == 1
                                    ? 0
                                    : std::uniform_int_distribution<size_t>(
                                          0, data.size() - 1)(rng);
        const Case& sample = data[case_idx];
        PatchPair patch = sample_patch(sample.image, sample.labels, ps,
                                       cfg.fg_oversample_prob, rng);
        for (int64_t i = 0; i < c * patch_voxels; ++i)
            batch.data()[b * c * patch_voxels + i] = static_cast<T>(patch.image[i]);
        std::copy(patch.labels.begin(), patch.labels.end(),
                  labels.v.begin() + b * patch_voxels);
    }
    return {batch, labels};
}

} // namespace

template <typename T>
std::vector<MetricsRow> train_loop(Model<T>& model, const Dataset& train_set,
                                   const Dataset* eval_set, const TrainConfig& cfg)
{
    cfg.validate();
    check(!train_set.empty(), ErrorKind::Config, "training set is empty");
    for (const Case& c : train_set) {
        c.image.validate();
        c.labels.validate();
    }

    const auto& params = model.parameters();
    SgdState<T> state = init_sgd_state(params);
    Rng sample_rng = make_rng(cfg.seed, 1);

    std::vector<MetricsRow> history;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr =
            poly_lr(epoch, cfg.max_epochs, cfg.initial_lr, cfg.poly_exponent);

        double sum_total = 0.0, sum_main = 0.0;
        for (int iter = 0; iter < cfg.iterations_per_epoch; ++iter) {
            auto [batch, labels] = assemble_batch<T>(train_set, cfg, sample_rng);
            Tape<T> tape;
            auto outputs = model.forward(tape, batch);
            auto loss = deep_supervision_loss(tape, outputs, labels, model.config(),
                                              static_cast<T>(cfg.loss_eps));
            check(std::isfinite(loss.report.total), ErrorKind::Numeric,
                  "non-finite loss at epoch ", epoch, " iteration ", iter);
            zero_gradients(params);
            ops::backward(tape, loss.total);
            sgd_step(params, state, lr, cfg.momentum, cfg.nesterov);
            tape.clear();
            sum_total += loss.report.total;
            sum_main += loss.report.main;
        }

        MetricsRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.loss_total = sum_total / cfg.iterations_per_epoch;
        row.loss_main = sum_main / cfg.iterations_per_epoch;

        const bool last_epoch = epoch == cfg.max_epochs - 1;
        if (eval_set && !eval_set->empty() && cfg.eval_every > 0 &&
            ((epoch + 1) % cfg.eval_every == 0 || last_epoch)) {
            const int classes = model.config().num_classes;
            std::vector<double> dice_sum(static_cast<size_t>(classes), 0.0);
            for (const Case& c : *eval_set) {
                LabelVolume pred = sliding_window_predict(model, c.image,
                                                          cfg.patch_size,
                                                          cfg.eval_overlap);
                for (int cls = 0; cls < classes; ++cls)
                    dice_sum[static_cast<size_t>(cls)] +=
                        dice_score(pred, c.labels, cls);
            }
            row.has_dice = true;
            row.dice.resize(static_cast<size_t>(classes));
            for (int cls = 0; cls < classes; ++cls)
                row.dice[static_cast<size_t>(cls)] =
                    dice_sum[static_cast<size_t>(cls)] /
                    static_cast<double>(eval_set->size());
        }

        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.push_back(std::move(row));
    }
    return history;
}

template std::vector<MetricsRow> train_loop<float>(Model<float>&, const Dataset&,
                                                   const Dataset*, const TrainConfig&);
template std::vector<MetricsRow> train_loop<double>(Model<double>&, const Dataset&,
                                                    const Dataset*, const TrainConfig&);

} // namespace mnet
