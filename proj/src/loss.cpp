#include "mnet/loss.hpp"

#include <cmath>
#include <memory>

#include "mnet/coords.hpp"

namespace mnet {

template <typename T>
Tensor<T> one_hot(const LabelGrid& labels, int num_classes)
{
    check(num_classes >= 2, ErrorKind::Config, "one_hot needs num_classes >= 2");
    const int64_t m = labels.d * labels.h * labels.w;
    Tensor<T> out(Shape{labels.n, num_classes, labels.d, labels.h, labels.w});
    for (int64_t ni = 0; ni < labels.n; ++ni)
        for (int64_t i = 0; i < m; ++i) {
            const int32_t cls = labels.v[static_cast<size_t>(ni * m + i)];
            check(cls >= 0 && cls < num_classes, ErrorKind::Shape, "label value ", cls,
                  " outside 0..", num_classes - 1);
            out.data()[(ni * num_classes + cls) * m + i] = T(1);
        }
    return out;
}

LabelGrid downsample_labels(const LabelGrid& labels, std::array<int64_t, 3> target)
{
    for (int64_t e : target)
        check(e >= 1, ErrorKind::Shape, "label target extents must be >= 1");
    LabelGrid out;
    out.n = labels.n;
    out.d = target[0];
    out.h = target[1];
    out.w = target[2];
    out.v.resize(static_cast<size_t>(out.numel()));

    std::vector<int64_t> iz(static_cast<size_t>(out.d));
    std::vector<int64_t> iy(static_cast<size_t>(out.h));
    std::vector<int64_t> ix(static_cast<size_t>(out.w));
    for (int64_t t = 0; t < out.d; ++t)
        iz[static_cast<size_t>(t)] = coords::nearest_index(t, labels.d, out.d);
    for (int64_t t = 0; t < out.h; ++t)
        iy[static_cast<size_t>(t)] = coords::nearest_index(t, labels.h, out.h);
    for (int64_t t = 0; t < out.w; ++t)
        ix[static_cast<size_t>(t)] = coords::nearest_index(t, labels.w, out.w);

    const int64_t src_m = labels.d * labels.h * labels.w;
    const int64_t dst_m = out.d * out.h * out.w;
    for (int64_t ni = 0; ni < labels.n; ++ni) {
        const int32_t* src = labels.v.data() + ni * src_m;
        int32_t* dst = out.v.data() + ni * dst_m;
        size_t o = 0;
        for (int64_t z = 0; z < out.d; ++z)
            for (int64_t y = 0; y < out.h; ++y)
                for (int64_t x = 0; x < out.w; ++x, ++o)
                    dst[o] = src[(iz[static_cast<size_t>(z)] * labels.h +
                                  iy[static_cast<size_t>(y)]) *
                                     labels.w +
                                 ix[static_cast<size_t>(x)]];
    }
    return out;
}

template <typename T>
Tensor<T> hybrid_loss(Tape<T>& tape, const Tensor<T>& pred_softmax,
                      const Tensor<T>& label_onehot, T eps)
{
    check(pred_softmax.shape().rank() == 5, ErrorKind::Shape,
          "hybrid_loss expects rank-5 predictions");
    check(pred_softmax.shape() == label_onehot.shape(), ErrorKind::Shape,
          "hybrid_loss shape mismatch: prediction ", pred_softmax.shape().str(),
          " vs label ", label_onehot.shape().str());
    check(eps > T(0), ErrorKind::Config, "hybrid_loss eps must be > 0");

    const int64_t n = pred_softmax.shape()[0];
    const int64_t c = pred_softmax.shape()[1];
    const int64_t m = pred_softmax.shape()[2] * pred_softmax.shape()[3] *
                      pred_softmax.shape()[4];
    const double voxels = static_cast<double>(n * m);
    const double deps = static_cast<double>(eps);
    // The log term floors its argument instead of adding the dice eps:
    // log(x + 1e-5) starves the gradient of any class whose probability
    // saturates below 1e-5, which freezes rare classes out permanently.
    // With a floor, backprop through softmax keeps the standard bounded
    // (x - y)/V pull at every voxel.
    static constexpr double kLogFloor = 1e-12;

    const T* x = pred_softmax.data();
    const T* y = label_onehot.data();

    // per-class dice numerators/denominators, batch-joint
    auto numer = std::make_shared<std::vector<double>>(static_cast<size_t>(c));
    auto denom = std::make_shared<std::vector<double>>(static_cast<size_t>(c));
    double ce = 0.0;
    for (int64_t ci = 0; ci < c; ++ci) {
        double s_xy = 0.0, s_x = 0.0, s_y = 0.0, s_ce = 0.0;
        for (int64_t ni = 0; ni < n; ++ni) {
            const T* xs = x + (ni * c + ci) * m;
            const T* ys = y + (ni * c + ci) * m;
            for (int64_t i = 0; i < m; ++i) {
                const double xv = static_cast<double>(xs[i]);
                const double yv = static_cast<double>(ys[i]);
                s_xy += xv * yv;
                s_x += xv;
                s_y += yv;
                if (yv != 0.0)
                    s_ce += yv * std::log(std::max(xv, kLogFloor));
            }
        }
        (*numer)[static_cast<size_t>(ci)] = s_xy + deps / 2.0;
        (*denom)[static_cast<size_t>(ci)] = s_x + s_y + deps;
        ce += s_ce;
    }

    double dice = 0.0;
    for (int64_t ci = 0; ci < c; ++ci)
        dice += (*numer)[static_cast<size_t>(ci)] / (*denom)[static_cast<size_t>(ci)];
    const double loss = -((2.0 / static_cast<double>(c)) * dice + ce / voxels);

    const bool grad = tape.enabled() && pred_softmax.requires_grad();
    Tensor<T> out((Shape{}), grad);
    out.data()[0] = static_cast<T>(loss);

    if (grad) {
        Tensor<T> pred = pred_softmax, label = label_onehot, out_t = out;
        tape.record([pred, label, out_t, numer, denom, n, c, m, voxels]() mutable {
            const double g = static_cast<double>(out_t.grad_data()[0]);
            const double dice_scale = 2.0 / static_cast<double>(c);
            T* gx = pred.grad_data();
            const T* xv = pred.data();
            const T* yv = label.data();
            for (int64_t ci = 0; ci < c; ++ci) {
                const double nc = (*numer)[static_cast<size_t>(ci)];
                const double dc = (*denom)[static_cast<size_t>(ci)];
                const double inv_dc = 1.0 / dc;
                const double nc_dc2 = nc * inv_dc * inv_dc;
                for (int64_t ni = 0; ni < n; ++ni) {
                    const int64_t base = (ni * c + ci) * m;
                    for (int64_t i = 0; i < m; ++i) {
                        const double yy = static_cast<double>(yv[base + i]);
                        // d(nc/dc)/dx = (y*dc - nc)/dc^2
                        double d = -dice_scale * (yy * inv_dc - nc_dc2);
                        if (yy != 0.0)
                            d -= yy / (voxels *
                                       std::max(static_cast<double>(xv[base + i]),
                                                kLogFloor));
                        gx[base + i] += static_cast<T>(g * d);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
DeepSupervisionLoss<T> deep_supervision_loss(Tape<T>& tape,
                                             const typename Model<T>::Outputs& outputs,
                                             const LabelGrid& labels,
                                             const MNetConfig& config, T eps)
{
    const Tensor<T>& main_logits = outputs.main;
    check(main_logits.defined(), ErrorKind::Shape, "missing main logits");
    check(main_logits.shape()[0] == labels.n && main_logits.shape()[2] == labels.d &&
              main_logits.shape()[3] == labels.h && main_logits.shape()[4] == labels.w,
          ErrorKind::Shape, "label grid ", labels.n, "x", labels.d, "x", labels.h, "x",
          labels.w, " does not match main logits ", main_logits.shape().str());
    const int classes = static_cast<int>(main_logits.shape()[1]);

    DeepSupervisionLoss<T> result;
    std::vector<Tensor<T>> terms;
    std::vector<T> weights;

    Tensor<T> main_probs = ops::softmax_channels(tape, main_logits);
    Tensor<T> main_onehot = one_hot<T>(labels, classes);
    Tensor<T> main_loss = hybrid_loss(tape, main_probs, main_onehot, eps);
    terms.push_back(main_loss);
    weights.push_back(T(1));
    result.report.main = static_cast<double>(main_loss.item());

    if (!outputs.aux.empty()) {
        GridArch arch = build_grid(config);
        const auto expected = arch.aux_branches();
        check(outputs.aux.size() == expected.size(), ErrorKind::Shape, "expected ",
              expected.size(), " aux branches, got ", outputs.aux.size());
        for (size_t k = 0; k < expected.size(); ++k)
            check(outputs.aux[k].first == expected[k], ErrorKind::Shape,
                  "missing aux branch ", pos_str(expected[k]));

        for (const auto& [pos, logits] : outputs.aux) {
            const auto& s = logits.shape();
            LabelGrid branch_labels =
                downsample_labels(labels, {s[2], s[3], s[4]});
            Tensor<T> probs = ops::softmax_channels(tape, logits);
            Tensor<T> onehot = one_hot<T>(branch_labels, classes);
            Tensor<T> loss = hybrid_loss(tape, probs, onehot, eps);
            const double lambda = arch.aux_weight(pos);
            terms.push_back(loss);
            weights.push_back(static_cast<T>(lambda));
            result.report.aux.push_back(
                {pos, lambda, static_cast<double>(loss.item())});
        }
    }

    result.total = ops::weighted_sum(tape, terms, weights);
    result.report.total = static_cast<double>(result.total.item());
    return result;
}

template Tensor<float> one_hot<float>(const LabelGrid&, int);
template Tensor<double> one_hot<double>(const LabelGrid&, int);
template Tensor<float> hybrid_loss<float>(Tape<float>&, const Tensor<float>&,
                                          const Tensor<float>&, float);
template Tensor<double> hybrid_loss<double>(Tape<double>&, const Tensor<double>&,
                                            const Tensor<double>&, double);
template DeepSupervisionLoss<float> deep_supervision_loss<float>(
    Tape<float>&, const Model<float>::Outputs&, const LabelGrid&, const MNetConfig&,
    float);
template DeepSupervisionLoss<double> deep_supervision_loss<double>(
    Tape<double>&, const Model<double>::Outputs&, const LabelGrid&, const MNetConfig&,
    double);

} // namespace mnet
