#include "mnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mnet/loss.hpp"
#include "mnet/model.hpp"
#include "mnet/ops.hpp"
#include "mnet/optim.hpp"

namespace mnet {

namespace {

double dot(const Tensor<double>& y, const std::vector<double>& c)
{
    double s = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i)
        s += y.data()[i] * c[static_cast<size_t>(i)];
    return s;
}

std::vector<int64_t> probe_coords(int64_t numel, int max_coords, Rng& rng)
{
    std::vector<int64_t> coords;
    if (numel <= max_coords) {
        coords.resize(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i)
            coords[static_cast<size_t>(i)] = i;
        return coords;
    }
    std::uniform_int_distribution<int64_t> dist(0, numel - 1);
    while (static_cast<int>(coords.size()) < max_coords) {
        const int64_t c = dist(rng);
        if (std::find(coords.begin(), coords.end(), c) == coords.end())
            coords.push_back(c);
    }
    return coords;
}

Tensor<double> random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor<double> t(shape, /*requires_grad=*/true);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = dist(rng);
    return t;
}

// keep values away from the kink so finite differences stay valid
void enforce_margin(Tensor<double>& t, double margin)
{
    for (int64_t i = 0; i < t.numel(); ++i) {
        double& v = t.data()[i];
        if (std::fabs(v) < margin)
            v = v >= 0.0 ? margin : -margin;
    }
}

// separate each pooling window's top two values (windows are disjoint)
void enforce_pool_margin(Tensor<double>& t, std::array<int64_t, 3> window, double margin)
{
    const auto& s = t.shape();
    const int64_t od = s[2] / window[0], oh = s[3] / window[1], ow = s[4] / window[2];
    for (int64_t nc = 0; nc < s[0] * s[1]; ++nc) {
        double* slice = t.data() + nc * s[2] * s[3] * s[4];
        for (int64_t oz = 0; oz < od; ++oz)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double best = -1e300, second = -1e300;
                    int64_t best_idx = -1;
                    for (int64_t dz = 0; dz < window[0]; ++dz)
                        for (int64_t dy = 0; dy < window[1]; ++dy)
                            for (int64_t dx = 0; dx < window[2]; ++dx) {
                                const int64_t idx = ((oz * window[0] + dz) * s[3] +
                                                     oy * window[1] + dy) *
                                                        s[4] +
                                                    ox * window[2] + dx;
                                const double v = slice[idx];
                                if (v > best) {
                                    second = best;
                                    best = v;
                                    best_idx = idx;
                                } else if (v > second) {
                                    second = v;
                                }
                            }
                    if (best - second < margin)
                        slice[best_idx] = second + 2.0 * margin;
                }
    }
}

} // namespace

double fd_max_rel_error(const GraphFn& fn, std::vector<Tensor<double>> leaves,
                        const FdConfig& cfg, Rng& rng, double grad_scale)
{
    for (auto& leaf : leaves) {
        check(leaf.requires_grad(), ErrorKind::Logic, "gradcheck leaf without gradient");
        leaf.zero_grad();
    }

    Tape<double> tape;
    Tensor<double> y = fn(tape, leaves);
    check(y.requires_grad(), ErrorKind::Logic,
          "gradcheck output does not depend on the leaves");

    std::vector<double> cotangent(static_cast<size_t>(y.numel()));
    std::uniform_real_distribution<double> cdist(0.5, 1.5);
    for (auto& v : cotangent)
        v = cdist(rng) * (rng() % 2 == 0 ? 1.0 : -1.0);

    std::copy(cotangent.begin(), cotangent.end(), y.grad_data());
    tape.replay_backward();

    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves) {
        analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
        for (auto& g : analytic.back())
            g *= grad_scale;
    }

    auto eval = [&]() {
        Tape<double> t;
        t.set_enabled(false);
        Tensor<double> out = fn(t, leaves);
        return dot(out, cotangent);
    };

    double max_err = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        Tensor<double>& leaf = leaves[li];
        for (int64_t coord : probe_coords(leaf.numel(), cfg.max_coords_per_leaf, rng)) {
            double& slot = leaf.data()[coord];
            const double saved = slot;
            slot = saved + cfg.step;
            const double f_plus = eval();
            slot = saved - cfg.step;
            const double f_minus = eval();
            slot = saved;
            const double fd = (f_plus - f_minus) / (2.0 * cfg.step);
            const double g = analytic[li][static_cast<size_t>(coord)];
            const double err =
                std::fabs(fd - g) / std::max({std::fabs(fd), std::fabs(g), 1.0});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

namespace {

struct SuiteCase {
    std::string name;
    std::function<double(Rng&, double)> run; // returns max rel err for one seed
};

std::vector<SuiteCase> build_suite()
{
    const FdConfig cfg;
    std::vector<SuiteCase> suite;

    suite.push_back({"conv3d_133", [cfg](Rng& rng, double scale) {
        auto x = random_leaf(Shape{2, 3, 2, 6, 6}, rng);
        auto w = random_leaf(Shape{4, 3, 1, 3, 3}, rng);
        auto b = random_leaf(Shape{4}, rng);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::conv3d(t, l[0], l[1], l[2], {0, 1, 1});
            },
            {x, w, b}, cfg, rng, scale);
    }});

    suite.push_back({"conv3d_333", [cfg](Rng& rng, double scale) {
        auto x = random_leaf(Shape{1, 2, 4, 5, 5}, rng);
        auto w = random_leaf(Shape{3, 2, 3, 3, 3}, rng);
        auto b = random_leaf(Shape{3}, rng);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::conv3d(t, l[0], l[1], l[2], {1, 1, 1});
            },
            {x, w, b}, cfg, rng, scale);
    }});

    suite.push_back({"maxpool3d_122", [cfg](Rng& rng, double scale) {
        auto x = random_leaf(Shape{2, 2, 3, 6, 6}, rng);
        enforce_pool_margin(x, {1, 2, 2}, 1e-3);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::maxpool3d(t, l[0], {1, 2, 2});
            },
            {x}, cfg, rng, scale);
    }});

    suite.push_back({"maxpool3d_222", [cfg](Rng& rng, double scale) {
        auto x = random_leaf(Shape{1, 2, 4, 6, 6}, rng);
        enforce_pool_margin(x, {2, 2, 2}, 1e-3);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::maxpool3d(t, l[0], {2, 2, 2});
            },
            {x}, cfg, rng, scale);
    }});

    suite.push_back({"upsample_trilinear", [cfg](Rng& rng, double scale) {
        auto x = random_leaf(Shape{1, 2, 3, 4, 5}, rng);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::upsample_trilinear(t, l[0], {6, 9, 7});
            },
            {x}, cfg, rng, scale);
    }});

    suite.push_back({"instance_norm", [cfg](Rng& rng, double scale) {
        auto x = random_leaf(Shape{2, 3, 2, 3, 4}, rng);
        auto gamma = random_leaf(Shape{3}, rng, 0.5, 1.5);
        auto beta = random_leaf(Shape{3}, rng);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::instance_norm(t, l[0], l[1], l[2], 1e-5);
            },
            {x, gamma, beta}, cfg, rng, scale);
    }});

    suite.push_back({"leaky_relu", [cfg](Rng& rng, double scale) {
        auto x = random_leaf(Shape{2, 2, 2, 4, 4}, rng);
        enforce_margin(x, 1e-3);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::leaky_relu(t, l[0], 0.01);
            },
            {x}, cfg, rng, scale);
    }});

    suite.push_back({"add", [cfg](Rng& rng, double scale) {
        auto a = random_leaf(Shape{2, 3, 2, 2, 2}, rng);
        auto b = random_leaf(Shape{2, 3, 2, 2, 2}, rng);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::add(t, l[0], l[1]);
            },
            {a, b}, cfg, rng, scale);
    }});

    suite.push_back({"sub", [cfg](Rng& rng, double scale) {
        auto a = random_leaf(Shape{2, 3, 2, 2, 2}, rng);
        auto b = random_leaf(Shape{2, 3, 2, 2, 2}, rng);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::sub(t, l[0], l[1]);
            },
            {a, b}, cfg, rng, scale);
    }});

    suite.push_back({"abs", [cfg](Rng& rng, double scale) {
        auto a = random_leaf(Shape{2, 3, 2, 2, 2}, rng);
        enforce_margin(a, 1e-3);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::abs(t, l[0]);
            },
            {a}, cfg, rng, scale);
    }});

    suite.push_back({"concat_channels", [cfg](Rng& rng, double scale) {
        auto a = random_leaf(Shape{2, 2, 2, 3, 3}, rng);
        auto b = random_leaf(Shape{2, 3, 2, 3, 3}, rng);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::concat_channels(t, l[0], l[1]);
            },
            {a, b}, cfg, rng, scale);
    }});

    suite.push_back({"softmax_channels", [cfg](Rng& rng, double scale) {
        auto x = random_leaf(Shape{2, 3, 2, 2, 2}, rng, -2.0, 2.0);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::softmax_channels(t, l[0]);
            },
            {x}, cfg, rng, scale);
    }});

    suite.push_back({"weighted_sum", [cfg](Rng& rng, double scale) {
        auto a = random_leaf(Shape{}, rng);
        auto b = random_leaf(Shape{}, rng);
        auto c = random_leaf(Shape{}, rng);
        return fd_max_rel_error(
            [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return ops::weighted_sum(t, {l[0], l[1], l[2]}, {1.0, 0.5, 0.125});
            },
            {a, b, c}, cfg, rng, scale);
    }});

    suite.push_back({"hybrid_loss", [cfg](Rng& rng, double scale) {
        // build valid softmax probabilities, then treat them as the leaf
        Tape<double> tmp;
        tmp.set_enabled(false);
        auto logits = random_leaf(Shape{2, 3, 2, 3, 3}, rng, -1.5, 1.5);
        auto probs_t = ops::softmax_channels(tmp, logits);
        auto probs = Tensor<double>::from(probs_t.shape(), probs_t.values(), true);

        LabelGrid labels;
        labels.n = 2;
        labels.d = 2;
        labels.h = 3;
        labels.w = 3;
        labels.v.resize(static_cast<size_t>(labels.numel()));
        std::uniform_int_distribution<int32_t> ldist(0, 2);
        for (auto& v : labels.v)
            v = ldist(rng);
        auto onehot = one_hot<double>(labels, 3);

        return fd_max_rel_error(
            [onehot](Tape<double>& t, const std::vector<Tensor<double>>& l) {
                return hybrid_loss(t, l[0], onehot, 1e-5);
            },
            {probs}, cfg, rng, scale);
    }});

    return suite;
}

} // namespace

std::vector<GradCheckCase> run_op_gradchecks(int seeds, const std::string& perturb_op)
{
    check(seeds >= 1, ErrorKind::Config, "gradcheck needs at least one seed");
    const FdConfig cfg;
    std::vector<GradCheckCase> results;
    for (const auto& suite_case : build_suite()) {
        const double scale = suite_case.name == perturb_op ? 1.01 : 1.0;
        GradCheckCase result;
        result.op = suite_case.name;
        result.tol = cfg.rel_tol;
        for (int s = 0; s < seeds; ++s) {
            Rng rng = make_rng(0x9d5c0f00u + static_cast<uint64_t>(s), 7);
            result.max_rel_err =
                std::max(result.max_rel_err, suite_case.run(rng, scale));
        }
        result.pass = result.max_rel_err <= result.tol;
        results.push_back(result);
    }
    return results;
}

GradCheckCase run_model_gradcheck(const MNetConfig& config,
                                  std::array<int64_t, 3> patch_size, int param_samples,
                                  uint64_t seed, double rel_tol)
{
    MeshModel<double> model(config, seed);
    Rng rng = make_rng(seed, 3);

    // prediction heads initialize to zero, which would zero out every
    // upstream gradient; randomize them so the whole graph is exercised
    std::normal_distribution<double> head_dist(0.0, 0.2);
    for (const auto& p : model.parameters())
        if (p.name.rfind("head.", 0) == 0) {
            Tensor<double> t = p.tensor;
            for (int64_t i = 0; i < t.numel(); ++i)
                t.data()[i] = head_dist(rng);
        }

    Tensor<double> batch(Shape{1, config.in_channels, patch_size[0], patch_size[1],
                               patch_size[2]});
    std::uniform_real_distribution<double> vdist(0.0, 1.0);
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch.data()[i] = vdist(rng);

    LabelGrid labels;
    labels.n = 1;
    labels.d = patch_size[0];
    labels.h = patch_size[1];
    labels.w = patch_size[2];
    labels.v.resize(static_cast<size_t>(labels.numel()));
    std::uniform_int_distribution<int32_t> ldist(0, config.num_classes - 1);
    for (auto& v : labels.v)
        v = ldist(rng);

    auto loss_value = [&](bool with_grad) {
        Tape<double> tape;
        tape.set_enabled(with_grad);
        auto outputs = model.forward(tape, batch);
        auto loss = deep_supervision_loss(tape, outputs, labels, config, 1e-5);
        if (with_grad) {
            zero_gradients(model.parameters());
            ops::backward(tape, loss.total);
        }
        return loss.report.total;
    };

    loss_value(true); // analytic gradients now live in the parameters

    // Sample (parameter, coordinate) probes across the whole model. The
    // loss is only piecewise smooth (abs-based feature merging, pooling
    // argmax switches), so each probe is validated by comparing central
    // differences at two step sizes: the estimates agree on smooth
    // segments and disagree strongly across a kink. The agreement test
    // never consults the analytic gradient, so skipping kink probes
    // cannot hide a wrong backward rule.
    const auto& params = model.parameters();
    const double h = 1e-5;
    double max_err = 0.0;
    int smooth_probes = 0, kink_probes = 0;
    std::uniform_int_distribution<size_t> pdist(0, params.size() - 1);
    for (int s = 0; s < param_samples; ++s) {
        const auto& p = params[pdist(rng)];
        Tensor<double> t = p.tensor;
        const int64_t coord =
            std::uniform_int_distribution<int64_t>(0, t.numel() - 1)(rng);
        const double analytic = t.grad_data()[coord];
        const double saved = t.data()[coord];
        auto fd_at = [&](double step) {
            t.data()[coord] = saved + step;
            const double f_plus = loss_value(false);
            t.data()[coord] = saved - step;
            const double f_minus = loss_value(false);
            t.data()[coord] = saved;
            return (f_plus - f_minus) / (2.0 * step);
        };
        const double fd_full = fd_at(h);
        const double fd_half = fd_at(h / 2.0);
        if (std::fabs(fd_full - fd_half) >
            1e-4 * std::max({std::fabs(fd_full), std::fabs(fd_half), 1.0})) {
            ++kink_probes;
            continue;
        }
        ++smooth_probes;
        const double err = std::fabs(fd_half - analytic) /
                           std::max({std::fabs(fd_half), std::fabs(analytic), 1.0});
        max_err = std::max(max_err, err);
    }
    // the check is meaningless if kinks swallowed most probes
    check(smooth_probes >= (param_samples * 3) / 4, ErrorKind::Numeric,
          "model gradcheck hit too many non-smooth probes (", kink_probes, " of ",
          param_samples, ")");

    GradCheckCase result;
    result.op = "mesh_model";
    result.max_rel_err = max_err;
    result.tol = rel_tol;
    result.pass = max_err <= rel_tol;
    return result;
}

} // namespace mnet
