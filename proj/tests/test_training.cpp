#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mnet/loss.hpp"
#include "mnet/model.hpp"
#include "mnet/optim.hpp"
#include "mnet/phantom.hpp"
#include "mnet/rng.hpp"
#include "mnet/train.hpp"

using namespace mnet;

namespace {

LabelGrid make_labels(int64_t n, int64_t d, int64_t h, int64_t w, uint64_t seed,
                      int classes)
{
    LabelGrid g;
    g.n = n;
    g.d = d;
    g.h = h;
    g.w = w;
    g.v.resize(static_cast<size_t>(g.numel()));
    Rng rng = make_rng(seed, 0);
    std::uniform_int_distribution<int32_t> dist(0, classes - 1);
    for (auto& v : g.v)
        v = dist(rng);
    return g;
}

MNetConfig tiny_config()
{
    MNetConfig c;
    c.base_channels = 2;
    c.channel_growth = 1;
    c.num_classes = 3;
    return c;
}

Dataset tiny_dataset(int cases, uint64_t seed)
{
    PhantomSpec spec;
    spec.shape = {16, 24, 24};
    spec.spacing_mm = {2.0, 1.0, 1.0};
    spec.organ_radius_mm = {7.0, 9.0};
    spec.tumor_count = {1, 1};
    spec.tumor_radius_mm = {2.5, 3.5};
    Dataset data;
    for (int i = 0; i < cases; ++i) {
        spec.seed = seed + static_cast<uint64_t>(i);
        auto [img, lab] = generate_phantom(spec);
        data.push_back({"case" + std::to_string(i), std::move(img), std::move(lab)});
    }
    return data;
}

} // namespace

TEST_CASE("hybrid loss identities")
{
    Tape<double> tape;
    const int classes = 3;
    LabelGrid labels = make_labels(2, 2, 3, 3, 21, classes);
    auto onehot = one_hot<double>(labels, classes);

    SUBCASE("perfect one-hot prediction scores about -1")
    {
        auto loss = hybrid_loss(tape, onehot, onehot, 1e-5);
        CHECK(loss.item() == doctest::Approx(-1.0).epsilon(1e-3));
    }
    SUBCASE("uniform prediction: CE component equals ln C on average")
    {
        auto uniform = Tensor<double>::full(onehot.shape(), 1.0 / classes);
        auto loss = hybrid_loss(tape, uniform, onehot, 1e-5);
        // dice ratios: (n_c/C + eps/2) / (n_total/C + n_c + eps)
        const int64_t m = labels.numel();
        double dice = 0.0;
        for (int c = 0; c < classes; ++c) {
            int64_t n_c = 0;
            for (int32_t v : labels.v)
                n_c += v == c;
            dice += (double(m) / classes * 0 + double(n_c) / classes + 0.5e-5) /
                    (double(m) / classes + double(n_c) + 1e-5);
        }
        const double expected = -((2.0 / classes) * dice + std::log(1.0 / classes));
        CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-6));
        // the CE component alone contributes +ln C to the loss
        CHECK(loss.item() + (2.0 / classes) * dice ==
              doctest::Approx(std::log(double(classes))).epsilon(1e-6));
    }
    SUBCASE("a class empty in prediction and label stays finite at ratio 1/2")
    {
        // classes 0/1 present, class 2 absent on both sides
        LabelGrid two = make_labels(1, 2, 2, 2, 3, 2);
        auto y = one_hot<double>(two, 3);
        auto loss = hybrid_loss(tape, y, y, 1e-5);
        CHECK(std::isfinite(loss.item()));
        CHECK(loss.item() == doctest::Approx(-1.0).epsilon(1e-3));
    }
    SUBCASE("shape mismatch is an error")
    {
        auto small = Tensor<double>::zeros(Shape{1, 3, 2, 3, 3});
        CHECK_THROWS_AS(hybrid_loss(tape, small, onehot, 1e-5), Error);
    }
}

TEST_CASE("deep supervision combines branches with the halving weights")
{
    MNetConfig c = tiny_config();
    MeshModel<double> model(c, 5);
    Tape<double> tape;
    Tensor<double> batch(Shape{1, 1, 16, 16, 16});
    Rng rng = make_rng(8, 0);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch.data()[i] = dist(rng);
    LabelGrid labels = make_labels(1, 16, 16, 16, 9, c.num_classes);

    auto outputs = model.forward(tape, batch);
    auto loss = deep_supervision_loss(tape, outputs, labels, c, 1e-5);

    REQUIRE(loss.report.aux.size() == 6);
    // weights are exactly (1/8, 1/4, 1/2) keyed by the branch coordinate
    for (const auto& aux : loss.report.aux) {
        const int k = aux.pos.i == 5 ? aux.pos.j : aux.pos.i;
        CHECK(aux.weight == std::pow(0.5, 5 - k));
    }

    // Eq-recombination: total equals main + sum of weighted aux terms
    double recombined = loss.report.main;
    for (const auto& aux : loss.report.aux)
        recombined += aux.weight * aux.value;
    CHECK(std::fabs(loss.report.total - recombined) <= 1e-12);

    // with unit aux losses and zero main, the combination would be 1.75
    double weight_sum = 0.0;
    for (const auto& aux : loss.report.aux)
        weight_sum += aux.weight;
    CHECK(weight_sum == doctest::Approx(1.75));

    SUBCASE("missing branch is an error")
    {
        auto broken = outputs;
        broken.aux.pop_back();
        CHECK_THROWS_AS(deep_supervision_loss(tape, broken, labels, c, 1e-5), Error);
    }
}

TEST_CASE("label downsampling")
{
    SUBCASE("identity target returns identical labels")
    {
        LabelGrid g = make_labels(2, 3, 4, 5, 31, 3);
        LabelGrid out = downsample_labels(g, {3, 4, 5});
        CHECK(out.v == g.v);
    }
    SUBCASE("constant labels stay constant at any target")
    {
        LabelGrid g;
        g.n = 1;
        g.d = 6;
        g.h = 6;
        g.w = 6;
        g.v.assign(static_cast<size_t>(g.numel()), 2);
        LabelGrid out = downsample_labels(g, {2, 3, 5});
        for (int32_t v : out.v)
            CHECK(v == 2);
    }
    SUBCASE("checkerboard 2x downsample picks the half-pixel positions")
    {
        // 4x4 board, downsample to 2x2: coordinates (t+0.5)*2-0.5 = 0.5, 2.5
        // round to source rows/cols 1 and 3
        LabelGrid g;
        g.n = 1;
        g.d = 1;
        g.h = 4;
        g.w = 4;
        g.v.resize(16);
        for (int64_t y = 0; y < 4; ++y)
            for (int64_t x = 0; x < 4; ++x)
                g.v[static_cast<size_t>(y * 4 + x)] =
                    static_cast<int32_t>((y + x) % 2);
        LabelGrid out = downsample_labels(g, {1, 2, 2});
        CHECK(out.v[0] == g.v[1 * 4 + 1]);
        CHECK(out.v[1] == g.v[1 * 4 + 3]);
        CHECK(out.v[2] == g.v[3 * 4 + 1]);
        CHECK(out.v[3] == g.v[3 * 4 + 3]);
    }
}

TEST_CASE("poly learning rate schedule")
{
    CHECK(poly_lr(0, 500, 0.01, 0.9) == doctest::Approx(0.01));
    CHECK(poly_lr(500, 500, 0.01, 0.9) == doctest::Approx(0.0));
    CHECK(poly_lr(250, 500, 0.01, 0.9) == doctest::Approx(0.0053589).epsilon(1e-4));
    // monotone non-increasing
    double prev = 1e9;
    for (int e = 0; e <= 500; e += 25) {
        const double lr = poly_lr(e, 500, 0.01, 0.9);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("sgd momentum update rule")
{
    auto make_param = [](double value) {
        Tensor<double> t(Shape{1}, true);
        t.data()[0] = value;
        return t;
    };

    SUBCASE("zero momentum reduces to plain gradient descent")
    {
        std::vector<NamedParam<double>> params{{"p", make_param(1.0)}};
        params[0].tensor.grad_data()[0] = 0.5;
        auto state = init_sgd_state(params);
        sgd_step(params, state, 0.1, 0.0, false);
        CHECK(params[0].tensor.data()[0] == doctest::Approx(1.0 - 0.1 * 0.5));
    }
    SUBCASE("two steps with momentum 0.9 follow the hand iteration")
    {
        std::vector<NamedParam<double>> params{{"p", make_param(0.0)}};
        auto state = init_sgd_state(params);
        params[0].tensor.grad_data()[0] = 1.0;
        sgd_step(params, state, 1.0, 0.9, false);
        CHECK(params[0].tensor.data()[0] == doctest::Approx(-1.0));
        sgd_step(params, state, 1.0, 0.9, false);
        CHECK(params[0].tensor.data()[0] == doctest::Approx(-1.0 - 1.9));
    }
    SUBCASE("zero gradient with zero velocity leaves parameters unchanged")
    {
        std::vector<NamedParam<double>> params{{"p", make_param(3.0)}};
        auto state = init_sgd_state(params);
        sgd_step(params, state, 0.5, 0.99, true);
        CHECK(params[0].tensor.data()[0] == 3.0);
    }
    SUBCASE("unknown parameter id is an error")
    {
        std::vector<NamedParam<double>> params{{"p", make_param(0.0)}};
        auto state = init_sgd_state(params);
        state.erase("p");
        CHECK_THROWS_WITH_AS(sgd_step(params, state, 0.1, 0.9, true),
                             doctest::Contains("unknown parameter id"), Error);
    }
}

TEST_CASE("train_loop with lr 0 keeps parameters bitwise")
{
    MNetConfig c = tiny_config();
    MeshModel<float> model(c, 3);
    std::vector<std::vector<float>> before;
    for (const auto& p : model.parameters())
        before.push_back(p.tensor.values());

    TrainConfig tc;
    tc.initial_lr = 0.0;
    tc.max_epochs = 1;
    tc.iterations_per_epoch = 2;
    tc.batch_size = 1;
    tc.patch_size = {16, 16, 16};
    Dataset data = tiny_dataset(1, 100);
    train_loop(model, data, nullptr, tc);
    for (size_t i = 0; i < before.size(); ++i)
        CHECK(model.parameters()[i].tensor.values() == before[i]); // bitwise
}

TEST_CASE("train_loop is deterministic for a fixed seed")
{
    MNetConfig c = tiny_config();
    TrainConfig tc;
    tc.initial_lr = 0.005;
    tc.momentum = 0.9;
    tc.max_epochs = 2;
    tc.iterations_per_epoch = 3;
    tc.batch_size = 1;
    tc.patch_size = {16, 16, 16};
    tc.seed = 9;
    Dataset data = tiny_dataset(2, 200);

    MeshModel<float> m1(c, 4);
    auto h1 = train_loop(m1, data, nullptr, tc);
    MeshModel<float> m2(c, 4);
    auto h2 = train_loop(m2, data, nullptr, tc);

    REQUIRE(h1.size() == h2.size());
    for (size_t e = 0; e < h1.size(); ++e) {
        CHECK(h1[e].loss_total == h2[e].loss_total); // bitwise
        CHECK(h1[e].loss_main == h2[e].loss_main);
    }
    for (size_t i = 0; i < m1.parameters().size(); ++i)
        CHECK(m1.parameters()[i].tensor.values() == m2.parameters()[i].tensor.values());
}

TEST_CASE("training loss trends down over the first 20 iterations" * doctest::timeout(600))
{
    MNetConfig c = tiny_config();
    Dataset data = tiny_dataset(2, 300);

    int improved = 0;
    const int seeds = 10;
    for (int s = 0; s < seeds; ++s) {
        TrainConfig tc;
        tc.initial_lr = 0.01;
        tc.max_epochs = 20; // one iteration per epoch -> 20 recorded losses
        tc.iterations_per_epoch = 1;
        tc.batch_size = 1;
        tc.patch_size = {16, 16, 16};
        tc.seed = 1000 + static_cast<uint64_t>(s);
        MeshModel<float> model(c, 40 + static_cast<uint64_t>(s));
        auto history = train_loop(model, data, nullptr, tc);
        double first = 0.0, last = 0.0;
        for (int k = 0; k < 5; ++k) {
            first += history[static_cast<size_t>(k)].loss_total;
            last += history[history.size() - 1 - static_cast<size_t>(k)].loss_total;
        }
        if (last < first)
            ++improved;
    }
    CHECK(improved >= 9);
}

TEST_CASE("divergence aborts with epoch and iteration in the message")
{
    MNetConfig c = tiny_config();
    MeshModel<float> model(c, 3);
    // poison one weight the way an upstream numerical blow-up would
    Tensor<float> w = model.parameters().front().tensor;
    w.data()[0] = std::numeric_limits<float>::quiet_NaN();

    TrainConfig tc;
    tc.max_epochs = 1;
    tc.iterations_per_epoch = 1;
    tc.batch_size = 1;
    tc.patch_size = {16, 16, 16};
    Dataset data = tiny_dataset(1, 400);
    try {
        train_loop(model, data, nullptr, tc);
        CHECK_MESSAGE(false, "non-finite loss was not detected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numeric);
        CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
        CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    }
}
