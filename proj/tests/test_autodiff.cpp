#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mnet/gradcheck.hpp"
#include "mnet/ops.hpp"

using namespace mnet;

TEST_CASE("finite differences confirm every op backward rule across seeds")
{
    const auto results = run_op_gradchecks(/*seeds=*/10);
    CHECK(results.size() >= 13);
    for (const auto& r : results) {
        INFO(r.op, " max rel err ", r.max_rel_err);
        CHECK(r.pass);
        CHECK(r.max_rel_err <= 1e-4);
    }
}

TEST_CASE("a corrupted backward rule is reported as failing exactly that op")
{
    const auto results = run_op_gradchecks(/*seeds=*/2, "conv3d_133");
    for (const auto& r : results) {
        INFO(r.op);
        if (r.op == "conv3d_133")
            CHECK(!r.pass);
        else
            CHECK(r.pass);
    }
}

TEST_CASE("composed graph: d sum(leaky(conv(x,w)))/dw matches finite differences")
{
    Rng rng = make_rng(42, 0);
    Tensor<double> x(Shape{1, 2, 3, 5, 5}, true);
    Tensor<double> w(Shape{3, 2, 3, 3, 3}, true);
    Tensor<double> b(Shape{3}, true);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto t : {&x, &w, &b})
        for (int64_t i = 0; i < t->numel(); ++i)
            t->data()[i] = dist(rng);

    const double err = fd_max_rel_error(
        [](Tape<double>& t, const std::vector<Tensor<double>>& l) {
            auto h = ops::conv3d(t, l[0], l[1], l[2], {1, 1, 1});
            h = ops::leaky_relu(t, h, 0.01);
            return ops::sum_all(t, h);
        },
        {x, w, b}, FdConfig{}, rng);
    CHECK(err <= 1e-4);
}

TEST_CASE("backward seeds ones through sum and accumulates over fan-out")
{
    Tape<double> tape;
    Tensor<double> x(Shape{2, 3}, true);
    for (int64_t i = 0; i < x.numel(); ++i)
        x.data()[i] = 0.1 * static_cast<double>(i);

    SUBCASE("loss = sum(x) gives all-ones gradient")
    {
        auto loss = ops::sum_all(tape, x);
        ops::backward(tape, loss);
        for (int64_t i = 0; i < x.numel(); ++i)
            CHECK(x.grad_data()[i] == doctest::Approx(1.0));
    }
    SUBCASE("x feeding two consumers accumulates additively")
    {
        auto y = ops::add(tape, x, x);
        auto loss = ops::sum_all(tape, y);
        ops::backward(tape, loss);
        for (int64_t i = 0; i < x.numel(); ++i)
            CHECK(x.grad_data()[i] == doctest::Approx(2.0));
    }
}

TEST_CASE("abs gradient at -2 is -1 and 0 at 0")
{
    Tape<double> tape;
    Tensor<double> x(Shape{3}, true);
    x.data()[0] = -2.0;
    x.data()[1] = 0.0;
    x.data()[2] = 3.0;
    auto loss = ops::sum_all(tape, ops::abs(tape, x));
    ops::backward(tape, loss);
    CHECK(x.grad_data()[0] == doctest::Approx(-1.0));
    CHECK(x.grad_data()[1] == doctest::Approx(0.0));
    CHECK(x.grad_data()[2] == doctest::Approx(1.0));
}

TEST_CASE("parameters off the tape keep a zero gradient")
{
    Tape<double> tape;
    Tensor<double> x(Shape{4}, true);
    Tensor<double> unused(Shape{4}, true);
    for (int64_t i = 0; i < 4; ++i)
        x.data()[i] = 1.0;
    auto loss = ops::sum_all(tape, x);
    ops::backward(tape, loss);
    for (int64_t i = 0; i < 4; ++i)
        CHECK(unused.grad_data()[i] == 0.0);
}

TEST_CASE("backward rejects non-scalar losses")
{
    Tape<double> tape;
    Tensor<double> x(Shape{2, 2}, true);
    auto y = ops::add(tape, x, x);
    CHECK_THROWS_AS(ops::backward(tape, y), Error);
}

TEST_CASE("disabled tape records nothing")
{
    Tape<float> tape;
    Tensor<float> x(Shape{2}, true);
    {
        NoGradGuard<float> guard(tape);
        auto y = ops::add(tape, x, x);
        CHECK(!y.requires_grad());
    }
    CHECK(tape.size() == 0);
    auto y = ops::add(tape, x, x);
    CHECK(y.requires_grad());
    CHECK(tape.size() == 1);
}
