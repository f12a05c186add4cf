#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mnet/ops.hpp"
#include "mnet/tape.hpp"
#include "mnet/tensor.hpp"
#include "support/naive_conv.hpp"

using namespace mnet;
using mnet::ops::Extent3;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false)
{
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor<T> t(shape, requires_grad);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<T>(dist(rng));
    return t;
}

} // namespace

TEST_CASE("shape basics")
{
    Shape s{2, 3, 4};
    CHECK(s.rank() == 3);
    CHECK(s.numel() == 24);
    CHECK(s.str() == "(2,3,4)");
    CHECK_THROWS_AS((Shape{2, 0, 4}), Error);
    Shape scalar;
    CHECK(scalar.rank() == 0);
    CHECK(scalar.numel() == 1);
}

TEST_CASE("conv3d identity kernel reproduces the input")
{
    Tape<float> tape;
    std::mt19937_64 rng(7);
    auto x = random_tensor<float>(Shape{1, 1, 1, 3, 3}, rng);
    auto w = Tensor<float>::full(Shape{1, 1, 1, 1, 1}, 1.0f);
    auto b = Tensor<float>::zeros(Shape{1});
    auto y = ops::conv3d(tape, x, w, b, Extent3{0, 0, 0});
    REQUIRE(y.shape() == x.shape());
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("conv3d all-ones 3x3 on all-ones input counts the support")
{
    Tape<float> tape;
    auto x = Tensor<float>::full(Shape{1, 1, 1, 3, 3}, 1.0f);
    auto w = Tensor<float>::full(Shape{1, 1, 1, 3, 3}, 1.0f);
    auto b = Tensor<float>::zeros(Shape{1});
    auto y = ops::conv3d(tape, x, w, b, Extent3{0, 1, 1});
    REQUIRE(y.shape() == Shape{1, 1, 1, 3, 3});
    CHECK(y.data()[4] == doctest::Approx(9.0f)); // center
    for (int64_t corner : {0, 2, 6, 8})
        CHECK(y.data()[corner] == doctest::Approx(4.0f));

    // cross-check with the independent nested-loop oracle
    testing::NaiveConvDims g{1, 1, 1, 1, 3, 3, 1, 3, 3, 0, 1, 1};
    auto ref = testing::naive_conv3d(x.values(), w.values(), b.values(), g);
    for (size_t i = 0; i < ref.size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(ref[i]));
}

TEST_CASE("conv3d validates shapes with axis names")
{
    Tape<float> tape;
    auto x = Tensor<float>::zeros(Shape{1, 2, 2, 4, 4});
    auto w = Tensor<float>::zeros(Shape{3, 1, 1, 3, 3}); // wrong Cin
    auto b = Tensor<float>::zeros(Shape{3});
    CHECK_THROWS_WITH_AS(ops::conv3d(tape, x, w, b, Extent3{0, 1, 1}),
                         doctest::Contains("channel axis (C)"), Error);

    auto w2 = Tensor<float>::zeros(Shape{3, 2, 5, 3, 3}); // kd too large for D=2
    auto b2 = Tensor<float>::zeros(Shape{3});
    CHECK_THROWS_WITH_AS(ops::conv3d(tape, x, w2, b2, Extent3{0, 1, 1}),
                         doctest::Contains("output extent"), Error);

    auto w3 = Tensor<float>::zeros(Shape{3, 2, 1, 2, 3}); // even kernel extent
    CHECK_THROWS_AS(ops::conv3d(tape, x, w3, b2, Extent3{0, 0, 1}), Error);
}

TEST_CASE("maxpool3d examples")
{
    Tape<float> tape;
    SUBCASE("window (1,2,2) on a 2x2 slice")
    {
        auto x = Tensor<float>::from(Shape{1, 1, 1, 2, 2}, {1, 2, 3, 4});
        auto y = ops::maxpool3d(tape, x, Extent3{1, 2, 2});
        REQUIRE(y.shape() == Shape{1, 1, 1, 1, 1});
        CHECK(y.data()[0] == 4.0f);
    }
    SUBCASE("window (2,2,2) on values 1..8")
    {
        auto x = Tensor<float>::from(Shape{1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
        auto y = ops::maxpool3d(tape, x, Extent3{2, 2, 2});
        REQUIRE(y.shape() == Shape{1, 1, 1, 1, 1});
        CHECK(y.data()[0] == 8.0f);
    }
    SUBCASE("floor semantics on odd extents")
    {
        auto x = Tensor<float>::zeros(Shape{1, 1, 5, 4, 4});
        auto y = ops::maxpool3d(tape, x, Extent3{2, 2, 2});
        CHECK(y.shape() == Shape{1, 1, 2, 2, 2});
    }
    SUBCASE("window larger than input is an error")
    {
        auto x = Tensor<float>::zeros(Shape{1, 1, 1, 4, 4});
        CHECK_THROWS_WITH_AS(ops::maxpool3d(tape, x, Extent3{2, 2, 2}),
                             doctest::Contains("exceeds input extent"), Error);
    }
}

TEST_CASE("upsample_trilinear examples")
{
    Tape<float> tape;
    SUBCASE("constant input stays constant")
    {
        auto x = Tensor<float>::full(Shape{1, 1, 2, 3, 2}, 3.25f);
        auto y = ops::upsample_trilinear(tape, x, Extent3{5, 7, 4});
        for (int64_t i = 0; i < y.numel(); ++i)
            CHECK(y.data()[i] == doctest::Approx(3.25f));
    }
    SUBCASE("1-axis doubling matches the half-pixel formula")
    {
        auto x = Tensor<float>::from(Shape{1, 1, 1, 1, 2}, {0.0f, 1.0f});
        auto y = ops::upsample_trilinear(tape, x, Extent3{1, 1, 4});
        const float expect[4] = {0.0f, 0.25f, 0.75f, 1.0f};
        for (int i = 0; i < 4; ++i)
            CHECK(y.data()[i] == doctest::Approx(expect[i]));
    }
    SUBCASE("upsampling to the own shape is the identity")
    {
        std::mt19937_64 rng(3);
        auto x = random_tensor<float>(Shape{1, 2, 3, 4, 5}, rng);
        auto y = ops::upsample_trilinear(tape, x, Extent3{3, 4, 5});
        for (int64_t i = 0; i < x.numel(); ++i)
            CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
    }
}

TEST_CASE("maxpool then upsample restores the original shape, odd extents included")
{
    Tape<float> tape;
    std::mt19937_64 rng(11);
    for (int64_t d : {4, 5, 7})
        for (int64_t h : {6, 9}) {
            auto x = random_tensor<float>(Shape{1, 2, d, h, 5}, rng);
            auto pooled = ops::maxpool3d(tape, x, Extent3{2, 2, 2});
            auto back = ops::upsample_trilinear(tape, pooled, Extent3{d, h, 5});
            CHECK(back.shape() == x.shape());
        }
}

TEST_CASE("instance_norm examples")
{
    Tape<float> tape;
    auto gamma = Tensor<float>::full(Shape{1}, 1.0f);
    auto beta = Tensor<float>::zeros(Shape{1});
    SUBCASE("constant slice maps to zero")
    {
        auto x = Tensor<float>::full(Shape{1, 1, 1, 2, 2}, 5.0f);
        auto y = ops::instance_norm(tape, x, gamma, beta, 1e-5f);
        for (int64_t i = 0; i < y.numel(); ++i)
            CHECK(y.data()[i] == doctest::Approx(0.0f).epsilon(1e-3));
    }
    SUBCASE("two-value slice normalizes to +-1")
    {
        auto x = Tensor<float>::from(Shape{1, 1, 1, 1, 2}, {1.0f, 3.0f});
        auto y = ops::instance_norm(tape, x, gamma, beta, 1e-5f);
        CHECK(y.data()[0] == doctest::Approx(-1.0f).epsilon(1e-3));
        CHECK(y.data()[1] == doctest::Approx(1.0f).epsilon(1e-3));
    }
    SUBCASE("eps must be positive")
    {
        auto x = Tensor<float>::zeros(Shape{1, 1, 1, 1, 2});
        CHECK_THROWS_AS(ops::instance_norm(tape, x, gamma, beta, 0.0f), Error);
    }
}

TEST_CASE("leaky_relu follows the scalar rule everywhere")
{
    Tape<float> tape;
    auto x = Tensor<float>::from(Shape{1, 1, 1, 1, 4}, {2.0f, -1.0f, 0.0f, -3.5f});
    auto y = ops::leaky_relu(tape, x, 0.01f);
    CHECK(y.data()[0] == doctest::Approx(2.0f));
    CHECK(y.data()[1] == doctest::Approx(-0.01f));
    CHECK(y.data()[2] == doctest::Approx(0.0f));
    CHECK(y.data()[3] == doctest::Approx(-0.035f));

    std::mt19937_64 rng(5);
    auto big = random_tensor<float>(Shape{2, 3, 2, 4, 4}, rng);
    auto out = ops::leaky_relu(tape, big, 0.01f);
    for (int64_t i = 0; i < big.numel(); ++i) {
        const float v = big.data()[i];
        CHECK(out.data()[i] == doctest::Approx(v >= 0 ? v : 0.01f * v));
    }
}

TEST_CASE("elementwise add/sub/abs")
{
    Tape<float> tape;
    auto a = Tensor<float>::from(Shape{2}, {1.0f, 2.0f});
    auto b = Tensor<float>::from(Shape{2}, {3.0f, 4.0f});
    auto sum = ops::add(tape, a, b);
    CHECK(sum.data()[0] == 4.0f);
    CHECK(sum.data()[1] == 6.0f);

    std::mt19937_64 rng(9);
    auto x = random_tensor<float>(Shape{1, 2, 2, 2, 2}, rng);
    auto zero = ops::abs(tape, ops::sub(tape, x, x));
    for (int64_t i = 0; i < zero.numel(); ++i)
        CHECK(zero.data()[i] == 0.0f);

    auto c = Tensor<float>::zeros(Shape{3});
    CHECK_THROWS_AS(ops::add(tape, a, c), Error);
}

TEST_CASE("concat_channels layout and recovery")
{
    Tape<float> tape;
    std::mt19937_64 rng(13);
    auto a = random_tensor<float>(Shape{1, 2, 1, 1, 1}, rng);
    auto b = random_tensor<float>(Shape{1, 3, 1, 1, 1}, rng);
    auto y = ops::concat_channels(tape, a, b);
    REQUIRE(y.shape() == Shape{1, 5, 1, 1, 1});
    CHECK(y.data()[0] == a.data()[0]);
    CHECK(y.data()[1] == a.data()[1]);
    CHECK(y.data()[2] == b.data()[0]);
    CHECK(y.data()[4] == b.data()[2]);

    auto bad = Tensor<float>::zeros(Shape{1, 3, 2, 1, 1});
    CHECK_THROWS_AS(ops::concat_channels(tape, a, bad), Error);
}

TEST_CASE("softmax_channels examples")
{
    Tape<float> tape;
    SUBCASE("equal logits split evenly")
    {
        auto x = Tensor<float>::from(Shape{1, 2, 1, 1, 1}, {0.7f, 0.7f});
        auto y = ops::softmax_channels(tape, x);
        CHECK(y.data()[0] == doctest::Approx(0.5f));
        CHECK(y.data()[1] == doctest::Approx(0.5f));
    }
    SUBCASE("logits (0, ln 3) give (0.25, 0.75)")
    {
        auto x = Tensor<float>::from(Shape{1, 2, 1, 1, 1},
                                     {0.0f, static_cast<float>(std::log(3.0))});
        auto y = ops::softmax_channels(tape, x);
        CHECK(y.data()[0] == doctest::Approx(0.25f));
        CHECK(y.data()[1] == doctest::Approx(0.75f));
    }
    SUBCASE("channel sums are 1 at every voxel")
    {
        std::mt19937_64 rng(17);
        auto x = random_tensor<float>(Shape{2, 4, 2, 3, 3}, rng);
        auto y = ops::softmax_channels(tape, x);
        const int64_t m = 2 * 3 * 3;
        for (int64_t ni = 0; ni < 2; ++ni)
            for (int64_t v = 0; v < m; ++v) {
                double s = 0;
                for (int64_t c = 0; c < 4; ++c)
                    s += y.data()[(ni * 4 + c) * m + v];
                CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
            }
    }
}

TEST_CASE("forward results are reproducible across repeated runs")
{
    std::mt19937_64 rng(23);
    auto x = random_tensor<float>(Shape{2, 3, 4, 6, 6}, rng);
    auto w = random_tensor<float>(Shape{4, 3, 3, 3, 3}, rng);
    auto b = random_tensor<float>(Shape{4}, rng);
    Tape<float> tape;
    auto y1 = ops::conv3d(tape, x, w, b, Extent3{1, 1, 1});
    auto y2 = ops::conv3d(tape, x, w, b, Extent3{1, 1, 1});
    for (int64_t i = 0; i < y1.numel(); ++i)
        CHECK(y1.data()[i] == y2.data()[i]); // bitwise
}
