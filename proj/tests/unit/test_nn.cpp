#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "grad_check.hpp"
#include "kcflat/nn/layers.hpp"

using namespace kcflat;
using namespace kcflat::nn;
using kcflat::testing::max_gradient_error;
using kcflat::testing::random_tensor;

namespace {

// Loss = sum(r * layer(x)) for a fixed random r; checks input and parameter gradients.
double check_layer(Layer<double>& layer, Tensor<double> x, std::mt19937_64& rng, double h = 1e-6) {
    TensorRegistry<double> reg;
    layer.collect("", reg);
    Tensor<double> y = layer.forward(x, Mode::train);
    const Tensor<double> r = random_tensor<double>(y.shape(), rng);
    for (auto& [name, p] : reg.parameters) p->zero_grad();
    const Tensor<double> dx = layer.backward(r);
    auto loss = [&] {
        const Tensor<double> out = layer.forward(x, Mode::train);
        double s = 0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
        return s;
    };
    std::vector<double*> ptrs;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ptrs.push_back(&x[i]);
        analytic.push_back(dx[i]);
    }
    for (auto& [name, p] : reg.parameters) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            ptrs.push_back(&p->value[i]);
            analytic.push_back(p->grad[i]);
        }
    }
    return max_gradient_error(ptrs, analytic, loss, h);
}

}  // namespace

TEST_CASE("layer gradients match central differences") {
    std::mt19937_64 rng(3);
    SUBCASE("conv stride 1 pad 1") {
        Conv2d<double> conv(2, 3, 3, 1, 1);
        conv.initialize(rng);
        CHECK(check_layer(conv, random_tensor<double>({2, 2, 5, 5}, rng), rng) < 1e-6);
    }
    SUBCASE("conv stride 2 kernel 7 pad 3") {
        Conv2d<double> conv(3, 2, 7, 2, 3);
        conv.initialize(rng);
        CHECK(check_layer(conv, random_tensor<double>({2, 3, 9, 9}, rng), rng) < 1e-6);
    }
    SUBCASE("batch norm") {
        BatchNorm2d<double> bn(3);
        bn.initialize(rng);
        CHECK(check_layer(bn, random_tensor<double>({4, 3, 3, 3}, rng), rng) < 1e-5);
    }
    SUBCASE("relu") {
        ReLU<double> relu;
        // Inputs stay clear of the kink, so the loss is linear within a step of 1e-3.
        Tensor<double> x = random_tensor<double>({2, 2, 4, 4}, rng);
        for (auto& v : x.values()) v = v < 0 ? v - 0.05 : v + 0.05;
        CHECK(check_layer(relu, x, rng, 1e-3) < 1e-6);
    }
    SUBCASE("max pool") {
        MaxPool2d<double> pool(3, 2, 1);
        CHECK(check_layer(pool, random_tensor<double>({2, 2, 7, 7}, rng), rng) < 1e-6);
    }
    SUBCASE("global average pool") {
        GlobalAvgPool<double> gap;
        CHECK(check_layer(gap, random_tensor<double>({2, 3, 4, 4}, rng), rng) < 1e-6);
    }
    SUBCASE("linear") {
        Linear<double> fc(12, 5);
        fc.initialize(rng);
        CHECK(check_layer(fc, random_tensor<double>({3, 3, 2, 2}, rng), rng) < 1e-6);
    }
    SUBCASE("log softmax") {
        LogSoftmax<double> ls;
        CHECK(check_layer(ls, random_tensor<double>({3, 7, 1, 1}, rng, 3.0), rng) < 1e-6);
    }
    SUBCASE("basic block with projection shortcut") {
        BasicBlock<double> block(2, 4, 2);
        block.initialize(rng);
        CHECK(check_layer(block, random_tensor<double>({3, 2, 6, 6}, rng), rng, 1e-7) < 1e-4);
    }
    SUBCASE("basic block with identity shortcut") {
        BasicBlock<double> block(3, 3, 1);
        block.initialize(rng);
        CHECK(check_layer(block, random_tensor<double>({2, 3, 5, 5}, rng), rng, 1e-7) < 1e-4);
    }
}

TEST_CASE("convolution matches a direct loop oracle") {
    std::mt19937_64 rng(9);
    Conv2d<double> conv(2, 3, 3, 2, 1);
    conv.initialize(rng);
    TensorRegistry<double> reg;
    conv.collect("", reg);
    const Tensor<double>& w = reg.parameters[0].second->value;
    const Tensor<double> x = random_tensor<double>({2, 2, 6, 5}, rng);
    const Tensor<double> y = conv.forward(x, Mode::eval);
    REQUIRE(y.shape() == Shape{2, 3, 3, 3});
    for (int n = 0; n < 2; ++n)
        for (int o = 0; o < 3; ++o)
            for (int oy = 0; oy < 3; ++oy)
                for (int ox = 0; ox < 3; ++ox) {
                    double s = 0;
                    for (int c = 0; c < 2; ++c)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                                if (iy < 0 || ix < 0 || iy >= 6 || ix >= 5) continue;
                                s += w(o, c, ky, kx) * x(n, c, iy, ix);
                            }
                    CHECK(y(n, o, oy, ox) == doctest::Approx(s).epsilon(1e-12));
                }
}

TEST_CASE("batch norm tracks running statistics with momentum 0.1 and unbiased variance") {
    std::mt19937_64 rng(4);
    BatchNorm2d<double> bn(2);
    bn.initialize(rng);
    TensorRegistry<double> reg;
    bn.collect("bn.", reg);
    REQUIRE(reg.buffers.size() == 2);
    CHECK(reg.buffers[0].first == "bn.running_mean");
    const Tensor<double> x = random_tensor<double>({3, 2, 2, 2}, rng, 2.0);
    bn.forward(x, Mode::train);
    for (int c = 0; c < 2; ++c) {
        double mean = 0, sq = 0;
        const int count = 3 * 4;
        for (int n = 0; n < 3; ++n)
            for (int i = 0; i < 4; ++i) mean += x(n, c, i / 2, i % 2);
        mean /= count;
        for (int n = 0; n < 3; ++n)
            for (int i = 0; i < 4; ++i) sq += std::pow(x(n, c, i / 2, i % 2) - mean, 2);
        CHECK((*reg.buffers[0].second)[static_cast<std::size_t>(c)] == doctest::Approx(0.1 * mean));
        CHECK((*reg.buffers[1].second)[static_cast<std::size_t>(c)] == doctest::Approx(0.9 + 0.1 * sq / (count - 1)));
    }
    // Eval mode uses the running statistics and leaves them alone.
    const auto before = *reg.buffers[0].second;
    bn.forward(x, Mode::eval);
    CHECK(*reg.buffers[0].second == before);
}

TEST_CASE("sequential names tensors by path") {
    Sequential<float> s;
    s.add<Conv2d<float>>("conv1", 1, 2, 3, 1, 1);
    s.add<BatchNorm2d<float>>("bn1", 2);
    s.add<ReLU<float>>("");
    TensorRegistry<float> reg;
    s.collect("", reg);
    REQUIRE(reg.parameters.size() == 3);
    CHECK(reg.parameters[0].first == "conv1.weight");
    CHECK(reg.parameters[1].first == "bn1.weight");
    CHECK(reg.parameters[2].first == "bn1.bias");
    CHECK(reg.buffers[1].first == "bn1.running_var");
}

TEST_CASE("shape errors") {
    Conv2d<float> conv(3, 4, 3, 1, 1);
    CHECK_THROWS_AS(conv.forward(Tensor<float>({1, 2, 5, 5}), Mode::eval), ShapeError);
    Linear<float> fc(10, 2);
    CHECK_THROWS_AS(fc.forward(Tensor<float>({1, 3, 1, 1}), Mode::eval), ShapeError);
    Tensor<float> t({2, 3, 4, 5});
    CHECK_THROWS_AS(t.reshape({1, 1, 1, 7}), ShapeError);
}
