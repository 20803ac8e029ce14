#include <benchmark/benchmark.h>

#include <random>

#include "kcflat/kcnet.hpp"

using namespace kcflat;

namespace {

nn::Tensor<float> random_input(nn::Shape s) {
    nn::Tensor<float> t(s);
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n;
    for (auto& v : t.values()) v = n(rng);
    return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    nn::Conv2d<float> conv(c, c, 3, 1, 1);
    std::mt19937_64 rng(2);
    conv.initialize(rng);
    const auto x = random_input({8, c, 32, 32});
    for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nn::Mode::eval));
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv3x3Forward)->Arg(16)->Arg(64);

void BM_Conv3x3TrainStep(benchmark::State& state) {
    nn::Conv2d<float> conv(32, 32, 3, 1, 1);
    std::mt19937_64 rng(3);
    conv.initialize(rng);
    const auto x = random_input({8, 32, 32, 32});
    const nn::Tensor<float> g({8, 32, 32, 32}, 1.0f);
    for (auto _ : state) {
        conv.forward(x, nn::Mode::train);
        benchmark::DoNotOptimize(conv.backward(g));
    }
}
BENCHMARK(BM_Conv3x3TrainStep);

// Single-capture inference, the recognition stage of the pipeline.
void BM_KCNetInference(benchmark::State& state) {
    KCNetConfig cfg;
    cfg.base_width = static_cast<int>(state.range(0));
    cfg.input_resolution = static_cast<int>(state.range(1));
    KCNet<float> net(cfg);
    net.initialize(0);
    const auto x = random_input({1, 1, cfg.input_resolution, cfg.input_resolution});
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, nn::Mode::eval));
}
BENCHMARK(BM_KCNetInference)->Args({16, 64})->Args({64, 256})->Unit(benchmark::kMillisecond);

void BM_KCNetTrainBatch(benchmark::State& state) {
    KCNetConfig cfg;
    cfg.base_width = 16;
    cfg.input_resolution = 64;
    KCNet<float> net(cfg);
    net.initialize(0);
    const auto x = random_input({32, 1, 64, 64});
    std::vector<int> labels(32);
    for (int i = 0; i < 32; ++i) labels[static_cast<std::size_t>(i)] = i;
    for (auto _ : state) {
        net.zero_grad();
        const auto lp = net.forward(x, nn::Mode::train);
        net.backward(nll_loss_grad(lp, std::span<const int>(labels)));
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_KCNetTrainBatch)->Unit(benchmark::kMillisecond);

}  // namespace
