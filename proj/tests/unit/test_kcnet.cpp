#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "grad_check.hpp"
#include "kcflat/kcnet.hpp"

using namespace kcflat;
using kcflat::testing::max_gradient_error;
using kcflat::testing::random_tensor;

namespace {

KCNetConfig tiny_config(ModalityKind m = ModalityKind::depth, int res = 8) {
    KCNetConfig c;
    c.modality = Modality{m};
    c.backbone = Backbone::tiny;
    c.base_width = 4;
    c.input_resolution = res;
    return c;
}

double exp_sum(const nn::Tensor<float>& lp, int sample) {
    double s = 0;
    for (int j = 0; j < kClassCount; ++j) s += std::exp(static_cast<double>(lp.sample(sample)[j]));
    return s;
}

double net_gradient_error(KCNet<double>& net, const nn::Tensor<double>& x, const std::vector<int>& labels,
                          std::size_t max_probes, double h) {
    net.zero_grad();
    const auto lp = net.forward(x, nn::Mode::train);
    net.backward(nll_loss_grad(lp, std::span<const int>(labels)));
    std::vector<double*> ptrs;
    std::vector<double> analytic;
    for (auto* p : net.parameters()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            ptrs.push_back(&p->value[i]);
            analytic.push_back(p->grad[i]);
        }
    }
    auto loss = [&] { return nll_loss(net.forward(x, nn::Mode::train), std::span<const int>(labels)); };
    return max_gradient_error(ptrs, analytic, loss, h, max_probes);
}

}  // namespace

TEST_CASE("forward produces normalized log-probabilities for each modality") {
    std::mt19937_64 rng(1);
    for (auto m : {ModalityKind::depth, ModalityKind::rgb, ModalityKind::rgbd}) {
        KCNetConfig cfg;
        cfg.modality = Modality{m};
        cfg.base_width = 4;
        cfg.input_resolution = 32;
        KCNet<float> net(cfg);
        const auto x = random_tensor<float>({2, cfg.input_channels(), 32, 32}, rng);
        const auto lp = net.forward(x, nn::Mode::eval);
        REQUIRE(lp.shape() == nn::Shape{2, kClassCount, 1, 1});
        CHECK(exp_sum(lp, 0) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(exp_sum(lp, 1) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("property: normalization holds for random weights and inputs") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        KCNet<float> net(tiny_config(ModalityKind::rgbd, 8));
        net.initialize(rng());
        const auto x = random_tensor<float>({3, 4, 8, 8}, rng, 1.0 + trial);
        const auto lp = net.forward(x, trial % 2 ? nn::Mode::train : nn::Mode::eval);
        for (int n = 0; n < 3; ++n) CHECK(exp_sum(lp, n) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("full-size depth input at 256x256") {
    KCNetConfig cfg;
    cfg.base_width = 8;
    KCNet<float> net(cfg);
    nn::Tensor<float> x({1, 1, 256, 256}, 0.5f);
    const auto lp = net.forward(x, nn::Mode::eval);
    CHECK(exp_sum(lp, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("channel and resolution mismatches are rejected") {
    KCNet<float> net(tiny_config(ModalityKind::depth, 8));
    CHECK_THROWS_AS(net.forward(nn::Tensor<float>({1, 3, 8, 8}), nn::Mode::eval), ShapeError);
    CHECK_THROWS_AS(net.forward(nn::Tensor<float>({1, 1, 16, 16}), nn::Mode::eval), ShapeError);
    KCNetConfig bad = tiny_config();
    bad.head_widths = {64, 10};
    CHECK_THROWS_AS(KCNet<float>{bad}, ConfigError);
    bad.head_widths = {};
    CHECK_THROWS_AS(KCNet<float>{bad}, ConfigError);
}

TEST_CASE("head widths build hidden fully connected layers") {
    KCNetConfig cfg = tiny_config();
    cfg.head_widths = {16, 50};
    KCNet<float> net(cfg);
    std::vector<std::string> names;
    for (const auto& [name, p] : net.registry().parameters) names.push_back(name);
    CHECK(std::count_if(names.begin(), names.end(), [](const std::string& n) { return n.starts_with("head."); }) == 4);
    const auto lp = net.forward(nn::Tensor<float>({2, 1, 8, 8}, 0.3f), nn::Mode::eval);
    CHECK(exp_sum(lp, 1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("resnet18 tensor names follow the usual layout") {
    KCNetConfig cfg;
    cfg.base_width = 4;
    cfg.input_resolution = 32;
    KCNet<float> net(cfg);
    std::set<std::string> names;
    for (const auto& [name, p] : net.registry().parameters) names.insert(name);
    for (const char* n : {"conv1.weight", "bn1.weight", "layer1.0.conv1.weight", "layer1.1.bn2.bias",
                          "layer2.0.downsample.0.weight", "layer4.1.conv2.weight", "head.0.weight", "head.0.bias"}) {
        CHECK_MESSAGE(names.contains(n), n);
    }
    CHECK_FALSE(names.contains("layer1.0.downsample.0.weight"));
    // 4 stages x 2 blocks x 2 convs + stem conv + 3 projections = 20 convolutions.
    CHECK(std::count_if(names.begin(), names.end(), [](const std::string& n) {
              return n.ends_with("weight") && (n.find("conv") != std::string::npos || n.find("downsample.0") != std::string::npos);
          }) == 20);
}

TEST_CASE("nll_loss values") {
    LogProbVector uniform;
    uniform.fill(-std::log(50.0));
    CHECK(std::abs(nll_loss(uniform, ClassLabel(GarmentCategory::towel, 3)) - std::log(50.0)) <= 1e-9);
    LogProbVector peaked;
    peaked.fill(-std::numeric_limits<double>::infinity());
    peaked[17] = 0.0;
    CHECK(nll_loss(peaked, ClassLabel::from_flat(17)) == 0.0);
    LogProbVector quarter;
    quarter.fill(std::log(0.75 / 49));
    quarter[5] = std::log(0.25);
    CHECK(nll_loss(quarter, ClassLabel::from_flat(5)) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    nn::Tensor<double> lp({2, kClassCount, 1, 1}, -std::log(50.0));
    const std::vector<int> labels{0, 49};
    CHECK(std::abs(nll_loss(lp, std::span<const int>(labels)) - std::log(50.0)) <= 1e-9);
    const auto g = nll_loss_grad(lp, std::span<const int>(labels));
    CHECK(g(0, 0, 0, 0) == -0.5);
    CHECK(g(1, 49, 0, 0) == -0.5);
    CHECK(g(1, 0, 0, 0) == 0.0);
}

TEST_CASE("decode_prediction takes the argmax and the lowest index on ties") {
    std::vector<double> lp(kClassCount, -10.0);
    lp[17] = -0.1;
    const ClassLabel l = decode_prediction(lp);
    CHECK(l.category() == GarmentCategory::shirt);
    CHECK(l.segment_id() == 7);
    lp[12] = -0.1;
    CHECK(decode_prediction(lp).flat_index() == 12);
    for (auto& v : lp) v += 3.5;
    CHECK(decode_prediction(lp).flat_index() == 12);
    CHECK_THROWS(decode_prediction(std::vector<double>(10, 0.0)));
}

TEST_CASE("property: prediction is invariant to a constant shift of the scores") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(kClassCount);
        for (auto& v : s) v = n(rng);
        const double c = 50 * n(rng);
        std::vector<double> shifted = s;
        for (auto& v : shifted) v += c;
        CHECK(decode_prediction(s) == decode_prediction(shifted));
    }
}

TEST_CASE("gradient check on the tiny configuration (8x8 input, two conv layers)") {
    std::mt19937_64 rng(5);
    KCNetConfig cfg = tiny_config(ModalityKind::depth, 8);
    KCNet<double> net(cfg);
    net.initialize(3);
    const auto x = random_tensor<double>({4, 1, 8, 8}, rng);
    const std::vector<int> labels{3, 17, 42, 17};
    CHECK(net_gradient_error(net, x, labels, 0, 1e-6) <= 1e-3);
}

TEST_CASE("gradient check on a narrow resnet18 (sampled parameters)") {
    std::mt19937_64 rng(6);
    KCNetConfig cfg;
    cfg.modality = Modality{ModalityKind::rgbd};
    cfg.base_width = 2;
    cfg.input_resolution = 32;
    cfg.head_widths = {8, 50};
    KCNet<double> net(cfg);
    net.initialize(8);
    const auto x = random_tensor<double>({3, 4, 32, 32}, rng);
    const std::vector<int> labels{0, 25, 49};
    CHECK(net_gradient_error(net, x, labels, 300, 1e-7) <= 1e-3);
}

TEST_CASE("adapt_input_channels constructions") {
    std::mt19937_64 rng(2);
    const auto w = random_tensor<float>({4, 3, 3, 3}, rng);
    CHECK(adapt_input_channels(w, 3) == w);
    const auto one = adapt_input_channels(w, 1);
    const auto four = adapt_input_channels(w, 4);
    REQUIRE(one.shape() == nn::Shape{4, 1, 3, 3});
    REQUIRE(four.shape() == nn::Shape{4, 4, 3, 3});
    for (int o = 0; o < 4; ++o)
        for (int k = 0; k < 9; ++k) {
            const float mean = (w(o, 0, k / 3, k % 3) + w(o, 1, k / 3, k % 3) + w(o, 2, k / 3, k % 3)) / 3.0f;
            CHECK(one(o, 0, k / 3, k % 3) == doctest::Approx(mean).epsilon(1e-6));
            for (int c = 0; c < 3; ++c) CHECK(four(o, c, k / 3, k % 3) == w(o, c, k / 3, k % 3));
            CHECK(four(o, 3, k / 3, k % 3) == one(o, 0, k / 3, k % 3));
        }
    CHECK_THROWS_AS(adapt_input_channels(w, 2), ConfigError);
    CHECK_THROWS_AS(adapt_input_channels(one, 4), ShapeError);
}

TEST_CASE("channel-mean filters on a gray image equal the source filters on the replicated image, up to the factor 3") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        nn::Conv2d<float> rgb_conv(3, 5, 7, 2, 3), gray_conv(1, 5, 7, 2, 3);
        rgb_conv.initialize(rng);
        gray_conv.weight().value = adapt_input_channels(rgb_conv.weight().value, 1);
        const auto gray = random_tensor<float>({2, 1, 16, 16}, rng);
        nn::Tensor<float> replicated({2, 3, 16, 16});
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < 256; ++i) replicated(n, c, i / 16, i % 16) = gray(n, 0, i / 16, i % 16);
        const auto a = gray_conv.forward(gray, nn::Mode::eval);
        const auto b = rgb_conv.forward(replicated, nn::Mode::eval);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(3.0f * a[i] == doctest::Approx(b[i]).epsilon(1e-4));
    }
}

TEST_CASE("tensor export/import round trips and pretrained loading skips the head") {
    KCNetConfig cfg = tiny_config(ModalityKind::depth, 8);
    KCNet<float> a(cfg), b(cfg);
    a.initialize(1);
    b.initialize(2);
    const auto tensors = a.export_tensors();
    b.import_tensors(tensors);
    CHECK(b.export_tensors() == tensors);
    nn::Tensor<float> x({2, 1, 8, 8}, 0.25f);
    CHECK(a.forward(x, nn::Mode::eval) == b.forward(x, nn::Mode::eval));

    auto missing = tensors;
    missing.pop_back();
    CHECK_THROWS_AS(b.import_tensors(missing), ConfigError);
    auto wrong = tensors;
    wrong.front().shape.n += 1;
    wrong.front().values.resize(wrong.front().shape.numel());
    CHECK_THROWS_AS(b.import_tensors(wrong), ShapeError);

    // A 3-channel source network initializes the depth network's backbone; the head is untouched.
    KCNetConfig rgb_cfg = tiny_config(ModalityKind::rgb, 8);
    KCNet<float> src(rgb_cfg);
    src.initialize(9);
    KCNet<float> dst(cfg);
    dst.initialize(10);
    const auto head_before = dst.export_tensors();
    const int loaded = dst.load_pretrained(src.export_tensors());
    const auto after = dst.export_tensors();
    int head_tensors = 0;
    for (std::size_t i = 0; i < after.size(); ++i) {
        if (after[i].name.starts_with("head.")) {
            ++head_tensors;
            CHECK(after[i] == head_before[i]);
        }
    }
    CHECK(loaded == static_cast<int>(after.size()) - head_tensors);
    const auto src_conv = src.export_tensors().front();
    REQUIRE(src_conv.name == "conv1.weight");
    nn::Tensor<float> sw(src_conv.shape);
    std::copy(src_conv.values.begin(), src_conv.values.end(), sw.data());
    const auto expect = adapt_input_channels(sw, 1);
    CHECK(std::equal(expect.values().begin(), expect.values().end(), after.front().values.begin()));
}

TEST_CASE("initialization is deterministic per seed") {
    KCNetConfig cfg;
    cfg.base_width = 4;
    cfg.input_resolution = 32;
    KCNet<float> a(cfg), b(cfg), c(cfg);
    a.initialize(42);
    b.initialize(42);
    c.initialize(43);
    CHECK(a.export_tensors() == b.export_tensors());
    CHECK(a.export_tensors() != c.export_tensors());
}
