#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kcflat/nn/tensor.hpp"

namespace kcflat::nn {

enum class Mode { train, eval };

// A differentiable stage. forward() in train mode caches what backward() needs; backward()
// accumulates parameter gradients and returns the gradient with respect to the input.
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual void collect(const std::string& prefix, TensorRegistry<T>& out) { (void)prefix, (void)out; }
    virtual void initialize(std::mt19937_64& rng) { (void)rng; }
};

template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(const std::string& prefix, TensorRegistry<T>& out) override;
    void initialize(std::mt19937_64& rng) override;

    Parameter<T>& weight() noexcept { return weight_; }
    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }

private:
    int in_, out_, kernel_, stride_, padding_;
    Parameter<T> weight_;  // [out, in, k, k]
    Tensor<T> input_;
};

template <typename T>
class BatchNorm2d final : public Layer<T> {
public:
    explicit BatchNorm2d(int channels, T momentum = T(0.1), T eps = T(1e-5));

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(const std::string& prefix, TensorRegistry<T>& out) override;
    void initialize(std::mt19937_64& rng) override;

private:
    int channels_;
    T momentum_, eps_;
    Parameter<T> gamma_, beta_;
    Tensor<T> running_mean_, running_var_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

template <typename T>
class ReLU final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

private:
    std::vector<std::uint8_t> active_;
    Shape shape_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
public:
    MaxPool2d(int kernel, int stride, int padding) : kernel_(kernel), stride_(stride), padding_(padding) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

private:
    int kernel_, stride_, padding_;
    Shape in_shape_;
    std::vector<std::int32_t> argmax_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

private:
    Shape in_shape_;
};

// Treats the input as [N, c*h*w] and produces [N, out, 1, 1].
template <typename T>
class Linear final : public Layer<T> {
public:
    Linear(int in_features, int out_features);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(const std::string& prefix, TensorRegistry<T>& out) override;
    void initialize(std::mt19937_64& rng) override;

private:
    int in_, out_;
    Parameter<T> weight_;  // [out, in, 1, 1]
    Parameter<T> bias_;    // [1, out, 1, 1]
    Tensor<T> input_;
};

// Normalizes over the channel axis of [N, C, 1, 1].
template <typename T>
class LogSoftmax final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

private:
    Tensor<T> output_;
};

template <typename T>
class Sequential final : public Layer<T> {
public:
    Sequential() = default;

    // name becomes the registry path component; empty name inlines the child's tensors.
    template <typename L, typename... Args>
    L& add(std::string name, Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        children_.push_back({std::move(name), std::move(layer)});
        return ref;
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(const std::string& prefix, TensorRegistry<T>& out) override;
    void initialize(std::mt19937_64& rng) override;

    std::size_t size() const noexcept { return children_.size(); }

private:
    struct Child {
        std::string name;
        std::unique_ptr<Layer<T>> layer;
    };
    std::vector<Child> children_;
};

// Two 3x3 convolutions with a residual shortcut (1x1 projection when the shape changes).
template <typename T>
class BasicBlock final : public Layer<T> {
public:
    BasicBlock(int in_channels, int out_channels, int stride);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(const std::string& prefix, TensorRegistry<T>& out) override;
    void initialize(std::mt19937_64& rng) override;

private:
    Conv2d<T> conv1_;
    BatchNorm2d<T> bn1_;
    ReLU<T> relu1_;
    Conv2d<T> conv2_;
    BatchNorm2d<T> bn2_;
    std::unique_ptr<Conv2d<T>> down_conv_;
    std::unique_ptr<BatchNorm2d<T>> down_bn_;
    ReLU<T> relu_out_;
};

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src);

}  // namespace kcflat::nn
