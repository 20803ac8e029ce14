#pragma once

#include <algorithm>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "kcflat/error.hpp"

namespace kcflat::nn {

// NCHW extent. Fully connected activations use h = w = 1.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const noexcept {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
               static_cast<std::size_t>(w);
    }
    std::size_t sample_size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// 64-byte aligned storage. Vectorized kernels split loops by pointer alignment, so a fixed
// alignment keeps floating-point results independent of where the heap places a buffer.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.numel(), fill) {}

    const Shape& shape() const noexcept { return shape_; }
    int n() const noexcept { return shape_.n; }
    int c() const noexcept { return shape_.c; }
    int h() const noexcept { return shape_.h; }
    int w() const noexcept { return shape_.w; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T* sample(int i) noexcept { return data_.data() + static_cast<std::size_t>(i) * shape_.sample_size(); }
    const T* sample(int i) const noexcept {
        return data_.data() + static_cast<std::size_t>(i) * shape_.sample_size();
    }

    T& operator()(int ni, int ci, int hi, int wi) noexcept { return data_[index(ni, ci, hi, wi)]; }
    const T& operator()(int ni, int ci, int hi, int wi) const noexcept { return data_[index(ni, ci, hi, wi)]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    void reshape(Shape s) {
        if (s.numel() != data_.size()) {
            throw ShapeError("reshape " + to_string(shape_) + " -> " + to_string(s) + " changes element count");
        }
        shape_ = s;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool operator==(const Tensor&) const = default;

private:
    std::size_t index(int ni, int ci, int hi, int wi) const noexcept {
        return ((static_cast<std::size_t>(ni) * shape_.c + ci) * shape_.h + hi) * shape_.w + wi;
    }

    Shape shape_;
    AlignedVector<T> data_;
};

template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;

    explicit Parameter(Shape s = {}) : value(s), grad(s) {}
    void zero_grad() { grad.fill(T{}); }
};

// Flat view of every trainable and persistent tensor of a module tree, in a stable order.
template <typename T>
struct TensorRegistry {
    std::vector<std::pair<std::string, Parameter<T>*>> parameters;
    std::vector<std::pair<std::string, Tensor<T>*>> buffers;
};

}  // namespace kcflat::nn
