#pragma once

#include <cstdint>
#include <vector>

#include "kcflat/error.hpp"

namespace kcflat {

// Interleaved row-major raster.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> pixels;

    Image() = default;
    Image(int w, int h, int c = 1, T fill = T{})
        : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    bool empty() const noexcept { return pixels.empty(); }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
    bool same_extent(int w, int h) const noexcept { return width == w && height == h; }
    template <typename U>
    bool same_extent(const Image<U>& o) const noexcept { return same_extent(o.width, o.height); }

    T& at(int x, int y, int c = 0) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    const T& at(int x, int y, int c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool operator==(const Image&) const = default;
};

using DepthImage = Image<std::uint16_t>;  // millimetres, 0 = no return / off-mask
using RgbImage = Image<std::uint8_t>;     // three channels
using Mask = Image<std::uint8_t>;         // one channel, nonzero = garment

struct Pixel {
    int x = 0;
    int y = 0;
    bool operator==(const Pixel&) const = default;
};

}  // namespace kcflat
