#pragma once

#include <filesystem>

#include "kcflat/image.hpp"

namespace kcflat::png {

struct Header {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
};

// Reads only the IHDR chunk.
Header read_header(const std::filesystem::path& path);

DepthImage read_gray16(const std::filesystem::path& path);
RgbImage read_rgb8(const std::filesystem::path& path);
// 1-bit, 8-bit or 16-bit grayscale; any nonzero sample becomes 1.
Mask read_mask(const std::filesystem::path& path);

void write_gray16(const std::filesystem::path& path, const DepthImage& img);
void write_rgb8(const std::filesystem::path& path, const RgbImage& img);
// Stored as 8-bit grayscale with values 0/255.
void write_mask(const std::filesystem::path& path, const Mask& img);

}  // namespace kcflat::png
