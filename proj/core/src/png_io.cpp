#include "kcflat/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

namespace kcflat::png {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw DatasetError("cannot open image file: " + path.string());
    return f;
}

bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

// libpng reports errors through longjmp; the message is parked here and rethrown as C++.
struct ErrorSink {
    std::string message;
};

void on_png_error(png_structp png, png_const_charp msg) {
    if (auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png))) sink->message = msg ? msg : "libpng error";
    png_longjmp(png, 1);
}
void on_png_warning(png_structp, png_const_charp) {}

struct Decoded {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> bytes;
};

enum class Target { gray16, rgb8, mask8 };

Decoded decode(const std::filesystem::path& path, Target target) {
    FilePtr file = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw DatasetError("not a PNG file: " + path.string());
    }
    ErrorSink sink;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_png_error, on_png_warning);
    if (!png) throw DatasetError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    Decoded out;
    std::vector<png_bytep> rows;
    std::string layout_error;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DatasetError(path.string() + ": " + sink.message);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    int want_channels = 1;
    int want_bytes = 1;
    switch (target) {
        case Target::gray16:
            if (color != PNG_COLOR_TYPE_GRAY || depth != 16) layout_error = "depth image must be 16-bit grayscale";
            if (host_is_little_endian()) png_set_swap(png);
            want_bytes = 2;
            break;
        case Target::rgb8:
            if ((color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_RGB_ALPHA) || depth != 8)
                layout_error = "colour image must be 8-bit RGB";
            png_set_strip_alpha(png);
            want_channels = 3;
            break;
        case Target::mask8:
            if (color != PNG_COLOR_TYPE_GRAY) layout_error = "mask must be single-channel grayscale";
            if (depth < 8) png_set_packing(png);
            png_set_strip_16(png);
            break;
    }
    if (layout_error.empty()) {
        png_read_update_info(png, info);
        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        const int ch = png_get_channels(png, info);
        const int bd = png_get_bit_depth(png, info);
        if (ch != want_channels || bd != want_bytes * 8) {
            layout_error = "unexpected PNG layout";
        } else {
            const std::size_t stride = png_get_rowbytes(png, info);
            out.bytes.resize(stride * static_cast<std::size_t>(out.height));
            rows.resize(static_cast<std::size_t>(out.height));
            for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = out.bytes.data() + stride * y;
            png_read_image(png, rows.data());
            png_read_end(png, nullptr);
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!layout_error.empty()) throw DatasetError(path.string() + ": " + layout_error);
    return out;
}

void encode(const std::filesystem::path& path, int w, int h, int color_type, int bit_depth,
            const unsigned char* data, std::size_t stride) {
    FilePtr file = open_file(path, "wb");
    ErrorSink sink;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_png_error, on_png_warning);
    if (!png) throw DatasetError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DatasetError(path.string() + ": " + sink.message);
    }
    png_init_io(png, file.get());
    png_set_compression_level(png, 3);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16 && host_is_little_endian()) png_set_swap(png);
    for (int y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(data + stride * static_cast<std::size_t>(y)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Header read_header(const std::filesystem::path& path) {
    FilePtr file = open_file(path, "rb");
    // Signature (8) + IHDR length/type (8) + width, height, bit depth, colour type.
    unsigned char buf[26];
    if (std::fread(buf, 1, sizeof buf, file.get()) != sizeof buf || png_sig_cmp(buf, 0, 8) != 0 ||
        std::memcmp(buf + 12, "IHDR", 4) != 0) {
        throw DatasetError("not a PNG file: " + path.string());
    }
    auto be32 = [](const unsigned char* p) {
        return static_cast<int>((std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
                                (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]));
    };
    Header h;
    h.width = be32(buf + 16);
    h.height = be32(buf + 20);
    h.bit_depth = buf[24];
    switch (buf[25]) {
        case PNG_COLOR_TYPE_GRAY: h.channels = 1; break;
        case PNG_COLOR_TYPE_GRAY_ALPHA: h.channels = 2; break;
        case PNG_COLOR_TYPE_RGB: h.channels = 3; break;
        case PNG_COLOR_TYPE_RGB_ALPHA: h.channels = 4; break;
        case PNG_COLOR_TYPE_PALETTE: h.channels = 1; break;
        default: h.channels = 0; break;
    }
    return h;
}

DepthImage read_gray16(const std::filesystem::path& path) {
    Decoded d = decode(path, Target::gray16);
    DepthImage img(d.width, d.height);
    std::memcpy(img.pixels.data(), d.bytes.data(), img.pixels.size() * sizeof(std::uint16_t));
    return img;
}

RgbImage read_rgb8(const std::filesystem::path& path) {
    Decoded d = decode(path, Target::rgb8);
    RgbImage img(d.width, d.height, 3);
    std::memcpy(img.pixels.data(), d.bytes.data(), img.pixels.size());
    return img;
}

Mask read_mask(const std::filesystem::path& path) {
    Decoded d = decode(path, Target::mask8);
    Mask img(d.width, d.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = d.bytes[i] != 0 ? 1 : 0;
    return img;
}

void write_gray16(const std::filesystem::path& path, const DepthImage& img) {
    encode(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 16,
           reinterpret_cast<const unsigned char*>(img.pixels.data()), static_cast<std::size_t>(img.width) * 2);
}

void write_rgb8(const std::filesystem::path& path, const RgbImage& img) {
    if (img.channels != 3) throw ShapeError("write_rgb8 expects a 3-channel image");
    encode(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, img.pixels.data(),
           static_cast<std::size_t>(img.width) * 3);
}

void write_mask(const std::filesystem::path& path, const Mask& img) {
    std::vector<unsigned char> data(img.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = img.pixels[i] ? 255 : 0;
    encode(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 8, data.data(), static_cast<std::size_t>(img.width));
}

}  // namespace kcflat::png
