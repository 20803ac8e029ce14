#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include "kcflat/dataset.hpp"
#include "kcflat/png_io.hpp"

namespace kcflat::testing {

// Scratch directory removed when the test ends.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("kcflat_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Mask with the half-open box [x0, x1) x [y0, y1) set.
inline Mask box_mask(int w, int h, int x0, int y0, int x1, int y1) {
    Mask m(w, h);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.at(x, y) = 1;
    return m;
}

// Writes a tiny dataset of solid-box captures: every (category, instance, segment) once. Box size
// and depth change with the segment so that the ten captures of an instance are easy to tell apart.
inline DatasetManifest write_box_dataset(const std::filesystem::path& dir, int instances, int res = 32,
                                         bool with_rgb = true) {
    DatasetManifest m;
    m.root = dir;
    m.header = {res, 2000.0, "boxes"};
    for (const char* sub : {"depth", "rgb", "mask"}) std::filesystem::create_directories(dir / sub);
    for (auto cat : kAllCategories) {
        for (int i = 0; i < instances; ++i) {
            for (int s = 0; s < kSegmentCount; ++s) {
                const std::string stem = std::string(to_string(cat)) + "_" + std::to_string(i) + "_" + std::to_string(s);
                Mask mask = box_mask(res, res, 2, 1 + s * res / 32, res / 2 + s * res / 32, res - 2 - i);
                DepthImage depth(res, res);
                RgbImage rgb(res, res, 3);
                for (int y = 0; y < res; ++y)
                    for (int x = 0; x < res; ++x)
                        if (mask.at(x, y)) {
                            depth.at(x, y) = static_cast<std::uint16_t>(600 + 120 * s + 8 * y * 32 / res);
                            for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = static_cast<std::uint8_t>(40 * c + 3 * s);
                        }
                ManifestEntry e{"depth/" + stem + ".png", with_rgb ? "rgb/" + stem + ".png" : "", "mask/" + stem + ".png",
                                cat, i, s};
                png::write_gray16(dir / e.depth_path, depth);
                if (with_rgb) png::write_rgb8(dir / e.rgb_path, rgb);
                png::write_mask(dir / e.mask_path, mask);
                m.entries.push_back(e);
            }
        }
    }
    m.recount();
    write_manifest(m, dir / kManifestFileName);
    return load_manifest(dir / kManifestFileName);
}

}  // namespace kcflat::testing
