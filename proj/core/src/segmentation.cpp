#include "kcflat/segmentation.hpp"

#include <algorithm>
#include <limits>

namespace kcflat {
namespace {

// Splits [begin, end) into `parts` contiguous runs whose sizes differ by at most one.
std::vector<std::size_t> quantile_bounds(std::size_t count, int parts) {
    std::vector<std::size_t> bounds(static_cast<std::size_t>(parts) + 1);
    for (int p = 0; p <= parts; ++p) bounds[static_cast<std::size_t>(p)] = count * static_cast<std::size_t>(p) / parts;
    return bounds;
}

Pixel nearest_to_centroid(const std::vector<Pixel>& pixels) {
    double cx = 0.0, cy = 0.0;
    for (const auto& p : pixels) {
        cx += p.x;
        cy += p.y;
    }
    cx /= static_cast<double>(pixels.size());
    cy /= static_cast<double>(pixels.size());
    Pixel best = pixels.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& p : pixels) {  // row-major order, so ties keep the first pixel
        const double d = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
        if (d < best_d) {
            best_d = d;
            best = p;
        }
    }
    return best;
}

}  // namespace

Segmentation segment_garment(const Mask& mask) {
    std::vector<Pixel> pixels;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y)) pixels.push_back({x, y});
        }
    }
    if (pixels.size() < static_cast<std::size_t>(kSegmentCount)) {
        throw DatasetError("mask has " + std::to_string(pixels.size()) + " pixels; at least " +
                           std::to_string(kSegmentCount) + " are needed to form grasp segments");
    }

    Segmentation seg;
    seg.width = mask.width;
    seg.height = mask.height;
    seg.labels.assign(mask.pixel_count(), -1);

    std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
    const std::size_t half = (pixels.size() + 1) / 2;
    std::vector<Pixel> columns[2] = {std::vector<Pixel>(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(half)),
                                     std::vector<Pixel>(pixels.begin() + static_cast<std::ptrdiff_t>(half), pixels.end())};
    constexpr int kRows = kSegmentCount / 2;
    for (int col = 0; col < 2; ++col) {
        auto& part = columns[col];
        std::sort(part.begin(), part.end(), [](const Pixel& a, const Pixel& b) {
            return a.y != b.y ? a.y < b.y : a.x < b.x;
        });
        const auto bounds = quantile_bounds(part.size(), kRows);
        for (int row = 0; row < kRows; ++row) {
            const int id = 2 * row + col;
            GraspSegment& s = seg.segments[static_cast<std::size_t>(id)];
            s.segment_id = id;
            s.pixels.assign(part.begin() + static_cast<std::ptrdiff_t>(bounds[static_cast<std::size_t>(row)]),
                            part.begin() + static_cast<std::ptrdiff_t>(bounds[static_cast<std::size_t>(row) + 1]));
            for (const auto& p : s.pixels) {
                seg.labels[static_cast<std::size_t>(p.y) * mask.width + p.x] = static_cast<std::int8_t>(id);
            }
        }
    }
    for (auto& s : seg.segments) {
        if (s.pixels.empty()) throw DatasetError("mask too small to form ten nonempty segments");
        s.grasp_point = nearest_to_centroid(s.pixels);
    }
    return seg;
}

}  // namespace kcflat
