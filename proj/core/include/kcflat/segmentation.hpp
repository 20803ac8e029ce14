#pragma once

#include <array>
#include <vector>

#include "kcflat/image.hpp"
#include "kcflat/types.hpp"

namespace kcflat {

struct GraspSegment {
    int segment_id = 0;
    std::vector<Pixel> pixels;  // row-major order
    Pixel grasp_point;          // region pixel nearest the region centroid
};

struct Segmentation {
    int width = 0;
    int height = 0;
    std::vector<std::int8_t> labels;  // segment id per pixel, -1 off-mask
    std::array<GraspSegment, kSegmentCount> segments;

    int label_at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

// Discretizes a garment mask into ten equal-area grasp segments laid out as five rows by two columns
// (segment id = 2 * row + column, so segment 0 holds the top-left of the garment). Pixels are first split
// into left/right halves at the column-order median, then each half into five bands at row-order
// quantiles. Region areas differ by at most one pixel. Throws DatasetError for masks with fewer than
// ten pixels.
Segmentation segment_garment(const Mask& mask);

}  // namespace kcflat
