#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kcflat/config.hpp"
#include "kcflat/dataset.hpp"
#include "kcflat/segmentation.hpp"

namespace kcflat::synth {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;  // grows downward in the flat garment layout
    bool operator==(const Vec2&) const = default;
};

// Flat garment outline in metres.
struct Silhouette {
    GarmentCategory category = GarmentCategory::towel;
    std::vector<Vec2> vertices;

    double width() const;
    double height() const;
    bool operator==(const Silhouette&) const = default;
};

// Category archetype (towel: rectangle; jean: two legs; tshirt/shirt/sweater: torso with sleeves)
// with each dimension jittered by up to +-10% from the seed.
Silhouette generate_instance(GarmentCategory category, std::uint64_t instance_seed);

struct FlatRaster {
    Mask mask;
    double meters_per_pixel = 0.0;
};

// Fits the silhouette into a square raster with a small margin. Pixel centres inside the polygon
// (even-odd rule) are set.
FlatRaster rasterize(const Silhouette& silhouette, int resolution);

// Breadth-first wavefront over the 4-connected mask; -1 for unreachable pixels.
std::vector<int> geodesic_steps(const Mask& mask, Pixel source);

struct DrapeParams {
    double min_contraction = 0.4;     // lateral scale at the deepest point of the hang
    double camera_distance_m = 1.2;
    double camera_jitter_m = 0.03;    // per-capture distance jitter
    double sway_deg = 5.0;            // per-capture rotation about the vertical axis
    double fold_amplitude_m = 0.05;   // depth relief of gravity folds at full contraction
    double fold_wavelength_m = 0.15;
    double back_layer_m = 0.04;       // material above the grasp folds behind the front layer
    double grasp_jitter = 0.2;        // fraction of the segment radius the grasp may move from its centre
    bool randomize_color = true;      // per-capture colour, print and light; decorrelates RGB from the label
};

struct RenderedCapture {
    Capture capture;
    Pixel grasp_flat;   // grasp location in the flat raster
    Pixel grasp_image;  // where the grasp ended up in the rendered view
};

// Renders the garment as it hangs from a grasp inside `segment_id`: drop equals geodesic distance from
// the grasp, lateral offsets contract with depth, the camera looks at it frontally. Depths are in
// millimetres with additive Gaussian noise; off-mask pixels are zero. Throws DatasetError for degenerate
// silhouettes.
RenderedCapture render_hang(const Silhouette& silhouette, int segment_id, int resolution, double noise_mm,
                            std::uint64_t seed, const DrapeParams& params = {});

struct SyntheticSpec {
    std::vector<GarmentCategory> categories{kAllCategories.begin(), kAllCategories.end()};
    int instances_per_category = 4;
    int segments = kSegmentCount;
    int captures_per_position = 20;
    int resolution = 64;
    double noise_mm = 3.0;
    std::uint64_t seed = 0;
    double max_depth_mm = 2000.0;
    std::string dataset_name = "synthetic";
    DrapeParams drape;

    // Throws ConfigError on non-positive counts, resolution below 32 or segments other than ten.
    void validate() const;
    static SyntheticSpec from_config(const KeyValueConfig& cfg);
};

// Writes depth/rgb/mask PNGs and manifest.jsonl under out_dir and returns the loaded manifest.
DatasetManifest build_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// Deterministic seed derivation (splitmix64 over the parts).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

}  // namespace kcflat::synth
