#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kcflat/image.hpp"
#include "kcflat/types.hpp"

namespace kcflat {

// One observation of a hung garment.
struct Capture {
    ClassLabel label;
    GarmentInstance instance;
    DepthImage depth;             // millimetres, zero off-mask
    std::optional<RgbImage> rgb;  // three channels, zero off-mask
    Mask mask;
};

struct ManifestHeader {
    int resolution = 256;
    double max_depth_mm = 2000.0;
    std::string dataset_name;

    bool operator==(const ManifestHeader&) const = default;
};

// One manifest row. Paths are relative to the manifest directory. The integer label fields are
// kept as read so that validate_manifest can report out-of-range values instead of failing the load.
struct ManifestEntry {
    std::string depth_path;
    std::string rgb_path;  // may be empty for depth-only datasets
    std::string mask_path;
    GarmentCategory category = GarmentCategory::jean;
    int instance_id = 0;
    int segment_id = 0;

    GarmentInstance instance() const noexcept { return {category, instance_id}; }
    // Throws when segment_id is outside 0..9.
    ClassLabel label() const { return ClassLabel(category, segment_id); }

    bool operator==(const ManifestEntry&) const = default;
};

using PositionKey = std::pair<GarmentInstance, int>;  // (instance, segment)

struct DatasetManifest {
    std::filesystem::path root;  // directory holding the manifest file
    ManifestHeader header;
    std::vector<ManifestEntry> entries;
    std::map<PositionKey, int> counts;

    void recount();
    std::vector<GarmentInstance> instances() const;
    std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

inline constexpr const char* kManifestFileName = "manifest.jsonl";

// Accepts either the manifest file or the directory containing manifest.jsonl.
// Throws DatasetError for a missing manifest, unparseable rows and dangling file references.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes header + entries as JSON lines; the manifest root is the file's directory.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);

struct ManifestExpectations {
    std::optional<int> instances_per_category;  // 4 for the canonical capture protocol
    bool check_images = true;                   // decode PNG headers to verify resolution
};

// Reports resolution mismatches, invalid labels and count anomalies. Never throws for bad content.
ValidationReport validate_manifest(const DatasetManifest& manifest, const ManifestExpectations& expect = {});

Capture load_capture(const DatasetManifest& manifest, std::size_t entry_index, bool with_rgb);

// SHA-256 over the manifest rows and every referenced file's bytes, hex encoded.
std::string dataset_fingerprint(const DatasetManifest& manifest);

// Zeroes depth outside the mask. Throws ShapeError on extent mismatch and DatasetError on an empty mask.
DepthImage mask_depth(const DepthImage& depth, const Mask& mask);
RgbImage mask_rgb(const RgbImage& rgb, const Mask& mask);

// Channel-major float planes ready for the network.
struct ImageStack {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

struct Normalization {
    double max_depth_mm = 2000.0;
    // Per-channel statistics of the natural-image pretraining domain.
    std::array<float, 3> rgb_mean = {0.485f, 0.456f, 0.406f};
    std::array<float, 3> rgb_std = {0.229f, 0.224f, 0.225f};
};

// depth -> 1 plane in [0,1] (depth / max_depth, clamped); rgb -> 3 standardized planes;
// rgbd -> rgb planes followed by the depth plane.
ImageStack compose_modalities(const Capture& capture, Modality modality, const Normalization& norm);

}  // namespace kcflat
