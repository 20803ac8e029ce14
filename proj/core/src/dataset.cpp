#include "kcflat/dataset.hpp"

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "kcflat/png_io.hpp"

namespace kcflat {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetManifest::recount() {
    counts.clear();
    for (const auto& e : entries) ++counts[{e.instance(), e.segment_id}];
}

std::vector<GarmentInstance> DatasetManifest::instances() const {
    std::set<GarmentInstance> seen;
    for (const auto& e : entries) seen.insert(e.instance());
    return {seen.begin(), seen.end()};
}

namespace {

template <typename V>
V required(const json& row, const char* key, std::size_t line) {
    auto it = row.find(key);
    if (it == row.end()) {
        throw DatasetError("manifest line " + std::to_string(line) + ": missing field '" + key + "'");
    }
    try {
        return it->get<V>();
    } catch (const json::exception&) {
        throw DatasetError("manifest line " + std::to_string(line) + ": field '" + key + "' has the wrong type");
    }
}

fs::path manifest_file_for(const fs::path& path) {
    if (fs::is_directory(path)) return path / kManifestFileName;
    return path;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
    const fs::path file = manifest_file_for(path);
    std::ifstream in(file);
    if (!in) throw DatasetError("manifest not found: " + file.string());

    DatasetManifest m;
    m.root = file.parent_path();
    std::string text;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json row;
        try {
            row = json::parse(text);
        } catch (const json::parse_error& e) {
            throw DatasetError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!row.is_object()) throw DatasetError("manifest line " + std::to_string(line_no) + ": not an object");
        if (!have_header) {
            if (!row.contains("resolution")) {
                throw DatasetError("manifest line 1 must be the header record {resolution, max_depth_mm, dataset_name}");
            }
            m.header.resolution = required<int>(row, "resolution", line_no);
            m.header.max_depth_mm = required<double>(row, "max_depth_mm", line_no);
            m.header.dataset_name = row.value("dataset_name", std::string{});
            have_header = true;
            continue;
        }
        ManifestEntry e;
        e.depth_path = required<std::string>(row, "depth_path", line_no);
        e.rgb_path = row.value("rgb_path", std::string{});
        e.mask_path = required<std::string>(row, "mask_path", line_no);
        const auto cat_name = required<std::string>(row, "category", line_no);
        const auto cat = parse_category(cat_name);
        if (!cat) throw DatasetError("manifest line " + std::to_string(line_no) + ": unknown category '" + cat_name + "'");
        e.category = *cat;
        e.instance_id = required<int>(row, "instance_id", line_no);
        e.segment_id = required<int>(row, "segment_id", line_no);
        for (const std::string* p : {&e.depth_path, &e.rgb_path, &e.mask_path}) {
            if (p->empty()) continue;
            if (!fs::exists(m.resolve(*p))) {
                throw DatasetError("manifest line " + std::to_string(line_no) + ": missing image file " +
                                   m.resolve(*p).string());
            }
        }
        m.entries.push_back(std::move(e));
    }
    if (!have_header) throw DatasetError("manifest is empty: " + file.string());
    m.recount();
    return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw DatasetError("cannot write manifest: " + file.string());
    json header = {{"resolution", manifest.header.resolution},
                   {"max_depth_mm", manifest.header.max_depth_mm},
                   {"dataset_name", manifest.header.dataset_name}};
    out << header.dump() << '\n';
    for (const auto& e : manifest.entries) {
        json row = {{"depth_path", e.depth_path},
                    {"rgb_path", e.rgb_path},
                    {"mask_path", e.mask_path},
                    {"category", std::string(to_string(e.category))},
                    {"instance_id", e.instance_id},
                    {"segment_id", e.segment_id}};
        out << row.dump() << '\n';
    }
    if (!out) throw DatasetError("write failed: " + file.string());
}

ValidationReport validate_manifest(const DatasetManifest& manifest, const ManifestExpectations& expect) {
    ValidationReport report;
    const int res = manifest.header.resolution;
    if (res <= 0) report.add("header", "resolution must be positive");
    if (!(manifest.header.max_depth_mm > 0)) report.add("header", "max_depth_mm must be positive");
    if (manifest.entries.empty()) report.add("count", "manifest has no entries");

    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        const int row = static_cast<int>(i);
        if (e.segment_id < 0 || e.segment_id >= kSegmentCount) {
            report.add("label", "entry " + std::to_string(i) + ": segment_id " + std::to_string(e.segment_id) +
                                    " outside 0.." + std::to_string(kSegmentCount - 1), row);
        }
        if (e.instance_id < 0) {
            report.add("label", "entry " + std::to_string(i) + ": negative instance_id", row);
        }
        if (!expect.check_images) continue;
        std::string bad;
        for (const std::string* p : {&e.depth_path, &e.rgb_path, &e.mask_path}) {
            if (p->empty()) continue;
            try {
                const auto h = png::read_header(manifest.resolve(*p));
                if (h.width != res || h.height != res) {
                    bad = *p + " is " + std::to_string(h.width) + "x" + std::to_string(h.height);
                    break;
                }
            } catch (const DatasetError& err) {
                bad = err.what();
                break;
            }
        }
        if (!bad.empty()) {
            report.add("resolution", "entry " + std::to_string(i) + ": " + bad + ", dataset declares " +
                                         std::to_string(res) + "x" + std::to_string(res), row);
        }
    }

    // Every instance should have every segment, and categories should have equal instance counts.
    std::map<GarmentCategory, std::set<int>> instances;
    for (const auto& [key, n] : manifest.counts) instances[key.first.category].insert(key.first.instance_id);
    for (auto cat : kAllCategories) {
        if (!instances.contains(cat)) {
            report.add("count", "category " + std::string(to_string(cat)) + " has no captures");
            continue;
        }
        const int n = static_cast<int>(instances[cat].size());
        if (expect.instances_per_category && n != *expect.instances_per_category) {
            report.add("count", "category " + std::string(to_string(cat)) + " has " + std::to_string(n) +
                                    " instances, expected " + std::to_string(*expect.instances_per_category));
        }
        for (int id : instances[cat]) {
            for (int s = 0; s < kSegmentCount; ++s) {
                auto it = manifest.counts.find({GarmentInstance{cat, id}, s});
                if (it == manifest.counts.end() || it->second <= 0) {
                    report.add("count", to_string(GarmentInstance{cat, id}) + " has no captures for segment " +
                                            std::to_string(s));
                }
            }
        }
    }
    if (!expect.instances_per_category && instances.size() == static_cast<std::size_t>(kCategoryCount)) {
        std::set<std::size_t> sizes;
        for (const auto& [cat, ids] : instances) sizes.insert(ids.size());
        if (sizes.size() > 1) report.add("count", "categories have unequal instance counts");
    }
    return report;
}

Capture load_capture(const DatasetManifest& manifest, std::size_t entry_index, bool with_rgb) {
    if (entry_index >= manifest.entries.size()) throw DatasetError("entry index out of range");
    const auto& e = manifest.entries[entry_index];
    Capture c;
    c.label = e.label();
    c.instance = e.instance();
    c.depth = png::read_gray16(manifest.resolve(e.depth_path));
    c.mask = png::read_mask(manifest.resolve(e.mask_path));
    if (with_rgb) {
        if (e.rgb_path.empty()) throw DatasetError("entry " + std::to_string(entry_index) + " has no rgb image");
        c.rgb = png::read_rgb8(manifest.resolve(e.rgb_path));
    }
    return c;
}

namespace {

struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* c) const noexcept { EVP_MD_CTX_free(c); }
};

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    }
    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
    void update(const std::string& s) { update(s.data(), s.size()); }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_.get(), md, &len);
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out += digits[md[i] >> 4];
            out += digits[md[i] & 15];
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

}  // namespace

std::string dataset_fingerprint(const DatasetManifest& manifest) {
    Sha256 sha;
    std::ostringstream head;
    head << manifest.header.resolution << '|' << manifest.header.max_depth_mm << '|' << manifest.header.dataset_name;
    sha.update(head.str());
    std::vector<char> buf(1 << 16);
    for (const auto& e : manifest.entries) {
        sha.update(std::string(to_string(e.category)) + '|' + std::to_string(e.instance_id) + '|' +
                   std::to_string(e.segment_id));
        for (const std::string* p : {&e.depth_path, &e.rgb_path, &e.mask_path}) {
            sha.update(*p);
            if (p->empty()) continue;
            std::ifstream in(manifest.resolve(*p), std::ios::binary);
            if (!in) throw DatasetError("cannot read " + manifest.resolve(*p).string());
            while (in) {
                in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
                sha.update(buf.data(), static_cast<std::size_t>(in.gcount()));
            }
        }
    }
    return sha.hex();
}

namespace {

std::size_t checked_mask_pixels(const Mask& mask, int w, int h) {
    if (!mask.same_extent(w, h)) {
        throw ShapeError("mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                         ", image is " + std::to_string(w) + "x" + std::to_string(h));
    }
    const auto on = static_cast<std::size_t>(std::count_if(mask.pixels.begin(), mask.pixels.end(),
                                                           [](std::uint8_t v) { return v != 0; }));
    if (on == 0) throw DatasetError("mask has no garment pixels");
    return on;
}

}  // namespace

DepthImage mask_depth(const DepthImage& depth, const Mask& mask) {
    checked_mask_pixels(mask, depth.width, depth.height);
    DepthImage out = depth;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        if (!mask.pixels[i]) out.pixels[i] = 0;
    }
    return out;
}

RgbImage mask_rgb(const RgbImage& rgb, const Mask& mask) {
    checked_mask_pixels(mask, rgb.width, rgb.height);
    RgbImage out = rgb;
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
        if (mask.pixels[i]) continue;
        for (int c = 0; c < out.channels; ++c) out.pixels[i * static_cast<std::size_t>(out.channels) + c] = 0;
    }
    return out;
}

ImageStack compose_modalities(const Capture& capture, Modality modality, const Normalization& norm) {
    const int w = capture.depth.empty() ? (capture.rgb ? capture.rgb->width : 0) : capture.depth.width;
    const int h = capture.depth.empty() ? (capture.rgb ? capture.rgb->height : 0) : capture.depth.height;
    if (modality.needs_depth() && capture.depth.empty()) {
        throw DatasetError("modality " + std::string(to_string(modality)) + " needs a depth image");
    }
    if (modality.needs_rgb() && (!capture.rgb || capture.rgb->empty())) {
        throw DatasetError("modality " + std::string(to_string(modality)) + " needs an rgb image");
    }
    if (modality.needs_rgb() && !capture.rgb->same_extent(w, h)) throw ShapeError("rgb and depth extents differ");
    if (!(norm.max_depth_mm > 0)) throw ConfigError("max_depth_mm must be positive");

    ImageStack s;
    s.channels = modality.channel_count();
    s.width = w;
    s.height = h;
    s.values.resize(static_cast<std::size_t>(s.channels) * w * h);
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    int next = 0;
    if (modality.needs_rgb()) {
        const auto& rgb = *capture.rgb;
        for (int c = 0; c < 3; ++c) {
            float* dst = s.values.data() + plane * static_cast<std::size_t>(next++);
            const float mean = norm.rgb_mean[static_cast<std::size_t>(c)];
            const float inv_std = 1.0f / norm.rgb_std[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < plane; ++i) {
                dst[i] = (static_cast<float>(rgb.pixels[i * 3 + static_cast<std::size_t>(c)]) / 255.0f - mean) * inv_std;
            }
        }
    }
    if (modality.needs_depth()) {
        float* dst = s.values.data() + plane * static_cast<std::size_t>(next++);
        const double scale = 1.0 / norm.max_depth_mm;
        for (std::size_t i = 0; i < plane; ++i) {
            dst[i] = static_cast<float>(std::clamp(capture.depth.pixels[i] * scale, 0.0, 1.0));
        }
    }
    return s;
}

}  // namespace kcflat
