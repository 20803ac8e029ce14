#include "kcflat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>

#include "kcflat/png_io.hpp"

namespace kcflat::synth {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(base);
    for (auto p : parts) h = mix(h ^ mix(p));
    return h;
}

double Silhouette::width() const {
    auto [lo, hi] = std::minmax_element(vertices.begin(), vertices.end(),
                                        [](const Vec2& a, const Vec2& b) { return a.x < b.x; });
    return vertices.empty() ? 0.0 : hi->x - lo->x;
}

double Silhouette::height() const {
    auto [lo, hi] = std::minmax_element(vertices.begin(), vertices.end(),
                                        [](const Vec2& a, const Vec2& b) { return a.y < b.y; });
    return vertices.empty() ? 0.0 : hi->y - lo->y;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct TopDims {
    double torso_width, torso_length, sleeve_length, sleeve_width, sleeve_angle_deg;
};

// Torso with two sleeves hanging at an angle from the shoulders; shoulders at y = 0.
std::vector<Vec2> top_outline(const TopDims& d) {
    const double a = d.sleeve_angle_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double tw = d.torso_width;
    const double armpit = d.sleeve_width / ca;
    const Vec2 r_top{tw + d.sleeve_length * ca, d.sleeve_length * sa};
    const Vec2 r_bot{r_top.x - d.sleeve_width * sa, r_top.y + d.sleeve_width * ca};
    std::vector<Vec2> v = {
        {0.0, 0.0},
        {tw, 0.0},
        r_top,
        r_bot,
        {tw, armpit},
        {tw, d.torso_length},
        {0.0, d.torso_length},
        {0.0, armpit},
        {-(r_bot.x - tw), r_bot.y},
        {-(r_top.x - tw), r_top.y},
    };
    const double shift = r_top.x - tw;
    for (auto& p : v) p.x += shift;
    return v;
}

}  // namespace

Silhouette generate_instance(GarmentCategory category, std::uint64_t instance_seed) {
    std::mt19937_64 rng(derive_seed(instance_seed, {static_cast<std::uint64_t>(category_index(category))}));
    auto j = [&](double nominal) { return nominal * uniform(rng, 0.9, 1.1); };
    Silhouette s;
    s.category = category;
    switch (category) {
        case GarmentCategory::towel: {
            const double w = j(0.60), h = j(0.40);
            s.vertices = {{0, 0}, {w, 0}, {w, h}, {0, h}};
            break;
        }
        case GarmentCategory::jean: {
            const double waist = j(0.42), length = j(1.00), rise = j(0.30), hem = j(0.15);
            const double taper = 0.02;
            s.vertices = {{0, 0},
                          {waist, 0},
                          {waist - taper, length},
                          {waist - taper - hem, length},
                          {waist / 2, rise},
                          {taper + hem, length},
                          {taper, length}};
            break;
        }
        case GarmentCategory::tshirt:
            s.vertices = top_outline({j(0.50), j(0.70), j(0.20), j(0.18), j(30.0)});
            break;
        case GarmentCategory::shirt:
            s.vertices = top_outline({j(0.52), j(0.78), j(0.58), j(0.20), j(55.0)});
            break;
        case GarmentCategory::sweater:
            s.vertices = top_outline({j(0.55), j(0.65), j(0.55), j(0.24), j(45.0)});
            break;
    }
    return s;
}

namespace {

bool inside(const std::vector<Vec2>& poly, double x, double y) {
    bool in = false;
    for (std::size_t i = 0, k = poly.size() - 1; i < poly.size(); k = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[k];
        if ((a.y > y) != (b.y > y)) {
            const double xi = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x < xi) in = !in;
        }
    }
    return in;
}

constexpr double kMargin = 0.04;

}  // namespace

FlatRaster rasterize(const Silhouette& silhouette, int resolution) {
    if (silhouette.vertices.size() < 3) throw DatasetError("silhouette needs at least three vertices");
    if (resolution < 8) throw DatasetError("raster resolution too small");
    double minx = std::numeric_limits<double>::infinity(), miny = minx;
    for (const auto& v : silhouette.vertices) {
        minx = std::min(minx, v.x);
        miny = std::min(miny, v.y);
    }
    const double w = silhouette.width(), h = silhouette.height();
    if (!(w > 0) || !(h > 0)) throw DatasetError("degenerate silhouette");
    FlatRaster r;
    r.meters_per_pixel = std::max(w, h) / (resolution * (1.0 - 2.0 * kMargin));
    const double x0 = minx - (resolution * r.meters_per_pixel - w) / 2.0;
    const double y0 = miny - (resolution * r.meters_per_pixel - h) / 2.0;
    r.mask = Mask(resolution, resolution);
    for (int py = 0; py < resolution; ++py) {
        for (int px = 0; px < resolution; ++px) {
            const double x = x0 + (px + 0.5) * r.meters_per_pixel;
            const double y = y0 + (py + 0.5) * r.meters_per_pixel;
            if (inside(silhouette.vertices, x, y)) r.mask.at(px, py) = 1;
        }
    }
    return r;
}

std::vector<int> geodesic_steps(const Mask& mask, Pixel source) {
    std::vector<int> dist(mask.pixel_count(), -1);
    if (source.x < 0 || source.y < 0 || source.x >= mask.width || source.y >= mask.height || !mask.at(source.x, source.y)) {
        throw DatasetError("geodesic source is not a mask pixel");
    }
    std::deque<Pixel> queue{source};
    dist[static_cast<std::size_t>(source.y) * mask.width + source.x] = 0;
    constexpr int dx[4] = {1, -1, 0, 0};
    constexpr int dy[4] = {0, 0, 1, -1};
    while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        const int d = dist[static_cast<std::size_t>(p.y) * mask.width + p.x];
        for (int k = 0; k < 4; ++k) {
            const int nx = p.x + dx[k], ny = p.y + dy[k];
            if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height || !mask.at(nx, ny)) continue;
            int& nd = dist[static_cast<std::size_t>(ny) * mask.width + nx];
            if (nd >= 0) continue;
            nd = d + 1;
            queue.push_back({nx, ny});
        }
    }
    return dist;
}

namespace {

struct HungPoint {
    double u;       // lateral offset, metres
    double drop;    // below the grasp, metres
    double z;       // distance from the camera, metres
    double half_u;  // half footprint width
    double fx, fy;  // flat material coordinates for texturing
};

std::array<double, 3> category_colour(GarmentCategory c) {
    switch (c) {
        case GarmentCategory::jean: return {0.25, 0.35, 0.60};
        case GarmentCategory::shirt: return {0.90, 0.90, 0.85};
        case GarmentCategory::sweater: return {0.55, 0.20, 0.20};
        case GarmentCategory::towel: return {0.95, 0.80, 0.40};
        case GarmentCategory::tshirt: return {0.30, 0.60, 0.35};
    }
    return {0.5, 0.5, 0.5};
}

}  // namespace

RenderedCapture render_hang(const Silhouette& silhouette, int segment_id, int resolution, double noise_mm,
                            std::uint64_t seed, const DrapeParams& params) {
    if (segment_id < 0 || segment_id >= kSegmentCount) {
        throw DatasetError("segment id out of range: " + std::to_string(segment_id));
    }
    const FlatRaster flat = rasterize(silhouette, resolution);
    const Segmentation seg = segment_garment(flat.mask);
    const GraspSegment& region = seg.segments[static_cast<std::size_t>(segment_id)];
    std::mt19937_64 rng(seed);

    // Grasp anywhere near the segment centre; the class is the segment, not the exact point.
    const double radius =
        params.grasp_jitter * std::sqrt(static_cast<double>(region.pixels.size()) / std::numbers::pi);
    std::vector<Pixel> candidates;
    for (const auto& p : region.pixels) {
        const double dx = p.x - region.grasp_point.x, dy = p.y - region.grasp_point.y;
        if (dx * dx + dy * dy <= radius * radius) candidates.push_back(p);
    }
    if (candidates.empty()) candidates.push_back(region.grasp_point);
    const Pixel grasp = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];

    const double mpp = flat.meters_per_pixel;
    const std::vector<int> steps = geodesic_steps(flat.mask, grasp);
    const int max_steps = *std::max_element(steps.begin(), steps.end());
    const double max_drop = max_steps * mpp;
    const double camera = params.camera_distance_m + uniform(rng, -params.camera_jitter_m, params.camera_jitter_m);
    const double sway = uniform(rng, -params.sway_deg, params.sway_deg) * std::numbers::pi / 180.0;
    const double fold_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double cs = std::cos(sway), sn = std::sin(sway);

    std::vector<HungPoint> points;
    std::size_t grasp_index = 0;
    for (int y = 0; y < flat.mask.height; ++y) {
        for (int x = 0; x < flat.mask.width; ++x) {
            const int g = steps[static_cast<std::size_t>(y) * flat.mask.width + x];
            if (g < 0) continue;
            const double drop = g * mpp;
            const double t = max_drop > 0 ? drop / max_drop : 0.0;
            const double contraction = 1.0 - (1.0 - params.min_contraction) * t;
            const double lateral = (x - grasp.x) * mpp;
            const double u = lateral * contraction;
            double z = camera + params.fold_amplitude_m * t *
                                    std::sin(2.0 * std::numbers::pi * lateral / params.fold_wavelength_m + fold_phase);
            if (y < grasp.y) z += params.back_layer_m;
            if (x == grasp.x && y == grasp.y) grasp_index = points.size();
            points.push_back({u * cs, drop, z + u * sn, 0.5 * mpp * contraction * std::abs(cs), x * mpp, y * mpp});
        }
    }

    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    for (const auto& p : points) {
        umin = std::min(umin, p.u - p.half_u);
        umax = std::max(umax, p.u + p.half_u);
    }
    const double extent_u = umax - umin;
    const double extent_d = max_drop + mpp;
    const double scale = resolution * (1.0 - 2.0 * kMargin) / std::max(extent_u, extent_d);
    const double x_off = resolution / 2.0 - (umin + umax) / 2.0 * scale;
    const double y_off = resolution * kMargin + 0.5 * mpp * scale;

    auto span = [&](double lo, double hi, double centre) {
        int a = static_cast<int>(std::ceil(lo - 0.5));
        int b = static_cast<int>(std::ceil(hi - 0.5)) - 1;
        if (b < a) a = b = static_cast<int>(std::floor(centre));
        return std::pair{std::clamp(a, 0, resolution - 1), std::clamp(b, 0, resolution - 1)};
    };

    const std::size_t npx = static_cast<std::size_t>(resolution) * resolution;
    std::vector<double> zbuf(npx, std::numeric_limits<double>::infinity());
    std::vector<std::int32_t> source(npx, -1);
    Pixel grasp_image{};
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const auto [x0, x1] = span(x_off + (p.u - p.half_u) * scale, x_off + (p.u + p.half_u) * scale, x_off + p.u * scale);
        const auto [y0, y1] = span(y_off + (p.drop - 0.5 * mpp) * scale, y_off + (p.drop + 0.5 * mpp) * scale,
                                   y_off + p.drop * scale);
        if (i == grasp_index) grasp_image = {(x0 + x1) / 2, y0};
        for (int yy = y0; yy <= y1; ++yy) {
            for (int xx = x0; xx <= x1; ++xx) {
                const std::size_t k = static_cast<std::size_t>(yy) * resolution + xx;
                if (p.z < zbuf[k]) {
                    zbuf[k] = p.z;
                    source[k] = static_cast<std::int32_t>(i);
                }
            }
        }
    }

    RenderedCapture out;
    out.grasp_flat = grasp;
    out.grasp_image = grasp_image;
    Capture& cap = out.capture;
    cap.label = ClassLabel(silhouette.category, segment_id);
    cap.instance = {silhouette.category, 0};
    cap.mask = Mask(resolution, resolution);
    cap.depth = DepthImage(resolution, resolution);
    std::normal_distribution<double> noise(0.0, noise_mm > 0 ? noise_mm : 1.0);
    for (std::size_t k = 0; k < npx; ++k) {
        if (source[k] < 0) continue;
        cap.mask.pixels[k] = 1;
        double mm = zbuf[k] * 1000.0;
        if (noise_mm > 0) mm += noise(rng);
        cap.depth.pixels[k] = static_cast<std::uint16_t>(std::clamp(std::lround(mm), 1L, 65535L));
    }

    // Flat-shaded colour: Lambert term from depth-gradient normals times a printed stripe pattern.
    std::array<double, 3> base = category_colour(silhouette.category);
    double light_x = -0.3, light_y = -0.4, stripe_angle = 0.0, stripe_period = 0.08, stripe_phase = 0.0;
    if (params.randomize_color) {
        for (auto& c : base) c = uniform(rng, 0.15, 1.0);
        light_x = uniform(rng, -0.7, 0.7);
        light_y = uniform(rng, -0.7, 0.3);
        stripe_angle = uniform(rng, 0.0, std::numbers::pi);
        stripe_period = uniform(rng, 0.04, 0.2);
        stripe_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    }
    const double ln = std::sqrt(light_x * light_x + light_y * light_y + 1.0);
    const double pixel_m = 1.0 / scale;
    RgbImage rgb(resolution, resolution, 3);
    auto z_at = [&](int x, int y, double fallback) {
        if (x < 0 || y < 0 || x >= resolution || y >= resolution) return fallback;
        const std::size_t k = static_cast<std::size_t>(y) * resolution + x;
        return source[k] >= 0 ? zbuf[k] : fallback;
    };
    for (int y = 0; y < resolution; ++y) {
        for (int x = 0; x < resolution; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * resolution + x;
            if (source[k] < 0) continue;
            const double z = zbuf[k];
            const double gx = (z_at(x + 1, y, z) - z_at(x - 1, y, z)) / (2.0 * pixel_m);
            const double gy = (z_at(x, y + 1, z) - z_at(x, y - 1, z)) / (2.0 * pixel_m);
            const double nn = std::sqrt(gx * gx + gy * gy + 1.0);
            const double lambert = std::max(0.0, (-gx * light_x - gy * light_y + 1.0) / (nn * ln));
            const auto& p = points[static_cast<std::size_t>(source[k])];
            const double along = p.fx * std::cos(stripe_angle) + p.fy * std::sin(stripe_angle);
            const double print = 0.8 + 0.2 * std::sin(2.0 * std::numbers::pi * along / stripe_period + stripe_phase);
            const double shade = (0.25 + 0.75 * lambert) * print;
            for (int c = 0; c < 3; ++c) {
                rgb.at(x, y, c) = static_cast<std::uint8_t>(
                    std::clamp(std::lround(255.0 * base[static_cast<std::size_t>(c)] * shade), 0L, 255L));
            }
        }
    }
    cap.rgb = std::move(rgb);
    return out;
}

void SyntheticSpec::validate() const {
    if (categories.empty()) throw ConfigError("synthetic spec needs at least one category");
    if (instances_per_category <= 0) throw ConfigError("instances_per_category must be positive");
    if (captures_per_position <= 0) throw ConfigError("captures_per_position must be positive");
    if (segments != kSegmentCount) throw ConfigError("segments must be " + std::to_string(kSegmentCount));
    if (resolution < 32) throw ConfigError("resolution must be at least 32");
    if (noise_mm < 0) throw ConfigError("noise_mm must be non-negative");
    if (!(max_depth_mm > 0)) throw ConfigError("max_depth_mm must be positive");
}

SyntheticSpec SyntheticSpec::from_config(const KeyValueConfig& cfg) {
    const auto unknown = cfg.unknown_keys(
        {"categories", "instances_per_category", "segments", "captures_per_position", "resolution", "noise_mm",
         "seed", "max_depth_mm", "dataset_name", "drape.min_contraction", "drape.camera_distance_m",
         "drape.camera_jitter_m", "drape.sway_deg", "drape.fold_amplitude_m", "drape.fold_wavelength_m",
         "drape.back_layer_m", "drape.grasp_jitter", "drape.randomize_color"});
    if (!unknown.empty()) throw ConfigError("unknown synthetic spec key '" + unknown.front() + "'");
    SyntheticSpec s;
    const auto names = cfg.get_string_list("categories", {});
    if (!names.empty()) {
        s.categories.clear();
        for (const auto& n : names) {
            auto c = parse_category(n);
            if (!c) throw ConfigError("unknown category in synthetic spec: " + n);
            s.categories.push_back(*c);
        }
    }
    s.instances_per_category = cfg.get_int("instances_per_category", s.instances_per_category);
    s.segments = cfg.get_int("segments", s.segments);
    s.captures_per_position = cfg.get_int("captures_per_position", s.captures_per_position);
    s.resolution = cfg.get_int("resolution", s.resolution);
    s.noise_mm = cfg.get_double("noise_mm", s.noise_mm);
    s.seed = static_cast<std::uint64_t>(cfg.get_int64("seed", static_cast<long long>(s.seed)));
    s.max_depth_mm = cfg.get_double("max_depth_mm", s.max_depth_mm);
    s.dataset_name = cfg.get_string("dataset_name", s.dataset_name);
    auto& d = s.drape;
    d.min_contraction = cfg.get_double("drape.min_contraction", d.min_contraction);
    d.camera_distance_m = cfg.get_double("drape.camera_distance_m", d.camera_distance_m);
    d.camera_jitter_m = cfg.get_double("drape.camera_jitter_m", d.camera_jitter_m);
    d.sway_deg = cfg.get_double("drape.sway_deg", d.sway_deg);
    d.fold_amplitude_m = cfg.get_double("drape.fold_amplitude_m", d.fold_amplitude_m);
    d.fold_wavelength_m = cfg.get_double("drape.fold_wavelength_m", d.fold_wavelength_m);
    d.back_layer_m = cfg.get_double("drape.back_layer_m", d.back_layer_m);
    d.grasp_jitter = cfg.get_double("drape.grasp_jitter", d.grasp_jitter);
    d.randomize_color = cfg.get_bool("drape.randomize_color", d.randomize_color);
    s.validate();
    return s;
}

DatasetManifest build_synthetic_dataset(const SyntheticSpec& spec, const fs::path& out_dir) {
    spec.validate();
    for (const char* sub : {"depth", "rgb", "mask"}) fs::create_directories(out_dir / sub);
    DatasetManifest m;
    m.root = out_dir;
    m.header = {spec.resolution, spec.max_depth_mm, spec.dataset_name};
    for (auto cat : spec.categories) {
        const auto ci = static_cast<std::uint64_t>(category_index(cat));
        for (int inst = 0; inst < spec.instances_per_category; ++inst) {
            const Silhouette sil = generate_instance(cat, derive_seed(spec.seed, {ci, static_cast<std::uint64_t>(inst)}));
            for (int s = 0; s < spec.segments; ++s) {
                for (int c = 0; c < spec.captures_per_position; ++c) {
                    const std::uint64_t seed = derive_seed(
                        spec.seed, {ci, static_cast<std::uint64_t>(inst), static_cast<std::uint64_t>(s),
                                    static_cast<std::uint64_t>(c), 0x72656e646572ULL});
                    RenderedCapture r = render_hang(sil, s, spec.resolution, spec.noise_mm, seed, spec.drape);
                    char stem[96];
                    std::snprintf(stem, sizeof stem, "%s_i%d_s%02d_c%03d.png", std::string(to_string(cat)).c_str(),
                                  inst, s, c);
                    ManifestEntry e;
                    e.depth_path = std::string("depth/") + stem;
                    e.rgb_path = std::string("rgb/") + stem;
                    e.mask_path = std::string("mask/") + stem;
                    e.category = cat;
                    e.instance_id = inst;
                    e.segment_id = s;
                    png::write_gray16(out_dir / e.depth_path, r.capture.depth);
                    png::write_rgb8(out_dir / e.rgb_path, *r.capture.rgb);
                    png::write_mask(out_dir / e.mask_path, r.capture.mask);
                    m.entries.push_back(std::move(e));
                }
            }
        }
    }
    m.recount();
    write_manifest(m, out_dir / kManifestFileName);
    return load_manifest(out_dir / kManifestFileName);
}

}  // namespace kcflat::synth
