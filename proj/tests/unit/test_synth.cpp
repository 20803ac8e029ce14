#include <doctest.h>

#include <cmath>
#include <deque>

#include "kcflat/eval.hpp"
#include "kcflat/synth.hpp"
#include "test_support.hpp"

using namespace kcflat;
using namespace kcflat::synth;
using kcflat::testing::TempDir;

namespace {

double mean_abs_diff(const DepthImage& a, const DepthImage& b) {
    double s = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) s += std::abs(static_cast<double>(a.at(x, y)) - b.at(x, y));
    return s / (static_cast<double>(a.width) * a.height);
}

// Independent 4-connected BFS.
std::vector<int> bfs_oracle(const Mask& m, Pixel src) {
    std::vector<int> d(static_cast<std::size_t>(m.width) * m.height, -1);
    std::deque<Pixel> q{src};
    d[static_cast<std::size_t>(src.y) * m.width + src.x] = 0;
    while (!q.empty()) {
        const Pixel p = q.front();
        q.pop_front();
        const int dp = d[static_cast<std::size_t>(p.y) * m.width + p.x];
        const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            const int x = p.x + dx[k], y = p.y + dy[k];
            if (x < 0 || y < 0 || x >= m.width || y >= m.height || !m.at(x, y)) continue;
            auto& v = d[static_cast<std::size_t>(y) * m.width + x];
            if (v < 0) {
                v = dp + 1;
                q.push_back({x, y});
            }
        }
    }
    return d;
}

int min_mask_row(const Mask& m) {
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) return y;
    return -1;
}

}  // namespace

TEST_CASE("instance archetypes") {
    CHECK(generate_instance(GarmentCategory::towel, 0).vertices.size() == 4);
    CHECK(generate_instance(GarmentCategory::towel, 12345).vertices.size() == 4);
    CHECK(generate_instance(GarmentCategory::jean, 1).vertices.size() == 7);
    for (auto c : {GarmentCategory::tshirt, GarmentCategory::shirt, GarmentCategory::sweater}) {
        const auto s = generate_instance(c, 2);
        CHECK(s.vertices.size() == 10);
        CHECK(s.category == c);
    }
}

TEST_CASE("instances are deterministic per seed and vary across seeds") {
    for (auto c : kAllCategories) {
        CHECK(generate_instance(c, 77) == generate_instance(c, 77));
        int differing = 0;
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto a = generate_instance(c, s), b = generate_instance(c, s + 1000);
            const double dw = std::abs(a.width() - b.width()) / a.width();
            const double dh = std::abs(a.height() - b.height()) / a.height();
            differing += (dw > 0.01 || dh > 0.01);
        }
        CHECK(differing >= 18);
    }
}

TEST_CASE("geodesic steps agree with a breadth-first oracle") {
    std::mt19937_64 rng(5);
    for (auto c : kAllCategories) {
        const FlatRaster r = rasterize(generate_instance(c, rng()), 40);
        std::vector<Pixel> on;
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x)
                if (r.mask.at(x, y)) on.push_back({x, y});
        REQUIRE(on.size() > 100);
        for (int t = 0; t < 5; ++t) {
            const Pixel src = on[rng() % on.size()];
            CHECK(geodesic_steps(r.mask, src) == bfs_oracle(r.mask, src));
        }
    }
    // Two disconnected boxes: the far box is unreachable.
    Mask m = kcflat::testing::box_mask(10, 10, 0, 0, 3, 3);
    m.at(8, 8) = 1;
    const auto d = geodesic_steps(m, {0, 0});
    CHECK(d[8 * 10 + 8] == -1);
    CHECK(d[2 * 10 + 2] == 4);
    CHECK_THROWS(geodesic_steps(m, {5, 5}));
}

TEST_CASE("noise-free rendering is bitwise deterministic") {
    const Silhouette s = generate_instance(GarmentCategory::shirt, 3);
    const auto a = render_hang(s, 4, 64, 0.0, 99);
    const auto b = render_hang(s, 4, 64, 0.0, 99);
    CHECK(a.capture.depth == b.capture.depth);
    CHECK(a.capture.mask == b.capture.mask);
    CHECK(*a.capture.rgb == *b.capture.rgb);
    const auto c = render_hang(s, 4, 64, 3.0, 99);
    const auto d = render_hang(s, 4, 64, 3.0, 99);
    CHECK(c.capture.depth == d.capture.depth);
}

TEST_CASE("rendered captures keep the capture contract") {
    std::mt19937_64 rng(1);
    for (auto c : kAllCategories) {
        const Silhouette s = generate_instance(c, rng());
        for (int seg = 0; seg < kSegmentCount; ++seg) {
            const auto r = render_hang(s, seg, 48, 3.0, rng());
            const Capture& cap = r.capture;
            CHECK(cap.label == ClassLabel(c, seg));
            REQUIRE(cap.rgb.has_value());
            long on = 0;
            for (int y = 0; y < 48; ++y)
                for (int x = 0; x < 48; ++x) {
                    if (!cap.mask.at(x, y)) {
                        CHECK(cap.depth.at(x, y) == 0);
                        for (int k = 0; k < 3; ++k) CHECK(cap.rgb->at(x, y, k) == 0);
                    } else {
                        ++on;
                        CHECK(cap.depth.at(x, y) > 0);
                    }
                }
            CHECK(on > 50);
            // Gravity: the grasp is the highest point of the hung garment.
            CHECK(r.grasp_image.y == min_mask_row(cap.mask));
            CHECK(cap.mask.at(r.grasp_image.x, r.grasp_image.y));
            // Label fidelity: the flat grasp lies in the requested segment.
            const Segmentation sg = segment_garment(rasterize(s, 48).mask);
            CHECK(sg.label_at(r.grasp_flat.x, r.grasp_flat.y) == seg);
        }
    }
}

TEST_CASE("hung vertical extent stays within the geodesic diameter") {
    for (auto c : kAllCategories) {
        const Silhouette s = generate_instance(c, 8);
        const FlatRaster flat = rasterize(s, 32);
        int diameter = 0;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                if (flat.mask.at(x, y)) {
                    const auto d = bfs_oracle(flat.mask, {x, y});
                    diameter = std::max(diameter, *std::max_element(d.begin(), d.end()));
                }
        for (int seg = 0; seg < kSegmentCount; ++seg) {
            const auto r = render_hang(s, seg, 32, 0.0, 5);
            const auto d = geodesic_steps(flat.mask, r.grasp_flat);
            CHECK(*std::max_element(d.begin(), d.end()) <= diameter);
        }
    }
}

TEST_CASE("opposite-corner grasps differ far more than repeated grasps") {
    for (auto c : kAllCategories) {
        const Silhouette s = generate_instance(c, 21);
        double inter = 0, intra = 0;
        const int pairs = 8;
        for (int i = 0; i < pairs; ++i) {
            const auto a = render_hang(s, 0, 64, 3.0, 100 + i);
            const auto b = render_hang(s, 0, 64, 3.0, 200 + i);
            const auto z = render_hang(s, 9, 64, 3.0, 300 + i);
            intra += mean_abs_diff(a.capture.depth, b.capture.depth);
            inter += mean_abs_diff(a.capture.depth, z.capture.depth);
        }
        MESSAGE(to_string(c), " inter ", inter / pairs, " intra ", intra / pairs);
        CHECK(inter > 5.0 * intra);
    }
}

TEST_CASE("segments are separable on average within every category") {
    for (auto c : kAllCategories) {
        const Silhouette s = generate_instance(c, 4);
        std::vector<std::vector<DepthImage>> renders(kSegmentCount);
        for (int seg = 0; seg < kSegmentCount; ++seg)
            for (int k = 0; k < 3; ++k) renders[seg].push_back(render_hang(s, seg, 48, 3.0, 1000 * seg + k).capture.depth);
        double inter = 0, intra = 0;
        long ni = 0, nj = 0;
        for (int a = 0; a < kSegmentCount; ++a)
            for (int b = a; b < kSegmentCount; ++b)
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) {
                        if (a == b && j <= i) continue;
                        const double d = mean_abs_diff(renders[a][i], renders[b][j]);
                        if (a == b) intra += d, ++ni;
                        else inter += d, ++nj;
                    }
        CHECK(inter / nj > intra / ni);
    }
}

TEST_CASE("degenerate inputs") {
    Silhouette flat{GarmentCategory::towel, {{0, 0}, {1, 0}, {2, 0}}};
    CHECK_THROWS_AS(render_hang(flat, 0, 32, 0.0, 1), DatasetError);
    CHECK_THROWS_AS(render_hang(generate_instance(GarmentCategory::towel, 1), 10, 32, 0.0, 1), DatasetError);
}

TEST_CASE("synthetic spec validation and configuration") {
    SyntheticSpec s;
    CHECK_NOTHROW(s.validate());
    s.resolution = 16;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.segments = 9;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.instances_per_category = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.categories.clear();
    CHECK_THROWS_AS(s.validate(), ConfigError);

    const auto cfg = KeyValueConfig::parse(
        "categories = towel, jean\ninstances_per_category = 2\ncaptures_per_position = 3\nresolution = 32\n"
        "seed = 9\nnoise_mm = 1.5\n[drape]\nrandomize_color = false\n");
    const SyntheticSpec p = SyntheticSpec::from_config(cfg);
    CHECK(p.categories == std::vector<GarmentCategory>{GarmentCategory::towel, GarmentCategory::jean});
    CHECK(p.captures_per_position == 3);
    CHECK(p.seed == 9);
    CHECK(p.noise_mm == 1.5);
    CHECK_FALSE(p.drape.randomize_color);
    CHECK_THROWS_AS(SyntheticSpec::from_config(KeyValueConfig::parse("colour = red\n")), ConfigError);
    CHECK_THROWS_AS(SyntheticSpec::from_config(KeyValueConfig::parse("categories = hat\n")), ConfigError);
}

TEST_CASE("small synthetic datasets: counts, validation, replay and folds") {
    SyntheticSpec spec;
    spec.instances_per_category = 4;
    spec.captures_per_position = 2;
    spec.resolution = 32;
    spec.seed = 3;
    TempDir a("syn_a"), b("syn_b");
    const DatasetManifest m = build_synthetic_dataset(spec, a.path());
    CHECK(m.entries.size() == 5u * 4 * 10 * 2);
    ManifestExpectations expect;
    expect.instances_per_category = 4;
    CHECK(validate_manifest(m, expect).ok());
    for (const auto& [key, count] : m.counts) CHECK(count == 2);
    for (const auto& e : m.entries) {
        CHECK_FALSE(e.rgb_path.empty());
        const std::string tag = std::string(to_string(e.category)) + "_i" + std::to_string(e.instance_id) + "_s";
        CHECK(e.depth_path.find(tag) != std::string::npos);
    }
    const auto folds = make_folds(m, 4);
    CHECK(folds.size() == 4);
    CHECK(verify_folds(folds).ok());

    const DatasetManifest again = build_synthetic_dataset(spec, b.path());
    CHECK(dataset_fingerprint(again) == dataset_fingerprint(m));
    spec.seed = 4;
    TempDir c("syn_c");
    CHECK(dataset_fingerprint(build_synthetic_dataset(spec, c.path())) != dataset_fingerprint(m));

    // Captures load back with the rendered label.
    const Capture cap = load_capture(m, 17, true);
    CHECK(cap.label == m.entries[17].label());
    CHECK(cap.depth.width == 32);
}

TEST_CASE("seed derivation") {
    CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
}
