#include <doctest.h>

#include <cmath>
#include <set>

#include "kcflat/dataset.hpp"
#include "kcflat/png_io.hpp"
#include "test_support.hpp"

using namespace kcflat;
using kcflat::testing::TempDir;

TEST_CASE("class labels map to flat indices 10*category + segment") {
    std::set<int> seen;
    for (auto c : kAllCategories) {
        for (int s = 0; s < kSegmentCount; ++s) {
            const ClassLabel l(c, s);
            CHECK(l.flat_index() == 10 * category_index(c) + s);
            CHECK(ClassLabel::from_flat(l.flat_index()) == l);
            seen.insert(l.flat_index());
        }
    }
    CHECK(seen.size() == 50);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 49);
    CHECK_THROWS(ClassLabel(GarmentCategory::towel, 10));
    CHECK_THROWS(ClassLabel(GarmentCategory::towel, -1));
    CHECK_THROWS(ClassLabel::from_flat(50));
}

TEST_CASE("category and modality names parse") {
    CHECK(parse_category("towel") == GarmentCategory::towel);
    CHECK(parse_category("jeans") == GarmentCategory::jean);
    CHECK_FALSE(parse_category("sock").has_value());
    CHECK(parse_modality("rgbd")->channel_count() == 4);
    CHECK(parse_modality("depth")->channel_count() == 1);
    CHECK(parse_modality("rgb")->channel_count() == 3);
    CHECK_FALSE(parse_modality("ir").has_value());
}

TEST_CASE("png round trips preserve samples") {
    TempDir dir("png");
    DepthImage d(7, 5);
    for (std::size_t i = 0; i < d.pixels.size(); ++i) d.pixels[i] = static_cast<std::uint16_t>(i * 1871 % 65536);
    png::write_gray16(dir / "d.png", d);
    CHECK(png::read_gray16(dir / "d.png") == d);
    const auto h = png::read_header(dir / "d.png");
    CHECK(h.width == 7);
    CHECK(h.height == 5);
    CHECK(h.bit_depth == 16);

    RgbImage rgb(4, 3, 3);
    for (std::size_t i = 0; i < rgb.pixels.size(); ++i) rgb.pixels[i] = static_cast<std::uint8_t>(i * 37);
    png::write_rgb8(dir / "c.png", rgb);
    CHECK(png::read_rgb8(dir / "c.png") == rgb);

    Mask m = kcflat::testing::box_mask(6, 6, 1, 1, 4, 5);
    png::write_mask(dir / "m.png", m);
    CHECK(png::read_mask(dir / "m.png") == m);

    CHECK_THROWS_AS(png::read_gray16(dir / "missing.png"), DatasetError);
    kcflat::testing::write_file(dir / "junk.png", "not a png at all");
    CHECK_THROWS_AS(png::read_gray16(dir / "junk.png"), DatasetError);
    CHECK_THROWS_AS(png::read_rgb8(dir / "d.png"), DatasetError);
}

TEST_CASE("manifest write/load round trip and validation of a clean dataset") {
    TempDir dir("manifest");
    const DatasetManifest m = kcflat::testing::write_box_dataset(dir.path(), 2, 32);
    CHECK(m.entries.size() == 100);
    CHECK(m.header.resolution == 32);
    CHECK(m.instances().size() == 10);
    const DatasetManifest again = load_manifest(dir.path());
    CHECK(again.entries == m.entries);
    CHECK(again.header == m.header);
    ManifestExpectations exp;
    exp.instances_per_category = 2;
    CHECK(validate_manifest(m, exp).ok());
    exp.instances_per_category = 4;
    CHECK(validate_manifest(m, exp).count("count") == 5);
}

TEST_CASE("validate_manifest reports bad labels, resolution mismatches and missing segments") {
    TempDir dir("bad");
    DatasetManifest m = kcflat::testing::write_box_dataset(dir.path(), 1, 32);

    SUBCASE("segment outside 0..9") {
        m.entries[3].segment_id = 12;
        m.recount();
        const auto r = validate_manifest(m);
        CHECK(r.count("label") == 1);
        CHECK(r.violations.front().index == 3);
    }
    SUBCASE("negative instance id") {
        m.entries[0].instance_id = -1;
        m.recount();
        CHECK(validate_manifest(m).count("label") == 1);
    }
    SUBCASE("one image at the wrong resolution") {
        png::write_gray16(m.resolve(m.entries[7].depth_path), DepthImage(16, 16));
        const auto r = validate_manifest(m);
        CHECK(r.count("resolution") == 1);
        CHECK(r.violations.front().index == 7);
        ManifestExpectations no_images;
        no_images.check_images = false;
        CHECK(validate_manifest(m, no_images).ok());
    }
    SUBCASE("a segment without captures") {
        m.entries.erase(m.entries.begin() + 4);
        m.recount();
        CHECK(validate_manifest(m).count("count") >= 1);
    }
}

TEST_CASE("load_manifest names the line of malformed rows") {
    TempDir dir("rows");
    kcflat::testing::write_box_dataset(dir.path(), 1, 32);
    std::ifstream in(dir / kManifestFileName);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    in.close();

    auto expect_error = [&](const std::string& body, const std::string& needle) {
        kcflat::testing::write_file(dir / "m2.jsonl", header + "\n" + first + "\n" + body + "\n");
        try {
            load_manifest(dir / "m2.jsonl");
            FAIL("expected DatasetError");
        } catch (const DatasetError& e) {
            const std::string what = e.what();
            CHECK_MESSAGE(what.find("line 3") != std::string::npos, what);
            CHECK_MESSAGE(what.find(needle) != std::string::npos, what);
        }
    };
    expect_error("{not json", "line 3");
    expect_error(R"({"depth_path":"depth/x.png","mask_path":"mask/x.png","category":"towel","instance_id":0})",
                 "segment_id");
    expect_error(R"({"depth_path":"depth/x.png","mask_path":"mask/x.png","category":"sock","instance_id":0,"segment_id":0})",
                 "sock");
    expect_error(R"({"depth_path":"depth/nope.png","mask_path":"mask/towel_0_0.png","category":"towel","instance_id":0,"segment_id":0})",
                 "nope.png");
    CHECK_THROWS_AS(load_manifest(dir / "absent.jsonl"), DatasetError);
    kcflat::testing::write_file(dir / "empty.jsonl", "");
    CHECK_THROWS_AS(load_manifest(dir / "empty.jsonl"), DatasetError);
}

TEST_CASE("masking zeroes off-mask pixels and rejects mismatched or empty masks") {
    DepthImage d(4, 4, 1, 1234);
    const Mask m = kcflat::testing::box_mask(4, 4, 1, 1, 3, 3);
    const DepthImage out = mask_depth(d, m);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(out.at(x, y) == (m.at(x, y) ? 1234 : 0));
    CHECK_THROWS_AS(mask_depth(d, Mask(3, 4)), ShapeError);
    CHECK_THROWS_AS(mask_depth(d, Mask(4, 4)), DatasetError);
    RgbImage rgb(4, 4, 3, 200);
    const RgbImage rgb_out = mask_rgb(rgb, m);
    CHECK(rgb_out.at(0, 0, 2) == 0);
    CHECK(rgb_out.at(1, 1, 2) == 200);
}

TEST_CASE("compose_modalities normalizes and orders channels") {
    Capture cap;
    cap.mask = kcflat::testing::box_mask(3, 2, 0, 0, 2, 2);
    cap.depth = DepthImage(3, 2);
    cap.depth.at(0, 0) = 1000;
    cap.depth.at(1, 0) = 3000;  // beyond max depth: clamps to 1
    cap.depth.at(0, 1) = 500;
    cap.depth.at(1, 1) = 1;
    cap.rgb = RgbImage(3, 2, 3);
    cap.rgb->at(0, 0, 0) = 255;
    cap.rgb->at(0, 0, 1) = 0;
    cap.rgb->at(0, 0, 2) = 51;
    Normalization norm;

    const ImageStack d = compose_modalities(cap, Modality{ModalityKind::depth}, norm);
    CHECK(d.channels == 1);
    CHECK(d.at(0, 0, 0) == doctest::Approx(0.5));
    CHECK(d.at(0, 0, 1) == doctest::Approx(1.0));
    CHECK(d.at(0, 1, 0) == doctest::Approx(0.25));
    CHECK(d.at(0, 0, 2) == 0.0f);

    const ImageStack rgb = compose_modalities(cap, Modality{ModalityKind::rgb}, norm);
    CHECK(rgb.channels == 3);
    CHECK(rgb.at(0, 0, 0) == doctest::Approx((1.0 - 0.485) / 0.229).epsilon(1e-5));
    CHECK(rgb.at(1, 0, 0) == doctest::Approx((0.0 - 0.456) / 0.224).epsilon(1e-5));
    CHECK(rgb.at(2, 0, 0) == doctest::Approx((0.2 - 0.406) / 0.225).epsilon(1e-5));

    const ImageStack rgbd = compose_modalities(cap, Modality{ModalityKind::rgbd}, norm);
    CHECK(rgbd.channels == 4);
    for (int c = 0; c < 3; ++c) CHECK(rgbd.at(c, 0, 0) == rgb.at(c, 0, 0));
    CHECK(rgbd.at(3, 0, 0) == d.at(0, 0, 0));

    Capture no_rgb = cap;
    no_rgb.rgb.reset();
    CHECK_THROWS_AS(compose_modalities(no_rgb, Modality{ModalityKind::rgb}, norm), DatasetError);
    Normalization bad;
    bad.max_depth_mm = 0;
    CHECK_THROWS_AS(compose_modalities(cap, Modality{ModalityKind::depth}, bad), ConfigError);
}

TEST_CASE("fingerprint is stable and sensitive to image bytes") {
    TempDir dir("fp");
    const DatasetManifest m = kcflat::testing::write_box_dataset(dir.path(), 1, 32, false);
    const std::string a = dataset_fingerprint(m);
    CHECK(a.size() == 64);
    CHECK(dataset_fingerprint(load_manifest(dir.path())) == a);
    DepthImage d = png::read_gray16(m.resolve(m.entries[5].depth_path));
    d.pixels[100] ^= 1;
    png::write_gray16(m.resolve(m.entries[5].depth_path), d);
    CHECK(dataset_fingerprint(m) != a);
}

TEST_CASE("load_capture applies the mask to depth") {
    TempDir dir("cap");
    const DatasetManifest m = kcflat::testing::write_box_dataset(dir.path(), 1, 32);
    const Capture c = load_capture(m, 13, true);
    CHECK(c.label == m.entries[13].label());
    CHECK(c.instance == m.entries[13].instance());
    REQUIRE(c.rgb.has_value());
    for (std::size_t i = 0; i < c.depth.pixels.size(); ++i) {
        if (!c.mask.pixels[i]) CHECK(c.depth.pixels[i] == 0);
    }
    CHECK_THROWS_AS(load_capture(m, 1000, false), DatasetError);
}
