#include <doctest.h>

#include <nlohmann/json.hpp>

#include "kcflat/pipeline.hpp"
#include "kcflat/synth.hpp"
#include "test_support.hpp"

using namespace kcflat;
using kcflat::testing::TempDir;

namespace {

KCNet<float> tiny_net(int resolution = 32) {
    KCNetConfig c;
    c.backbone = Backbone::tiny;
    c.base_width = 4;
    c.input_resolution = resolution;
    KCNet<float> net(c);
    net.initialize(1);
    return net;
}

Capture towel_capture(int resolution = 32) {
    return synth::render_hang(synth::generate_instance(GarmentCategory::towel, 2), 3, resolution, 3.0, 7).capture;
}

}  // namespace

TEST_CASE("capture files round trip") {
    TempDir dir("cap");
    const Capture c = towel_capture();
    write_capture_file(c, dir / "scene" / "capture.json");
    const Capture back = load_capture_file(dir / "scene" / "capture.json");
    CHECK(back.depth == c.depth);
    CHECK(back.mask == c.mask);
    REQUIRE(back.rgb.has_value());
    CHECK(*back.rgb == *c.rgb);

    kcflat::testing::write_file(dir / "depth_only.json", R"({"depth": "scene/capture_depth.png", "mask": "scene/capture_mask.png"})");
    CHECK_FALSE(load_capture_file(dir / "depth_only.json").rgb.has_value());
    kcflat::testing::write_file(dir / "bad.json", R"({"depth": "nowhere.png", "mask": "scene/capture_mask.png"})");
    CHECK_THROWS(load_capture_file(dir / "bad.json"));
    kcflat::testing::write_file(dir / "nomask.json", R"({"depth": "scene/capture_depth.png"})");
    CHECK_THROWS(load_capture_file(dir / "nomask.json"));
}

TEST_CASE("prediction agrees with the network output") {
    KCNet<float> net = tiny_net();
    const Capture c = towel_capture();
    const Normalization norm;
    const Prediction p = predict(net, c, norm);
    const ImageStack s = compose_modalities(c, Modality{}, norm);
    nn::Tensor<float> x({1, 1, 32, 32});
    std::copy(s.values.begin(), s.values.end(), x.data());
    const LogProbVector lp = to_logprob_vector(net.forward(x, nn::Mode::eval), 0);
    CHECK(p.logprobs == lp);
    CHECK(p.label == decode_prediction(lp));
}

TEST_CASE("the pipeline runs every stage and executes the selected plan") {
    KCNet<float> net = tiny_net();
    const Workspace ws;
    const PlanRegistry reg = build_template_registry(ws);
    const PipelineResult r = run_pipeline(towel_capture(), net, Normalization{}, reg, ws);
    CHECK(r.success);
    CHECK(r.failed_stage.empty());
    REQUIRE(r.predicted.has_value());
    CHECK(r.plan_id + ".csv" == plan_file_name(*r.predicted));
    CHECK(r.plan_id == select_plan(*r.predicted, reg).plan_id);
    CHECK(r.trace.success);
    CHECK(r.trace.events.size() == select_plan(*r.predicted, reg).steps.size());
    REQUIRE(r.timings.size() == 4);
    CHECK(r.timings[0].stage == kStageRecognition);
    CHECK(r.timings[3].stage == kStageExecution);
    CHECK(r.stage_ms(kStageSelection).has_value());
    CHECK_FALSE(r.stage_ms("nonsense").has_value());

    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["success"] == true);
    CHECK(j["plan_id"] == r.plan_id);
}

TEST_CASE("pipeline failures name the stage") {
    KCNet<float> net = tiny_net();
    const Workspace ws;
    SUBCASE("missing plan") {
        const PipelineResult r = run_pipeline(towel_capture(), net, Normalization{}, PlanRegistry{}, ws);
        CHECK_FALSE(r.success);
        CHECK(r.failed_stage == kStageSelection);
        CHECK(r.error.find("no manipulation plan") != std::string::npos);
        CHECK(r.timings.size() == 2);
    }
    SUBCASE("wrong resolution") {
        const PipelineResult r = run_pipeline(towel_capture(48), net, Normalization{}, build_template_registry(ws), ws);
        CHECK(r.failed_stage == kStageRecognition);
        CHECK_FALSE(r.predicted.has_value());
        CHECK(r.timings.size() == 1);
    }
    SUBCASE("plan outside the workspace") {
        PlanRegistry reg;
        const PlanRegistry templates = build_template_registry(ws);
        for (auto [key, plan] : templates.plans()) {
            plan.steps.back().pose.y = 5.0;
            reg.insert(plan);
        }
        const PipelineResult r = run_pipeline(towel_capture(), net, Normalization{}, reg, ws);
        CHECK(r.failed_stage == kStageValidation);
        CHECK_FALSE(r.plan_id.empty());
    }
    SUBCASE("missed grasp during execution") {
        ExecutorOptions opt;
        opt.grasp_targets = {Pose{0.2, 0.9, 0.1, 0, 0, 0, 1}};
        const PipelineResult r = run_pipeline(towel_capture(), net, Normalization{}, build_template_registry(ws), ws, opt);
        CHECK(r.failed_stage == kStageExecution);
        CHECK(r.error.find("grasp missed") != std::string::npos);
        CHECK_FALSE(r.trace.success);
    }
}
