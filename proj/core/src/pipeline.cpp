#include "kcflat/pipeline.hpp"

#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kcflat/png_io.hpp"

namespace kcflat {

namespace fs = std::filesystem;
using nlohmann::json;

Capture load_capture_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open capture file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DatasetError(path.string() + ": " + e.what());
    }
    const fs::path dir = path.parent_path();
    auto field = [&](const char* key) -> std::optional<fs::path> {
        if (!j.contains(key) || j[key].is_null()) return std::nullopt;
        if (!j[key].is_string()) throw DatasetError(path.string() + ": field '" + key + "' must be a path string");
        return dir / j[key].get<std::string>();
    };
    auto depth = field("depth");
    auto mask = field("mask");
    if (!depth || !mask) throw DatasetError(path.string() + ": capture needs 'depth' and 'mask'");
    Capture cap;
    cap.mask = png::read_mask(*mask);
    cap.depth = mask_depth(png::read_gray16(*depth), cap.mask);
    if (auto rgb = field("rgb")) cap.rgb = mask_rgb(png::read_rgb8(*rgb), cap.mask);
    return cap;
}

void write_capture_file(const Capture& capture, const fs::path& path) {
    const fs::path dir = path.parent_path();
    const std::string stem = path.stem().string();
    if (!dir.empty()) fs::create_directories(dir);
    json j;
    j["depth"] = stem + "_depth.png";
    j["mask"] = stem + "_mask.png";
    png::write_gray16(dir / j["depth"].get<std::string>(), capture.depth);
    png::write_mask(dir / j["mask"].get<std::string>(), capture.mask);
    if (capture.rgb) {
        j["rgb"] = stem + "_rgb.png";
        png::write_rgb8(dir / j["rgb"].get<std::string>(), *capture.rgb);
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write capture file " + path.string());
    out << j.dump(2) << '\n';
}

Prediction predict(KCNet<float>& net, const Capture& capture, const Normalization& norm) {
    const Modality modality = net.config().modality;
    if (modality.needs_rgb() && !capture.rgb) {
        throw DatasetError("model needs RGB input but the capture has no RGB image");
    }
    const ImageStack stack = compose_modalities(capture, modality, norm);
    nn::Tensor<float> x({1, stack.channels, stack.height, stack.width});
    std::copy(stack.values.begin(), stack.values.end(), x.data());
    const nn::Tensor<float> logprobs = net.forward(x, nn::Mode::eval);
    Prediction p;
    p.logprobs = to_logprob_vector(logprobs, 0);
    p.label = decode_prediction(p.logprobs);
    return p;
}

std::optional<double> PipelineResult::stage_ms(const std::string& stage) const {
    for (const auto& t : timings) {
        if (t.stage == stage) return t.milliseconds;
    }
    return std::nullopt;
}

std::string PipelineResult::to_json() const {
    json j;
    j["success"] = success;
    j["failed_stage"] = failed_stage.empty() ? json(nullptr) : json(failed_stage);
    if (!error.empty()) j["error"] = error;
    if (predicted) {
        j["predicted"] = {{"category", to_string(predicted->category())},
                          {"segment_id", predicted->segment_id()},
                          {"flat_index", predicted->flat_index()}};
    } else {
        j["predicted"] = nullptr;
    }
    j["plan_id"] = plan_id.empty() ? json(nullptr) : json(plan_id);
    json timing = json::object();
    for (const auto& t : timings) timing[t.stage] = t.milliseconds;
    j["timing_ms"] = timing;
    json phases = json::array();
    for (auto p : trace.phase_sequence()) phases.push_back(to_string(p));
    j["trace"] = {{"events", trace.events.size()}, {"success", trace.success}, {"phases", phases}};
    if (!trace.reason.empty()) j["trace"]["reason"] = trace.reason;
    return j.dump(2);
}

PipelineResult run_pipeline(const Capture& capture, KCNet<float>& net, const Normalization& norm,
                            const PlanRegistry& registry, const Workspace& workspace, const ExecutorOptions& options) {
    PipelineResult result;
    using clock = std::chrono::steady_clock;
    auto timed = [&](const char* stage, auto&& body) -> bool {
        const auto t0 = clock::now();
        bool ok = true;
        try {
            ok = body();
        } catch (const std::exception& e) {
            result.error = e.what();
            ok = false;
        }
        result.timings.push_back({stage, std::chrono::duration<double, std::milli>(clock::now() - t0).count()});
        if (!ok) result.failed_stage = stage;
        return ok;
    };

    if (!timed(kStageRecognition, [&] {
            result.predicted = predict(net, capture, norm).label;
            return true;
        })) {
        return result;
    }
    const ManipulationPlan* plan = nullptr;
    if (!timed(kStageSelection, [&] {
            plan = &select_plan(*result.predicted, registry);
            result.plan_id = plan->plan_id;
            return true;
        })) {
        return result;
    }
    if (!timed(kStageValidation, [&] {
            const ValidationReport report = validate_plan(*plan, workspace);
            if (!report.ok()) result.error = plan->plan_id + ": " + report.violations.front().message;
            return report.ok();
        })) {
        return result;
    }
    if (!timed(kStageExecution, [&] {
            result.trace = execute_plan(*plan, workspace, initial_state(workspace, options.garment), options);
            if (!result.trace.success) result.error = result.trace.reason;
            return result.trace.success;
        })) {
        return result;
    }
    result.success = true;
    return result;
}

}  // namespace kcflat
