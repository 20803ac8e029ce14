#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kcflat/executor.hpp"
#include "kcflat/plans.hpp"
#include "kcflat/trainer.hpp"

namespace kcflat {

// capture.json: {"depth": "...png", "mask": "...png", "rgb": "...png"}; paths relative to the file.
// "rgb" is optional. The label of the returned capture is unset (defaults).
Capture load_capture_file(const std::filesystem::path& path);
void write_capture_file(const Capture& capture, const std::filesystem::path& path);

struct Prediction {
    ClassLabel label;
    LogProbVector logprobs{};
};

Prediction predict(KCNet<float>& net, const Capture& capture, const Normalization& norm);

inline constexpr const char* kStageRecognition = "recognition";
inline constexpr const char* kStageSelection = "plan selection";
inline constexpr const char* kStageValidation = "validation";
inline constexpr const char* kStageExecution = "execution";

struct StageTiming {
    std::string stage;
    double milliseconds = 0.0;
};

struct PipelineResult {
    bool success = false;
    std::string failed_stage;  // empty on success
    std::string error;
    std::optional<ClassLabel> predicted;
    std::string plan_id;
    ExecutionTrace trace;
    std::vector<StageTiming> timings;  // stages that ran, in order

    std::optional<double> stage_ms(const std::string& stage) const;
    std::string to_json() const;
};

// predict -> select_plan -> validate_plan -> execute_plan, stopping at the first failing stage.
PipelineResult run_pipeline(const Capture& capture, KCNet<float>& net, const Normalization& norm,
                            const PlanRegistry& registry, const Workspace& workspace,
                            const ExecutorOptions& options = {});

}  // namespace kcflat
