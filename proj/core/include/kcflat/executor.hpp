#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "kcflat/plans.hpp"

namespace kcflat {

enum class GripperState : std::uint8_t { open, closed };
std::string_view to_string(GripperState g) noexcept;

struct ArmState {
    Pose pose;
    GripperState gripper = GripperState::open;
    std::optional<std::string> held;  // garment handle; set only while closed

    bool operator==(const ArmState&) const = default;
};

struct MockRobotState {
    ArmState left;
    ArmState right;
    int clock = 0;

    ArmState& arm(Arm a) noexcept { return a == Arm::left ? left : right; }
    const ArmState& arm(Arm a) const noexcept { return a == Arm::left ? left : right; }
    // Every held handle belongs to a closed gripper.
    bool consistent() const noexcept;
    bool operator==(const MockRobotState&) const = default;
};

// Right arm closed at the hang pose holding `garment`, left arm open at its rest pose.
MockRobotState initial_state(const Workspace& workspace, const std::string& garment = "garment");

struct ExecutorOptions {
    double grasp_radius = 0.05;
    // Points where the garment can be picked up. When empty every close picks the garment up;
    // otherwise a close further than grasp_radius from all targets is a missed grasp.
    std::vector<Pose> grasp_targets;
    std::string garment = "garment";
};

struct TraceEvent {
    int step_index = 0;
    Arm arm = Arm::right;
    Pose pose;
    GripperState gripper_before = GripperState::open;
    GripperState gripper_after = GripperState::open;
    std::optional<PlanPhase> phase;
    int clock = 0;
    bool ok = true;
    std::string message;  // failure reason; empty on success

    bool operator==(const TraceEvent&) const = default;
};

struct ExecutionTrace {
    std::vector<TraceEvent> events;
    bool success = false;
    std::string reason;

    std::optional<int> failed_step() const;
    std::vector<PlanPhase> phase_sequence() const;
};

struct StepResult {
    MockRobotState state;
    TraceEvent event;
};

// Moves the arm exactly to the target and applies the gripper command. Throws ExecutionError on a
// pose outside the workspace, a gripper transition that is not legal, or a missed grasp.
StepResult step(const MockRobotState& state, const PlanStep& plan_step, const Workspace& workspace,
                const ExecutorOptions& options = {});

// Applies the steps in order and stops at the first failure, which is recorded as a final event with
// ok = false. Throws PlanError before executing an empty plan or from an inconsistent initial state.
ExecutionTrace execute_plan(const ManipulationPlan& plan, const Workspace& workspace, const MockRobotState& initial,
                            const ExecutorOptions& options = {});

// One JSON object per event followed by a status line {"status": "success"|"failed", ...}.
std::string trace_to_jsonl(const ExecutionTrace& trace);

}  // namespace kcflat
