#include "kcflat/executor.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace kcflat {

std::string_view to_string(GripperState g) noexcept { return g == GripperState::open ? "open" : "closed"; }

bool MockRobotState::consistent() const noexcept {
    for (const ArmState* a : {&left, &right}) {
        if (a->held && a->gripper != GripperState::closed) return false;
    }
    return true;
}

MockRobotState initial_state(const Workspace& workspace, const std::string& garment) {
    MockRobotState s;
    s.left.pose = workspace.left_rest_pose;
    s.right.pose = workspace.hang_pose;
    s.right.gripper = GripperState::closed;
    s.right.held = garment;
    return s;
}

StepResult step(const MockRobotState& state, const PlanStep& plan_step, const Workspace& workspace,
                const ExecutorOptions& options) {
    const int idx = plan_step.step_index;
    const std::string where = "step " + std::to_string(idx) + " (" + std::string(to_string(plan_step.arm)) + "): ";
    const Pose& p = plan_step.pose;
    if (!workspace.reach(plan_step.arm).contains(p)) {
        throw ExecutionError(where + "pose outside workspace", idx);
    }
    if (workspace.over_table(p) && p.z < workspace.table_height) {
        throw ExecutionError(where + "pose below the table top", idx);
    }
    StepResult r{state, {}};
    ArmState& arm = r.state.arm(plan_step.arm);
    const GripperState before = arm.gripper;
    arm.pose = p;
    switch (plan_step.gripper) {
        case GripperCommand::hold:
            break;
        case GripperCommand::close: {
            if (arm.gripper == GripperState::closed) throw ExecutionError(where + "illegal gripper transition: close on closed gripper", idx);
            arm.gripper = GripperState::closed;
            bool reached = options.grasp_targets.empty();
            for (const auto& t : options.grasp_targets) {
                if (std::hypot(t.x - p.x, t.y - p.y, t.z - p.z) <= options.grasp_radius) reached = true;
            }
            if (!reached) throw ExecutionError(where + "grasp missed: no garment within grasp radius", idx);
            arm.held = options.garment;
            break;
        }
        case GripperCommand::open:
            if (arm.gripper == GripperState::open) throw ExecutionError(where + "illegal gripper transition: open on open gripper", idx);
            arm.gripper = GripperState::open;
            arm.held.reset();
            break;
    }
    r.state.clock = state.clock + 1;
    r.event = {idx, plan_step.arm, p, before, arm.gripper, plan_step.phase, r.state.clock, true, {}};
    return r;
}

ExecutionTrace execute_plan(const ManipulationPlan& plan, const Workspace& workspace, const MockRobotState& initial,
                            const ExecutorOptions& options) {
    if (plan.steps.empty()) throw PlanError(plan.plan_id + ": cannot execute a plan without steps");
    if (!initial.consistent()) throw PlanError("initial robot state holds a garment with an open gripper");
    ExecutionTrace trace;
    MockRobotState state = initial;
    for (const auto& s : plan.steps) {
        try {
            StepResult r = step(state, s, workspace, options);
            state = std::move(r.state);
            trace.events.push_back(std::move(r.event));
        } catch (const ExecutionError& e) {
            const ArmState& arm = state.arm(s.arm);
            trace.events.push_back({s.step_index, s.arm, s.pose, arm.gripper, arm.gripper, s.phase, state.clock, false,
                                    e.what()});
            trace.success = false;
            trace.reason = e.what();
            return trace;
        }
    }
    trace.success = true;
    return trace;
}

std::optional<int> ExecutionTrace::failed_step() const {
    if (success || events.empty() || events.back().ok) return std::nullopt;
    return events.back().step_index;
}

std::vector<PlanPhase> ExecutionTrace::phase_sequence() const {
    std::vector<PlanPhase> seq;
    for (const auto& e : events) {
        if (e.ok && e.phase && (seq.empty() || seq.back() != *e.phase)) seq.push_back(*e.phase);
    }
    return seq;
}

std::string trace_to_jsonl(const ExecutionTrace& trace) {
    std::string out;
    for (const auto& e : trace.events) {
        nlohmann::json j = {
            {"step_index", e.step_index},
            {"arm", to_string(e.arm)},
            {"pose", {e.pose.x, e.pose.y, e.pose.z, e.pose.qx, e.pose.qy, e.pose.qz, e.pose.qw}},
            {"gripper_before", to_string(e.gripper_before)},
            {"gripper_after", to_string(e.gripper_after)},
            {"phase", e.phase ? nlohmann::json(to_string(*e.phase)) : nlohmann::json(nullptr)},
            {"clock", e.clock},
            {"ok", e.ok},
        };
        if (!e.ok) j["error"] = e.message;
        out += j.dump();
        out += '\n';
    }
    nlohmann::json status = {{"status", trace.success ? "success" : "failed"}};
    if (!trace.success) status["reason"] = trace.reason;
    out += status.dump();
    out += '\n';
    return out;
}

}  // namespace kcflat
