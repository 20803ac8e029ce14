#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kcflat/config.hpp"
#include "kcflat/error.hpp"
#include "kcflat/types.hpp"

namespace kcflat {

enum class Arm : std::uint8_t { left, right };
enum class GripperCommand : std::uint8_t { open, close, hold };
enum class PlanPhase : std::uint8_t { grasp2, grasp3, stretch, lift, place };

inline constexpr std::array<PlanPhase, 5> kFlattenPhases = {PlanPhase::grasp2, PlanPhase::grasp3,
                                                             PlanPhase::stretch, PlanPhase::lift,
                                                             PlanPhase::place};

std::string_view to_string(Arm a) noexcept;
std::string_view to_string(GripperCommand g) noexcept;
std::string_view to_string(PlanPhase p) noexcept;
std::optional<Arm> parse_arm(std::string_view s) noexcept;
std::optional<GripperCommand> parse_gripper(std::string_view s) noexcept;
std::optional<PlanPhase> parse_phase(std::string_view s) noexcept;

// Position in metres, orientation as a unit quaternion (x, y, z, w).
struct Pose {
    double x = 0, y = 0, z = 0;
    double qx = 0, qy = 0, qz = 0, qw = 1;

    double quaternion_norm() const noexcept;
    bool operator==(const Pose&) const = default;
};

inline constexpr double kQuaternionTolerance = 1e-3;

struct PlanStep {
    int step_index = 0;
    Arm arm = Arm::right;
    Pose pose;
    GripperCommand gripper = GripperCommand::hold;
    std::optional<PlanPhase> phase;

    bool operator==(const PlanStep&) const = default;
};

struct ManipulationPlan {
    std::string plan_id;
    std::optional<ClassLabel> label;
    std::vector<PlanStep> steps;

    // Phase tags in step order with consecutive repeats collapsed.
    std::vector<PlanPhase> phase_sequence() const;
    bool operator==(const ManipulationPlan&) const = default;
};

struct Box {
    std::array<double, 3> min{};
    std::array<double, 3> max{};

    bool empty() const noexcept;
    bool contains(const Pose& p) const noexcept;
};

// Robot-frame layout: x points from the robot towards the table, y to the robot's left, z up.
// The table top spans [table_edge_x, table_far_x] x [-table_half_width, table_half_width].
struct Workspace {
    Box left_reach{{0.2, -0.4, 0.0}, {1.6, 1.0, 2.2}};
    Box right_reach{{0.2, -1.0, 0.0}, {1.6, 0.4, 2.2}};
    double table_height = 0.75;
    double table_edge_x = 0.7;
    double table_far_x = 1.5;
    double table_half_width = 0.8;
    // Arm poses before a plan starts: the right arm holds the garment up, the left waits.
    Pose hang_pose{0.55, -0.05, 1.85, 0, 1, 0, 0};
    Pose left_rest_pose{0.35, 0.55, 1.2, 0, 1, 0, 0};

    const Box& reach(Arm a) const noexcept { return a == Arm::left ? left_reach : right_reach; }
    bool over_table(const Pose& p) const noexcept;
    // Throws ConfigError on empty boxes or a non-positive table extent.
    void validate() const;
    // Keys: left.min, left.max, right.min, right.max (x, y, z lists), table.height, table.edge_x,
    // table.far_x, table.half_width, hang.position, left_rest.position.
    static Workspace from_config(const KeyValueConfig& cfg);
};

// CSV header written by write_plan_csv. Columns may appear in any order on input; a trailing
// "phase" column is optional.
inline constexpr std::string_view kPlanCsvHeader = "step_index,arm,x,y,z,qx,qy,qz,qw,gripper,phase";

// plan_id is the file stem; the label is filled in when the stem reads "<category>_<NN>".
// Throws PlanError naming the data row (1-based) on malformed content.
ManipulationPlan parse_plan_csv(const std::filesystem::path& path);
ManipulationPlan parse_plan_csv_text(const std::string& text, const std::string& plan_id);
std::string plan_to_csv(const ManipulationPlan& plan);
void write_plan_csv(const ManipulationPlan& plan, const std::filesystem::path& path);

// Gripper states the plan starts from. The default matches a garment held up by the right arm.
struct GripperStart {
    bool left_closed = false;
    bool right_closed = true;
};

// Violation kinds: "empty", "order", "orientation", "reach", "table", "gripper", "release".
// Violation::index is the 0-based step position.
ValidationReport validate_plan(const ManipulationPlan& plan, const Workspace& workspace,
                               GripperStart start = {});

class PlanRegistry {
public:
    // Throws PlanError when the plan has no label or the label is already taken.
    void insert(ManipulationPlan plan);
    const ManipulationPlan* find(const ClassLabel& label) const noexcept;
    std::size_t size() const noexcept { return plans_.size(); }
    bool complete() const noexcept { return plans_.size() == static_cast<std::size_t>(kClassCount); }
    std::vector<ClassLabel> missing() const;
    const std::map<int, ManipulationPlan>& plans() const noexcept { return plans_; }

private:
    std::map<int, ManipulationPlan> plans_;  // keyed by flat index
};

std::string plan_file_name(const ClassLabel& label);  // "<category>_<NN>.csv"
// Reads every *.csv in `dir`; a csv whose name is not a plan file name is an error.
PlanRegistry load_registry(const std::filesystem::path& dir);
void write_registry(const PlanRegistry& registry, const std::filesystem::path& dir);

const ManipulationPlan& select_plan(const ClassLabel& label, const PlanRegistry& registry);

// Garment measurements driving the flattening template, in metres.
struct GarmentGeometry {
    double width = 0.6;
    double length = 0.4;
    double hang_length = 0.6;    // vertical extent while held at the initial grasp
    double lowest_offset = 0.0;  // lateral (y) offset of the lowest point from the grasp
};

// Nominal geometry for a category grasped at a segment: segment centre on the 2 x 5 layout of the
// flat garment, lowest point at the farthest corner, lateral offset contracted by 0.4.
GarmentGeometry nominal_geometry(GarmentCategory category, int segment_id);

struct TemplateParams {
    double stretch_factor = 0.95;
    double lift_clearance = 0.10;
    double place_height = 0.03;    // gripper height above the table when releasing
    double place_reach = 0.8;      // slide distance as a fraction of garment length
    double approach_offset = 0.10;
};

// Builds the five-phase flattening routine (grasp2, grasp3, stretch, lift, place). Each phase spans
// several single-arm steps. Throws PlanError if the plan would leave the workspace.
ManipulationPlan generate_flatten_template(GarmentCategory category, int segment_id,
                                           const GarmentGeometry& geometry, const Workspace& workspace,
                                           const TemplateParams& params = {});
PlanRegistry build_template_registry(const Workspace& workspace, const TemplateParams& params = {});

}  // namespace kcflat
