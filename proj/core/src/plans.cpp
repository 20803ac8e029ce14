#include "kcflat/plans.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kcflat {

namespace fs = std::filesystem;

std::string_view to_string(Arm a) noexcept { return a == Arm::left ? "left" : "right"; }

std::string_view to_string(GripperCommand g) noexcept {
    switch (g) {
        case GripperCommand::open: return "open";
        case GripperCommand::close: return "close";
        case GripperCommand::hold: return "hold";
    }
    return "?";
}

std::string_view to_string(PlanPhase p) noexcept {
    switch (p) {
        case PlanPhase::grasp2: return "grasp2";
        case PlanPhase::grasp3: return "grasp3";
        case PlanPhase::stretch: return "stretch";
        case PlanPhase::lift: return "lift";
        case PlanPhase::place: return "place";
    }
    return "?";
}

std::optional<Arm> parse_arm(std::string_view s) noexcept {
    if (s == "left") return Arm::left;
    if (s == "right") return Arm::right;
    return std::nullopt;
}

std::optional<GripperCommand> parse_gripper(std::string_view s) noexcept {
    if (s == "open") return GripperCommand::open;
    if (s == "close") return GripperCommand::close;
    if (s == "hold") return GripperCommand::hold;
    return std::nullopt;
}

std::optional<PlanPhase> parse_phase(std::string_view s) noexcept {
    for (auto p : kFlattenPhases) {
        if (s == to_string(p)) return p;
    }
    return std::nullopt;
}

double Pose::quaternion_norm() const noexcept { return std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw); }

std::vector<PlanPhase> ManipulationPlan::phase_sequence() const {
    std::vector<PlanPhase> seq;
    for (const auto& s : steps) {
        if (s.phase && (seq.empty() || seq.back() != *s.phase)) seq.push_back(*s.phase);
    }
    return seq;
}

bool Box::empty() const noexcept {
    for (int i = 0; i < 3; ++i) {
        if (!(max[i] > min[i])) return true;
    }
    return false;
}

bool Box::contains(const Pose& p) const noexcept {
    return p.x >= min[0] && p.x <= max[0] && p.y >= min[1] && p.y <= max[1] && p.z >= min[2] && p.z <= max[2];
}

bool Workspace::over_table(const Pose& p) const noexcept {
    return p.x >= table_edge_x && p.x <= table_far_x && std::abs(p.y) <= table_half_width;
}

void Workspace::validate() const {
    if (left_reach.empty()) throw ConfigError("workspace: left reach box is empty");
    if (right_reach.empty()) throw ConfigError("workspace: right reach box is empty");
    if (!(table_far_x > table_edge_x) || !(table_half_width > 0)) throw ConfigError("workspace: table has no extent");
}

namespace {

std::array<double, 3> read_triple(const KeyValueConfig& cfg, const std::string& key, std::array<double, 3> fallback) {
    auto raw = cfg.get(key);
    if (!raw) return fallback;
    auto parts = cfg.get_string_list(key, {});
    if (parts.size() != 3) throw ConfigError(key + ": expected three comma-separated numbers");
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
        char* end = nullptr;
        out[i] = std::strtod(parts[i].c_str(), &end);
        if (end == parts[i].c_str() || *end != '\0') throw ConfigError(key + ": not a number: " + parts[i]);
    }
    return out;
}

void set_position(Pose& p, const std::array<double, 3>& v) {
    p.x = v[0];
    p.y = v[1];
    p.z = v[2];
}

}  // namespace

Workspace Workspace::from_config(const KeyValueConfig& cfg) {
    const auto unknown = cfg.unknown_keys({"left.min", "left.max", "right.min", "right.max", "table.height",
                                           "table.edge_x", "table.far_x", "table.half_width", "hang.position",
                                           "left_rest.position"});
    if (!unknown.empty()) throw ConfigError("unknown workspace key '" + unknown.front() + "'");
    Workspace w;
    w.left_reach.min = read_triple(cfg, "left.min", w.left_reach.min);
    w.left_reach.max = read_triple(cfg, "left.max", w.left_reach.max);
    w.right_reach.min = read_triple(cfg, "right.min", w.right_reach.min);
    w.right_reach.max = read_triple(cfg, "right.max", w.right_reach.max);
    w.table_height = cfg.get_double("table.height", w.table_height);
    w.table_edge_x = cfg.get_double("table.edge_x", w.table_edge_x);
    w.table_far_x = cfg.get_double("table.far_x", w.table_far_x);
    w.table_half_width = cfg.get_double("table.half_width", w.table_half_width);
    set_position(w.hang_pose, read_triple(cfg, "hang.position", {w.hang_pose.x, w.hang_pose.y, w.hang_pose.z}));
    set_position(w.left_rest_pose,
                 read_triple(cfg, "left_rest.position", {w.left_rest_pose.x, w.left_rest_pose.y, w.left_rest_pose.z}));
    w.validate();
    return w;
}

// ---------------------------------------------------------------------------------------------- CSV

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

constexpr std::array<std::string_view, 10> kRequiredColumns = {"step_index", "arm", "x",  "y",  "z",
                                                               "qx",         "qy",  "qz", "qw", "gripper"};

std::optional<ClassLabel> label_from_stem(std::string_view stem) {
    auto us = stem.rfind('_');
    if (us == std::string_view::npos || stem.size() - us - 1 != 2) return std::nullopt;
    auto cat = parse_category(stem.substr(0, us));
    if (!cat || to_string(*cat) != stem.substr(0, us)) return std::nullopt;
    int seg = 0;
    auto digits = stem.substr(us + 1);
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seg);
    if (ec != std::errc{} || p != digits.data() + digits.size() || seg < 0 || seg >= kSegmentCount) {
        return std::nullopt;
    }
    return ClassLabel(*cat, seg);
}

}  // namespace

ManipulationPlan parse_plan_csv_text(const std::string& text, const std::string& plan_id) {
    ManipulationPlan plan;
    plan.plan_id = plan_id;
    plan.label = label_from_stem(plan_id);

    std::istringstream in(text);
    std::string line;
    std::vector<std::string_view> header;
    std::string header_line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            header_line = line;
            break;
        }
    }
    if (header_line.empty()) throw PlanError(plan_id + ": empty plan file");
    header = split_csv(header_line);

    std::map<std::string, std::size_t, std::less<>> column;
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string name(header[i]);
        if (name != "phase" && std::find(kRequiredColumns.begin(), kRequiredColumns.end(), name) == kRequiredColumns.end()) {
            throw PlanError(plan_id + ": unknown column '" + name + "'");
        }
        if (!column.emplace(name, i).second) throw PlanError(plan_id + ": duplicate column '" + name + "'");
    }
    for (auto name : kRequiredColumns) {
        if (!column.contains(name)) throw PlanError(plan_id + ": missing column '" + std::string(name) + "'");
    }
    const auto phase_col = column.find("phase");

    int row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const std::string where = plan_id + ": row " + std::to_string(row);
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw PlanError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                std::to_string(cells.size()),
                            row);
        }
        auto cell = [&](std::string_view name) { return cells[column.find(name)->second]; };
        auto number = [&](std::string_view name) {
            auto s = cell(name);
            double v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (s.empty() || ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
                throw PlanError(where + ": non-numeric " + std::string(name) + " '" + std::string(s) + "'", row);
            }
            return v;
        };
        PlanStep step;
        {
            auto s = cell("step_index");
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), step.step_index);
            if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
                throw PlanError(where + ": non-integer step_index '" + std::string(s) + "'", row);
            }
        }
        auto arm = parse_arm(cell("arm"));
        if (!arm) throw PlanError(where + ": unknown arm '" + std::string(cell("arm")) + "'", row);
        step.arm = *arm;
        step.pose = {number("x"), number("y"), number("z"), number("qx"), number("qy"), number("qz"), number("qw")};
        const double norm = step.pose.quaternion_norm();
        if (std::abs(norm - 1.0) > kQuaternionTolerance) {
            throw PlanError(where + ": quaternion norm " + format_double(norm) + " is not 1", row);
        }
        auto grip = parse_gripper(cell("gripper"));
        if (!grip) throw PlanError(where + ": unknown gripper command '" + std::string(cell("gripper")) + "'", row);
        step.gripper = *grip;
        if (phase_col != column.end() && !cells[phase_col->second].empty()) {
            auto ph = parse_phase(cells[phase_col->second]);
            if (!ph) throw PlanError(where + ": unknown phase '" + std::string(cells[phase_col->second]) + "'", row);
            step.phase = *ph;
        }
        if (!plan.steps.empty() && step.step_index <= plan.steps.back().step_index) {
            throw PlanError(where + ": step_index " + std::to_string(step.step_index) + " does not increase", row);
        }
        plan.steps.push_back(step);
    }
    if (plan.steps.empty()) throw PlanError(plan_id + ": plan has no steps");
    return plan;
}

ManipulationPlan parse_plan_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PlanError("cannot open plan file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_plan_csv_text(ss.str(), path.stem().string());
}

std::string plan_to_csv(const ManipulationPlan& plan) {
    std::string out(kPlanCsvHeader);
    out += '\n';
    for (const auto& s : plan.steps) {
        out += std::to_string(s.step_index);
        out += ',';
        out += to_string(s.arm);
        for (double v : {s.pose.x, s.pose.y, s.pose.z, s.pose.qx, s.pose.qy, s.pose.qz, s.pose.qw}) {
            out += ',';
            out += format_double(v);
        }
        out += ',';
        out += to_string(s.gripper);
        out += ',';
        if (s.phase) out += to_string(*s.phase);
        out += '\n';
    }
    return out;
}

void write_plan_csv(const ManipulationPlan& plan, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write plan file " + path.string());
    out << plan_to_csv(plan);
    if (!out) throw Error("failed writing plan file " + path.string());
}

// --------------------------------------------------------------------------------------- validation

ValidationReport validate_plan(const ManipulationPlan& plan, const Workspace& workspace, GripperStart start) {
    ValidationReport report;
    if (plan.steps.empty()) {
        report.add("empty", plan.plan_id + ": plan has no steps");
        return report;
    }
    bool closed[2] = {start.left_closed, start.right_closed};
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        const auto& s = plan.steps[i];
        const int idx = static_cast<int>(i);
        const std::string where = "step " + std::to_string(s.step_index) + " (" + std::string(to_string(s.arm)) + ")";
        if (i > 0 && s.step_index <= plan.steps[i - 1].step_index) {
            report.add("order", where + ": step_index does not increase", idx);
        }
        if (std::abs(s.pose.quaternion_norm() - 1.0) > kQuaternionTolerance) {
            report.add("orientation", where + ": quaternion is not unit length", idx);
        }
        if (!workspace.reach(s.arm).contains(s.pose)) {
            report.add("reach", where + ": pose outside the arm's reachable box", idx);
        }
        if (workspace.over_table(s.pose) && s.pose.z < workspace.table_height) {
            report.add("table", where + ": pose below the table top", idx);
        }
        bool& c = closed[s.arm == Arm::left ? 0 : 1];
        if (s.gripper == GripperCommand::close) {
            if (c) report.add("gripper", where + ": close on an already closed gripper", idx);
            c = true;
        } else if (s.gripper == GripperCommand::open) {
            if (!c) report.add("gripper", where + ": open on an already open gripper", idx);
            c = false;
        }
    }
    const int last = static_cast<int>(plan.steps.size()) - 1;
    if (closed[0]) report.add("release", "left gripper still closed at the end of the plan", last);
    if (closed[1]) report.add("release", "right gripper still closed at the end of the plan", last);
    return report;
}

// ----------------------------------------------------------------------------------------- registry

void PlanRegistry::insert(ManipulationPlan plan) {
    if (!plan.label) throw PlanError("plan '" + plan.plan_id + "' has no class label");
    const int key = plan.label->flat_index();
    if (plans_.contains(key)) throw PlanError("duplicate plan for " + to_string(*plan.label));
    plans_.emplace(key, std::move(plan));
}

const ManipulationPlan* PlanRegistry::find(const ClassLabel& label) const noexcept {
    auto it = plans_.find(label.flat_index());
    return it == plans_.end() ? nullptr : &it->second;
}

std::vector<ClassLabel> PlanRegistry::missing() const {
    std::vector<ClassLabel> out;
    for (int i = 0; i < kClassCount; ++i) {
        if (!plans_.contains(i)) out.push_back(ClassLabel::from_flat(i));
    }
    return out;
}

std::string plan_file_name(const ClassLabel& label) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s_%02d.csv", std::string(to_string(label.category())).c_str(), label.segment_id());
    return buf;
}

PlanRegistry load_registry(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw PlanError("plan registry directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    PlanRegistry reg;
    for (const auto& f : files) {
        ManipulationPlan plan = parse_plan_csv(f);
        if (!plan.label) throw PlanError("not a plan file name: " + f.filename().string());
        reg.insert(std::move(plan));
    }
    return reg;
}

void write_registry(const PlanRegistry& registry, const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto& [key, plan] : registry.plans()) write_plan_csv(plan, dir / plan_file_name(*plan.label));
}

const ManipulationPlan& select_plan(const ClassLabel& label, const PlanRegistry& registry) {
    const ManipulationPlan* p = registry.find(label);
    if (!p) throw PlanError("no manipulation plan for " + to_string(label));
    return *p;
}

// ----------------------------------------------------------------------------------------- template

namespace {

struct FlatSize {
    double width, length;
};

// Width is the extent the grippers stretch across: the full towel, the jean waist, the torso hem.
FlatSize nominal_size(GarmentCategory c) {
    switch (c) {
        case GarmentCategory::towel: return {0.60, 0.40};
        case GarmentCategory::jean: return {0.42, 1.00};
        case GarmentCategory::tshirt: return {0.50, 0.70};
        case GarmentCategory::shirt: return {0.52, 0.78};
        case GarmentCategory::sweater: return {0.55, 0.65};
    }
    return {0.5, 0.5};
}

}  // namespace

GarmentGeometry nominal_geometry(GarmentCategory category, int segment_id) {
    if (segment_id < 0 || segment_id >= kSegmentCount) throw PlanError("segment id out of range");
    const FlatSize f = nominal_size(category);
    const double gx = (segment_id % 2 + 0.5) * f.width / 2.0;
    const double gy = (segment_id / 2 + 0.5) * f.length / 5.0;
    GarmentGeometry g;
    g.width = f.width;
    g.length = f.length;
    g.hang_length = 0.0;
    for (double cx : {0.0, f.width}) {
        for (double cy : {0.0, f.length}) {
            const double d = std::hypot(cx - gx, cy - gy);
            if (d > g.hang_length) {
                g.hang_length = d;
                g.lowest_offset = -0.4 * (cx - gx);
            }
        }
    }
    return g;
}

ManipulationPlan generate_flatten_template(GarmentCategory category, int segment_id, const GarmentGeometry& geometry,
                                           const Workspace& workspace, const TemplateParams& params) {
    if (segment_id < 0 || segment_id >= kSegmentCount) throw PlanError("segment id out of range");
    if (!(geometry.width > 0) || !(geometry.length > 0) || !(geometry.hang_length > 0)) {
        throw PlanError("garment geometry must be positive");
    }
    const ClassLabel label(category, segment_id);
    const Pose& hang = workspace.hang_pose;
    const double d = geometry.width * params.stretch_factor;
    const double cy = hang.y;
    const double lift_z = workspace.table_height + geometry.length + params.lift_clearance;
    const double lift_x = workspace.table_edge_x - 0.05;
    const double place_x = workspace.table_edge_x + params.place_reach * geometry.length;
    const double place_z = workspace.table_height + params.place_height;
    const double low_z = hang.z - geometry.hang_length;

    ManipulationPlan plan;
    plan.plan_id = plan_file_name(label).substr(0, plan_file_name(label).size() - 4);
    plan.label = label;
    auto add = [&](PlanPhase phase, Arm arm, double x, double y, double z, GripperCommand g) {
        PlanStep s;
        s.step_index = static_cast<int>(plan.steps.size());
        s.arm = arm;
        s.pose = hang;
        s.pose.x = x;
        s.pose.y = y;
        s.pose.z = z;
        s.gripper = g;
        s.phase = phase;
        plan.steps.push_back(s);
    };
    using G = GripperCommand;
    // The free left arm takes the lowest point of the hang.
    add(PlanPhase::grasp2, Arm::left, hang.x, cy + geometry.lowest_offset + params.approach_offset, low_z, G::hold);
    add(PlanPhase::grasp2, Arm::left, hang.x, cy + geometry.lowest_offset, low_z, G::close);
    // Raise it, let go with the right arm and take the corner that now hangs below the left gripper.
    add(PlanPhase::grasp3, Arm::left, hang.x, cy + d / 2, hang.z, G::hold);
    add(PlanPhase::grasp3, Arm::right, hang.x, hang.y, hang.z, G::open);
    add(PlanPhase::grasp3, Arm::right, hang.x, cy + d / 2 - params.approach_offset, hang.z - geometry.width, G::hold);
    add(PlanPhase::grasp3, Arm::right, hang.x, cy + d / 2, hang.z - geometry.width, G::close);
    add(PlanPhase::stretch, Arm::right, hang.x, cy - d / 2, hang.z, G::hold);
    add(PlanPhase::lift, Arm::left, lift_x, cy + d / 2, lift_z, G::hold);
    add(PlanPhase::lift, Arm::right, lift_x, cy - d / 2, lift_z, G::hold);
    add(PlanPhase::place, Arm::left, place_x, cy + d / 2, place_z, G::hold);
    add(PlanPhase::place, Arm::right, place_x, cy - d / 2, place_z, G::hold);
    add(PlanPhase::place, Arm::left, place_x, cy + d / 2, place_z, G::open);
    add(PlanPhase::place, Arm::right, place_x, cy - d / 2, place_z, G::open);

    const ValidationReport report = validate_plan(plan, workspace);
    if (!report.ok()) {
        const auto& v = report.violations.front();
        throw PlanError(plan.plan_id + ": garment geometry incompatible with workspace: " + v.message, v.index);
    }
    return plan;
}

PlanRegistry build_template_registry(const Workspace& workspace, const TemplateParams& params) {
    PlanRegistry reg;
    for (auto c : kAllCategories) {
        for (int s = 0; s < kSegmentCount; ++s) {
            reg.insert(generate_flatten_template(c, s, nominal_geometry(c, s), workspace, params));
        }
    }
    return reg;
}

}  // namespace kcflat
