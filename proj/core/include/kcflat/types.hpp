#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kcflat {

inline constexpr int kCategoryCount = 5;
inline constexpr int kSegmentCount = 10;
inline constexpr int kClassCount = kCategoryCount * kSegmentCount;

enum class GarmentCategory : std::uint8_t { jean = 0, shirt, sweater, towel, tshirt };

inline constexpr std::array<GarmentCategory, kCategoryCount> kAllCategories = {
    GarmentCategory::jean, GarmentCategory::shirt, GarmentCategory::sweater,
    GarmentCategory::towel, GarmentCategory::tshirt};

constexpr int category_index(GarmentCategory c) noexcept { return static_cast<int>(c); }
std::string_view to_string(GarmentCategory c) noexcept;
// Accepts the singular names plus the plural forms used in captions ("jeans", "towels").
std::optional<GarmentCategory> parse_category(std::string_view name) noexcept;
GarmentCategory category_from_index(int index);

struct GarmentInstance {
    GarmentCategory category = GarmentCategory::jean;
    int instance_id = 0;

    auto operator<=>(const GarmentInstance&) const = default;
};

std::string to_string(const GarmentInstance& g);

// Known-configuration identity: which segment of which category the garment was grasped at.
class ClassLabel {
public:
    ClassLabel() = default;
    ClassLabel(GarmentCategory category, int segment_id);

    static ClassLabel from_flat(int flat_index);

    GarmentCategory category() const noexcept { return category_; }
    int segment_id() const noexcept { return segment_; }
    int flat_index() const noexcept { return 10 * category_index(category_) + segment_; }

    auto operator<=>(const ClassLabel&) const = default;

private:
    GarmentCategory category_ = GarmentCategory::jean;
    int segment_ = 0;
};

std::string to_string(const ClassLabel& label);

enum class ModalityKind : std::uint8_t { depth, rgb, rgbd };

struct Modality {
    ModalityKind kind = ModalityKind::depth;

    constexpr int channel_count() const noexcept {
        switch (kind) {
            case ModalityKind::depth: return 1;
            case ModalityKind::rgb: return 3;
            case ModalityKind::rgbd: return 4;
        }
        return 0;
    }
    constexpr bool needs_depth() const noexcept { return kind != ModalityKind::rgb; }
    constexpr bool needs_rgb() const noexcept { return kind != ModalityKind::depth; }

    bool operator==(const Modality&) const = default;
};

std::string_view to_string(Modality m) noexcept;
std::optional<Modality> parse_modality(std::string_view name) noexcept;

// A single finding produced by one of the validate_* passes. Violations are data, not errors.
struct Violation {
    std::string kind;
    std::string message;
    std::optional<int> index;  // entry row, plan step, or fold id depending on the producer
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
    std::size_t size() const noexcept { return violations.size(); }
    void add(std::string kind, std::string message, std::optional<int> index = std::nullopt) {
        violations.push_back({std::move(kind), std::move(message), index});
    }
    std::size_t count(std::string_view kind) const noexcept;
};

}  // namespace kcflat
