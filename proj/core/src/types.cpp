#include "kcflat/types.hpp"

#include <algorithm>

#include "kcflat/error.hpp"

namespace kcflat {

std::string_view to_string(GarmentCategory c) noexcept {
    switch (c) {
        case GarmentCategory::jean: return "jean";
        case GarmentCategory::shirt: return "shirt";
        case GarmentCategory::sweater: return "sweater";
        case GarmentCategory::towel: return "towel";
        case GarmentCategory::tshirt: return "tshirt";
    }
    return "?";
}

std::optional<GarmentCategory> parse_category(std::string_view name) noexcept {
    if (name.size() > 1 && name.back() == 's' && name != "s") {
        for (auto c : kAllCategories) {
            if (to_string(c) == name.substr(0, name.size() - 1)) return c;
        }
    }
    for (auto c : kAllCategories) {
        if (to_string(c) == name) return c;
    }
    return std::nullopt;
}

GarmentCategory category_from_index(int index) {
    if (index < 0 || index >= kCategoryCount) {
        throw Error("category index out of range: " + std::to_string(index));
    }
    return kAllCategories[static_cast<std::size_t>(index)];
}

std::string to_string(const GarmentInstance& g) {
    return std::string(to_string(g.category)) + "#" + std::to_string(g.instance_id);
}

ClassLabel::ClassLabel(GarmentCategory category, int segment_id)
    : category_(category), segment_(segment_id) {
    if (segment_id < 0 || segment_id >= kSegmentCount) {
        throw Error("segment id out of range: " + std::to_string(segment_id));
    }
}

ClassLabel ClassLabel::from_flat(int flat_index) {
    if (flat_index < 0 || flat_index >= kClassCount) {
        throw Error("class index out of range: " + std::to_string(flat_index));
    }
    return ClassLabel(category_from_index(flat_index / kSegmentCount), flat_index % kSegmentCount);
}

std::string to_string(const ClassLabel& label) {
    std::string s(to_string(label.category()));
    s += '/';
    s += std::to_string(label.segment_id());
    return s;
}

std::string_view to_string(Modality m) noexcept {
    switch (m.kind) {
        case ModalityKind::depth: return "depth";
        case ModalityKind::rgb: return "rgb";
        case ModalityKind::rgbd: return "rgbd";
    }
    return "?";
}

std::optional<Modality> parse_modality(std::string_view name) noexcept {
    if (name == "depth") return Modality{ModalityKind::depth};
    if (name == "rgb") return Modality{ModalityKind::rgb};
    if (name == "rgbd") return Modality{ModalityKind::rgbd};
    return std::nullopt;
}

std::size_t ValidationReport::count(std::string_view kind) const noexcept {
    return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                  [&](const Violation& v) { return v.kind == kind; }));
}

}  // namespace kcflat
