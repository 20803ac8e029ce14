#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kcflat/dataset.hpp"
#include "kcflat/types.hpp"

namespace kcflat {

// One instance-held-out cross-validation session.
struct FoldSplit {
    int fold_id = 0;
    std::set<GarmentInstance> train_instances;
    std::set<GarmentInstance> test_instances;

    bool operator==(const FoldSplit&) const = default;
};

// Instance group j of every category forms the test set of fold j. Without a seed, the instances of a
// category are taken in id order (instance i -> fold i when there are k instances); with a seed each
// category's instance order is shuffled first. Throws ConfigError when k does not divide the instance
// count of every category.
std::vector<FoldSplit> make_folds(std::span<const GarmentInstance> instances, int k,
                                  std::optional<std::uint64_t> seed = std::nullopt);
std::vector<FoldSplit> make_folds(const DatasetManifest& manifest, int k,
                                  std::optional<std::uint64_t> seed = std::nullopt);

// Reports "leakage" (instance in train and test of one fold), "coverage" (instance never tested),
// "duplicate" (instance tested in more than one fold) and "incomplete" (a fold's train and test sets
// do not cover the instance universe). The universe defaults to every instance named by any fold.
ValidationReport verify_folds(std::span<const FoldSplit> folds,
                              std::optional<std::span<const GarmentInstance>> universe = std::nullopt);

// Holds per-category per-fold accuracies (percent) while a k-fold run fills them in.
class AccuracyGrid {
public:
    explicit AccuracyGrid(int folds);

    int folds() const noexcept { return folds_; }
    void set(GarmentCategory category, int fold, double accuracy);
    std::optional<double> get(GarmentCategory category, int fold) const;
    bool complete() const noexcept;

private:
    int folds_;
    std::vector<std::optional<double>> cells_;  // [category][fold]
};

struct EvalReport {
    Modality modality;
    int folds = 0;
    std::vector<double> cells;  // [category index][fold], percent
    std::vector<double> fold_averages;
    double overall_average = 0.0;

    double cell(GarmentCategory category, int fold) const {
        return cells[static_cast<std::size_t>(category_index(category)) * static_cast<std::size_t>(folds) +
                     static_cast<std::size_t>(fold)];
    }
    bool operator==(const EvalReport&) const = default;
};

// Unweighted means over categories per fold and over folds overall. Throws Error on an incomplete grid.
EvalReport aggregate_report(const AccuracyGrid& grid, Modality modality);

// Row order used when rendering reports: towel, tshirt, shirt, sweater, jean.
inline constexpr std::array<GarmentCategory, kCategoryCount> kReportRowOrder = {
    GarmentCategory::towel, GarmentCategory::tshirt, GarmentCategory::shirt, GarmentCategory::sweater,
    GarmentCategory::jean};

// CSV with header "modality,category,fold_1..fold_k"; average rows use category "average"/"AVERAGE".
std::string report_to_csv(std::span<const EvalReport> reports);
// Side-by-side modality blocks: category rows, fold columns, a fold-average row and the overall average.
// Values are rounded to one decimal.
std::string render_report_table(std::span<const EvalReport> reports);

}  // namespace kcflat
