#include "kcflat/eval.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace kcflat {

std::vector<FoldSplit> make_folds(std::span<const GarmentInstance> instances, int k,
                                  std::optional<std::uint64_t> seed) {
    if (k < 2) throw ConfigError("k must be at least 2, got " + std::to_string(k));
    std::map<GarmentCategory, std::vector<GarmentInstance>> by_category;
    for (const auto& g : instances) by_category[g.category].push_back(g);
    if (by_category.empty()) throw ConfigError("no garment instances to split");

    std::set<GarmentInstance> all(instances.begin(), instances.end());
    std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) folds[static_cast<std::size_t>(j)].fold_id = j;

    std::mt19937_64 rng(seed.value_or(0));
    for (auto& [cat, list] : by_category) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        if (list.size() % static_cast<std::size_t>(k) != 0) {
            throw ConfigError("k=" + std::to_string(k) + " does not divide the " + std::to_string(list.size()) +
                              " instances of category " + std::string(to_string(cat)));
        }
        if (seed) std::shuffle(list.begin(), list.end(), rng);
        const std::size_t group = list.size() / static_cast<std::size_t>(k);
        for (std::size_t i = 0; i < list.size(); ++i) {
            folds[i / group].test_instances.insert(list[i]);
        }
    }
    for (auto& f : folds) {
        for (const auto& g : all) {
            if (!f.test_instances.contains(g)) f.train_instances.insert(g);
        }
    }
    return folds;
}

std::vector<FoldSplit> make_folds(const DatasetManifest& manifest, int k, std::optional<std::uint64_t> seed) {
    const auto instances = manifest.instances();
    return make_folds(std::span<const GarmentInstance>(instances), k, seed);
}

ValidationReport verify_folds(std::span<const FoldSplit> folds,
                              std::optional<std::span<const GarmentInstance>> universe) {
    ValidationReport report;
    if (folds.empty()) {
        report.add("coverage", "no folds");
        return report;
    }
    std::set<GarmentInstance> all;
    if (universe) {
        all.insert(universe->begin(), universe->end());
    } else {
        for (const auto& f : folds) {
            all.insert(f.train_instances.begin(), f.train_instances.end());
            all.insert(f.test_instances.begin(), f.test_instances.end());
        }
    }
    std::map<GarmentInstance, std::vector<int>> tested_in;
    for (const auto& f : folds) {
        for (const auto& g : f.test_instances) {
            tested_in[g].push_back(f.fold_id);
            if (f.train_instances.contains(g)) {
                report.add("leakage", to_string(g) + " is in both train and test of fold " + std::to_string(f.fold_id),
                           f.fold_id);
            }
        }
        std::size_t missing = 0;
        for (const auto& g : all) {
            if (!f.train_instances.contains(g) && !f.test_instances.contains(g)) ++missing;
        }
        if (missing > 0) {
            report.add("incomplete", "fold " + std::to_string(f.fold_id) + " omits " + std::to_string(missing) +
                                         " instance(s) from both train and test", f.fold_id);
        }
    }
    for (const auto& g : all) {
        auto it = tested_in.find(g);
        if (it == tested_in.end()) {
            report.add("coverage", to_string(g) + " is never tested");
        } else if (it->second.size() > 1) {
            report.add("duplicate", to_string(g) + " is tested in " + std::to_string(it->second.size()) + " folds");
        }
    }
    return report;
}

AccuracyGrid::AccuracyGrid(int folds) : folds_(folds), cells_(static_cast<std::size_t>(kCategoryCount * folds)) {
    if (folds <= 0) throw ConfigError("grid needs at least one fold");
}

void AccuracyGrid::set(GarmentCategory category, int fold, double accuracy) {
    if (fold < 0 || fold >= folds_) throw Error("fold index out of range: " + std::to_string(fold));
    if (!(accuracy >= 0.0 && accuracy <= 100.0)) throw Error("accuracy must be a percentage");
    cells_[static_cast<std::size_t>(category_index(category) * folds_ + fold)] = accuracy;
}

std::optional<double> AccuracyGrid::get(GarmentCategory category, int fold) const {
    return cells_[static_cast<std::size_t>(category_index(category) * folds_ + fold)];
}

bool AccuracyGrid::complete() const noexcept {
    return std::all_of(cells_.begin(), cells_.end(), [](const auto& c) { return c.has_value(); });
}

EvalReport aggregate_report(const AccuracyGrid& grid, Modality modality) {
    if (!grid.complete()) throw Error("accuracy grid is incomplete");
    EvalReport r;
    r.modality = modality;
    r.folds = grid.folds();
    r.cells.reserve(static_cast<std::size_t>(kCategoryCount * r.folds));
    for (auto cat : kAllCategories) {
        for (int j = 0; j < r.folds; ++j) r.cells.push_back(*grid.get(cat, j));
    }
    r.fold_averages.assign(static_cast<std::size_t>(r.folds), 0.0);
    for (int j = 0; j < r.folds; ++j) {
        double s = 0.0;
        for (auto cat : kAllCategories) s += r.cell(cat, j);
        r.fold_averages[static_cast<std::size_t>(j)] = s / kCategoryCount;
    }
    double s = 0.0;
    for (double v : r.fold_averages) s += v;
    r.overall_average = s / r.folds;
    return r;
}

namespace {

std::string fixed1(double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(1) << v;
    return o.str();
}

}  // namespace

std::string report_to_csv(std::span<const EvalReport> reports) {
    std::ostringstream out;
    int folds = 0;
    for (const auto& r : reports) folds = std::max(folds, r.folds);
    out << "modality,category";
    for (int j = 0; j < folds; ++j) out << ",fold_" << (j + 1);
    out << '\n';
    out << std::setprecision(10);
    for (const auto& r : reports) {
        for (auto cat : kReportRowOrder) {
            out << to_string(r.modality) << ',' << to_string(cat);
            for (int j = 0; j < r.folds; ++j) out << ',' << r.cell(cat, j);
            out << '\n';
        }
        out << to_string(r.modality) << ",average";
        for (double v : r.fold_averages) out << ',' << v;
        out << '\n';
        out << to_string(r.modality) << ",AVERAGE," << r.overall_average << '\n';
    }
    return out.str();
}

std::string render_report_table(std::span<const EvalReport> reports) {
    constexpr int kLabel = 9;
    constexpr int kCell = 7;
    std::vector<std::vector<std::string>> blocks;
    for (const auto& r : reports) {
        std::vector<std::string> lines;
        std::ostringstream head;
        std::string name(to_string(r.modality));
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
        head << std::left << std::setw(kLabel) << name;
        for (int j = 0; j < r.folds; ++j) head << std::right << std::setw(kCell) << (j + 1);
        lines.push_back(head.str());
        for (auto cat : kReportRowOrder) {
            std::ostringstream row;
            row << std::left << std::setw(kLabel) << to_string(cat);
            for (int j = 0; j < r.folds; ++j) row << std::right << std::setw(kCell) << fixed1(r.cell(cat, j));
            lines.push_back(row.str());
        }
        std::ostringstream avg;
        avg << std::left << std::setw(kLabel) << "average";
        for (double v : r.fold_averages) avg << std::right << std::setw(kCell) << fixed1(v);
        lines.push_back(avg.str());
        std::ostringstream total;
        const int width = kLabel + kCell * r.folds;
        total << std::left << std::setw(width) << ("AVERAGE: " + fixed1(r.overall_average));
        lines.push_back(total.str());
        blocks.push_back(std::move(lines));
    }
    std::ostringstream out;
    std::size_t rows = 0;
    for (const auto& b : blocks) rows = std::max(rows, b.size());
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            if (b > 0) out << " | ";
            out << (i < blocks[b].size() ? blocks[b][i] : std::string());
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace kcflat
